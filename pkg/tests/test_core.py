"""Domain types: traces, vocabulary construction, dataset stats, round trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TABLE1_CALLS, md5_of
from tracebench.core import (
    CLS_ID,
    MASK_ID,
    PAD_ID,
    RESERVED_TOKENS,
    UNK,
    UNK_ID,
    Dataset,
    Embedding,
    Trace,
    Vocabulary,
    build_vocabulary,
    dataset_stats,
    embeddings_to_matrix,
    load_jsonl,
    save_jsonl,
)
from tracebench.errors import InvalidInput


def trace(tag, calls, family=1, provenance="real"):
    return Trace(filemd5=md5_of(tag), calls=tuple(calls), family=family, provenance=provenance)


class TestTrace:
    def test_valid_construction(self):
        t = trace("ok", ("a", "b"))
        assert t.calls == ("a", "b")
        assert t.family == 1

    def test_empty_calls_rejected(self):
        with pytest.raises(InvalidInput):
            trace("empty", ())

    def test_whitespace_token_rejected(self):
        with pytest.raises(InvalidInput):
            trace("ws", ("a b",))
        with pytest.raises(InvalidInput):
            trace("blank", ("",))

    def test_family_zero_rejected(self):
        with pytest.raises(InvalidInput):
            trace("fam0", ("a",), family=0)

    def test_outlier_family_allowed(self):
        assert trace("out", ("a",), family=-1).family == -1

    def test_unknown_provenance_rejected(self):
        with pytest.raises(InvalidInput):
            trace("prov", ("a",), provenance="copied")


class TestVocabulary:
    def test_reserved_ids_occupy_lowest_indices(self):
        v = build_vocabulary([trace("r", ("a", "a"))])
        assert (PAD_ID, CLS_ID, MASK_ID, UNK_ID) == (0, 1, 2, 3)
        assert tuple(v.tokens[:4]) == RESERVED_TOKENS

    def test_min_count_threshold(self):
        # a appears 3 times, b once; min_count=2 keeps only a.
        v = build_vocabulary([trace("t", ("a", "a", "a", "b"))], min_count=2)
        assert "a" in v
        assert "b" not in v
        assert v.id_of("b") == UNK_ID
        assert v.id_of("a") > UNK_ID

    def test_table1_tokens_present(self):
        v = build_vocabulary([trace("t1", TABLE1_CALLS)], min_count=1)
        for tok in ("base64_decode", "eval", "assert"):
            assert tok in v

    def test_frequency_ordering_with_lexicographic_ties(self):
        v = build_vocabulary(
            [trace("o", ("z", "z", "z", "m", "m", "b", "b"))], min_count=1
        )
        # z (3) before the tied pair, then b before m lexicographically.
        assert v.tokens[4:] == ["z", "b", "m"]

    def test_round_trip_ids(self):
        v = build_vocabulary([trace("rt", ("f", "g", "f"))], min_count=1)
        for tok in ("f", "g"):
            tid = v.id_of(tok)
            assert v.id_of(v.token_of(tid)) == tid

    def test_unk_pools_collapsed_frequency(self):
        v = build_vocabulary([trace("u", ("a", "a", "b", "c"))], min_count=2)
        assert v.frequency_of(UNK_ID) == 2  # b and c, one occurrence each
        assert v.token_of(UNK_ID) == UNK

    def test_empty_corpus_rejected(self):
        with pytest.raises(InvalidInput):
            build_vocabulary([])

    @given(
        tokens=st.lists(
            st.sampled_from(["f1", "f2", "f3", "f4", "f5"]), min_size=1, max_size=30
        ),
        cut=st.integers(min_value=1, max_value=29),
    )
    @settings(max_examples=50, deadline=None)
    def test_trace_order_does_not_matter(self, tokens, cut):
        cut = min(cut, len(tokens) - 1) or 1
        if cut >= len(tokens):
            parts = [tokens]
        else:
            parts = [tokens[:cut], tokens[cut:]]
        traces = [trace(f"p{i}", p) for i, p in enumerate(parts) if p]
        a = build_vocabulary(traces, min_count=1)
        b = build_vocabulary(list(reversed(traces)), min_count=1)
        assert a.tokens == b.tokens


class TestDataset:
    def test_empty_dataset_stats(self):
        ds = Dataset(name="empty", traces=())
        assert dataset_stats(ds) == (0, 0, 0)

    def test_stats_counts_families_and_outliers(self):
        ds = Dataset(
            name="tiny",
            traces=(
                trace("a", ("x",), family=5),
                trace("b", ("x",), family=5),
                trace("c", ("x",), family=-1),
            ),
        )
        assert ds.stats == (3, 1, 1)
        assert ds.families == [5]

    def test_duplicate_filemd5_rejected(self):
        t = trace("dup", ("x",))
        with pytest.raises(InvalidInput):
            Dataset(name="d", traces=(t, t))

    def test_stats_invariant_under_permutation(self):
        traces = [trace(f"s{i}", ("x",), family=(i % 3) + 1) for i in range(9)]
        forward = Dataset(name="f", traces=tuple(traces))
        backward = Dataset(name="b", traces=tuple(reversed(traces)))
        assert forward.stats == backward.stats

    def test_jsonl_round_trip(self, tmp_path):
        ds = Dataset(
            name="rt",
            traces=(
                trace("j1", ("alpha", "beta"), family=2),
                trace("j2", ("gamma",), family=-1, provenance="synthetic-blend"),
            ),
        )
        path = tmp_path / "ds.jsonl"
        save_jsonl(ds, path)
        loaded = load_jsonl(path, name="rt")
        assert loaded.name == ds.name
        assert loaded.traces == ds.traces

    def test_labels_vector(self):
        ds = Dataset(
            name="lv",
            traces=(trace("l1", ("x",), family=3), trace("l2", ("x",), family=-1)),
        )
        assert np.array_equal(ds.labels(), np.array([3, -1]))


class TestEmbedding:
    def test_nonfinite_rejected(self):
        with pytest.raises(InvalidInput):
            Embedding(vector=np.array([1.0, np.nan]), sample_id="s", method="m")
        with pytest.raises(InvalidInput):
            Embedding(vector=np.array([np.inf]), sample_id="s", method="m")

    def test_matrix_stacking(self):
        embs = [
            Embedding(vector=np.array([1.0, 2.0]), sample_id="a", method="m"),
            Embedding(vector=np.array([3.0, 4.0]), sample_id="b", method="m"),
        ]
        X, ids = embeddings_to_matrix(embs)
        assert X.shape == (2, 2)
        assert ids == ["a", "b"]
        assert np.allclose(X[1], [3.0, 4.0])

    def test_mixed_dims_rejected(self):
        embs = [
            Embedding(vector=np.zeros(2), sample_id="a", method="m"),
            Embedding(vector=np.zeros(3), sample_id="b", method="m"),
        ]
        with pytest.raises(InvalidInput):
            embeddings_to_matrix(embs)
