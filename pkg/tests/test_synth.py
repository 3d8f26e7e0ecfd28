"""Grammar synthesis, filtering, and the mock-endpoint augmentation client."""

import numpy as np
import pytest

from conftest import md5_of
from tracebench.abstraction import pair_events
from tracebench.core import Embedding, Trace
from tracebench.errors import AugmentError, InvalidConfig, InvalidGrammar, InvalidInput
from tracebench.synth import (
    BUILTIN_RECIPES,
    REASON_BAD_NAME,
    REASON_EMPTY,
    REASON_LENGTH,
    REASON_MALFORMED,
    AugmentationRequest,
    FamilyGrammar,
    SynthRecipe,
    automated_filter,
    blend_families,
    distance_outlier_filter,
    generate_family,
    llm_augment,
    load_recipe,
    make_family_grammars,
    synthesize_dataset,
    synthetic_vocabulary,
)


def grammar(family_id=1, motifs=((("m", "x"),),), junk=(), **rates):
    return FamilyGrammar(
        family_id=family_id, core_motifs=tuple(motifs), junk_pool=tuple(junk), **rates
    )


def pair_stream(trace):
    return [(e.caller, e.callee) for e in pair_events(trace)]


def contains_subsequence(stream, motif):
    it = iter(stream)
    return all(pair in it for pair in (tuple(p) for p in motif))


class TestFamilyGrammar:
    def test_rates_must_stay_within_unit_budget(self):
        with pytest.raises(InvalidGrammar):
            grammar(junk=("j",), p_ins=0.6, p_del=0.3, p_swap=0.3)

    def test_insertion_without_junk_pool_rejected(self):
        with pytest.raises(InvalidGrammar):
            grammar(p_ins=0.2)

    def test_motif_tokens_outside_vocabulary_rejected(self):
        with pytest.raises(InvalidGrammar):
            FamilyGrammar(
                family_id=1,
                core_motifs=((("m", "x"),),),
                vocabulary=frozenset({"m"}),  # x missing
            )

    def test_empty_motifs_rejected(self):
        with pytest.raises(InvalidGrammar):
            grammar(motifs=())


class TestGenerateFamily:
    def test_zero_rates_yield_identical_concatenated_motifs(self):
        g = grammar(motifs=((("m", "x"),), (("m", "y"),)))
        traces = generate_family(g, n=2, seed=0)
        assert len(traces) == 2
        assert traces[0].calls == traces[1].calls == ("m", "x", "m", "y")

    def test_all_mutated_traces_contain_every_motif(self):
        g = grammar(
            motifs=((("m", "a"), ("a", "b")), (("m", "c"),)),
            junk=("j1", "j2"),
            p_ins=0.2,
            p_del=0.05,
            p_swap=0.1,
        )
        traces = generate_family(g, n=100, seed=3)
        assert len(traces) == 100
        for tr in traces:
            stream = pair_stream(tr)
            for motif in g.core_motifs:
                assert contains_subsequence(stream, motif)

    def test_deterministic_under_seed(self):
        g = grammar(junk=("j",), p_ins=0.3, p_swap=0.1)
        a = generate_family(g, n=10, seed=42)
        b = generate_family(g, n=10, seed=42)
        assert [(t.filemd5, t.calls) for t in a] == [(t.filemd5, t.calls) for t in b]
        c = generate_family(g, n=10, seed=43)
        assert [t.calls for t in a] != [t.calls for t in c]

    def test_output_passes_own_filter(self):
        rng = np.random.default_rng(5)
        for trial in range(10):
            n_motifs = int(rng.integers(1, 4))
            motifs = tuple(
                tuple(
                    (f"c{rng.integers(4)}", f"e{rng.integers(6)}")
                    for _ in range(int(rng.integers(1, 4)))
                )
                for _ in range(n_motifs)
            )
            g = FamilyGrammar(
                family_id=trial + 1,
                core_motifs=motifs,
                junk_pool=("jk",),
                p_ins=float(rng.uniform(0, 0.3)),
                p_del=float(rng.uniform(0, 0.2)),
                p_swap=float(rng.uniform(0, 0.2)),
            )
            traces = generate_family(g, n=20, seed=trial)
            vocab = synthetic_vocabulary([g])
            accepted, rejected = automated_filter(traces, vocab, min_len=1, max_len=10_000)
            assert rejected == []
            assert len(accepted) == 20

    def test_provenance_is_never_real(self):
        g = grammar()
        assert all(t.provenance == "synthetic-intra" for t in generate_family(g, 5, 0))

    def test_n_below_one_rejected(self):
        with pytest.raises(InvalidInput):
            generate_family(grammar(), n=0, seed=0)


class TestBlendFamilies:
    def test_blend_carries_motifs_from_both_parents(self):
        ga = grammar(family_id=1, motifs=((("m", "x"),),))
        gb = grammar(family_id=2, motifs=((("m", "y"),),))
        traces = blend_families(ga, gb, n=5, seed=0)
        for tr in traces:
            stream = pair_stream(tr)
            assert ("m", "x") in stream and ("m", "y") in stream

    def test_outlier_label_default(self):
        ga, gb = grammar(family_id=1), grammar(family_id=2, motifs=((("m", "y"),),))
        assert all(t.family == -1 for t in blend_families(ga, gb, 4, 0))

    def test_new_family_label(self):
        ga, gb = grammar(family_id=1), grammar(family_id=2, motifs=((("m", "y"),),))
        traces = blend_families(ga, gb, 4, 0, family=9)
        assert all(t.family == 9 for t in traces)
        assert all(t.provenance == "synthetic-blend" for t in traces)

    def test_same_parent_rejected(self):
        g = grammar()
        with pytest.raises(InvalidInput):
            blend_families(g, g, 2, 0)

    def test_disjoint_vocabulary_blends_touch_both_parents(self):
        ga = grammar(family_id=1, motifs=((("a1", "a2"), ("a1", "a3")),))
        gb = grammar(family_id=2, motifs=((("b1", "b2"), ("b1", "b3")),))
        for tr in blend_families(ga, gb, n=50, seed=7):
            toks = set(tr.calls)
            assert toks & ga.own_tokens()
            assert toks & gb.own_tokens()


class TestAutomatedFilter:
    def vocab(self):
        return synthetic_vocabulary([grammar(motifs=((("m", "x"), ("m", "y")),))])

    def test_unknown_function_name_rejected(self):
        t = Trace(filemd5=md5_of("bad"), calls=("m", "zzz"), family=1,
                  provenance="synthetic-intra")
        accepted, rejected = automated_filter([t], self.vocab())
        assert accepted == []
        assert rejected == [(t.filemd5, REASON_BAD_NAME)]

    def test_valid_trace_accepted(self):
        t = Trace(filemd5=md5_of("ok"), calls=("m", "x"), family=1,
                  provenance="synthetic-intra")
        accepted, rejected = automated_filter([t], self.vocab())
        assert accepted == [t] and rejected == []

    def test_batch_counting(self):
        vocab = self.vocab()
        good = [
            Trace(filemd5=md5_of(f"g{i}"), calls=("m", "x"), family=1,
                  provenance="synthetic-intra")
            for i in range(7)
        ]
        bad = [
            {"filemd5": md5_of("b0"), "calls": []},
            {"filemd5": md5_of("b1"), "calls": ["m", "nope"]},
            {"filemd5": md5_of("b2"), "calls": ["m", "x"] * 400},
        ]
        accepted, rejected = automated_filter(good + bad, vocab, min_len=2, max_len=512)
        assert (len(accepted), len(rejected)) == (7, 3)
        reasons = {r for _, r in rejected}
        assert reasons == {REASON_EMPTY, REASON_BAD_NAME, REASON_LENGTH}

    def test_dict_claiming_real_provenance_rejected(self):
        cand = {"filemd5": md5_of("fake"), "calls": ["m", "x"], "provenance": "real"}
        accepted, rejected = automated_filter([cand], self.vocab())
        assert accepted == []
        assert rejected[0][1] == REASON_MALFORMED


class TestDistanceOutlierFilter:
    def embedding(self, vec, tag):
        return Embedding(vector=np.asarray(vec, dtype=np.float64),
                         sample_id=md5_of(tag), method="fix")

    def test_centroid_always_survives(self):
        center = self.embedding(np.zeros(4), "c")
        real = [self.embedding(np.ones(4) * s, f"r{s}") for s in (0.5, 1.0, 2.0)]
        kept = distance_outlier_filter([center], center, real, radius_multiplier=0.1)
        assert kept == [center]

    def test_zero_multiplier_keeps_exact_matches_only(self):
        center = self.embedding([1.0, 1.0], "c")
        near = self.embedding([1.0, 1.0 + 1e-9], "n")
        exact = self.embedding([1.0, 1.0], "e")
        real = [self.embedding([2.0, 2.0], "r")]
        kept = distance_outlier_filter([near, exact], center, real, radius_multiplier=0.0)
        assert kept == [exact]

    def test_far_point_rejected_from_gaussian_cloud(self):
        rng = np.random.default_rng(17)
        center = self.embedding(np.zeros(8), "c")
        real = [self.embedding(rng.normal(size=8), f"r{i}") for i in range(200)]
        median = np.median([np.linalg.norm(e.vector) for e in real])
        far = self.embedding(np.full(8, 10.0 * median / np.sqrt(8)), "far")
        near = self.embedding(rng.normal(size=8) * 0.1, "near")
        kept = distance_outlier_filter([far, near], center, real, radius_multiplier=3.0)
        kept_ids = {e.sample_id for e in kept}
        assert far.sample_id not in kept_ids
        assert near.sample_id in kept_ids

    def test_empty_reference_set_rejected(self):
        center = self.embedding([0.0], "c")
        with pytest.raises(InvalidInput):
            distance_outlier_filter([center], center, [], radius_multiplier=3.0)


class TestLlmAugment:
    def request(self, mode="intra", families=(1,), **kw):
        return AugmentationRequest(mode=mode, source_families=tuple(families), **kw)

    def vocab(self):
        return synthetic_vocabulary(
            [grammar(motifs=((("m", "x"), ("m", "y"), ("m", "z")),))]
        )

    def examples(self):
        return [
            Trace(filemd5=md5_of("ex"), calls=("m", "x"), family=1,
                  provenance="synthetic-intra")
        ]

    def test_well_formed_completion_round_trip(self):
        completion = '["m", "x", "m", "y"]\n["m", "z", "m", "x"]\n'
        result = llm_augment(
            self.request(),
            {1: "uploads then evaluates"},
            self.examples(),
            self.vocab(),
            transport=lambda payload: completion,
        )
        assert len(result.traces) == 2
        assert all(t.provenance == "synthetic-intra" for t in result.traces)
        assert all(t.family == 1 for t in result.traces)
        assert result.rejections == []
        assert result.attempts == 1

    def test_prose_completion_yields_single_malformed_rejection(self):
        result = llm_augment(
            self.request(),
            {1: "desc"},
            self.examples(),
            self.vocab(),
            transport=lambda payload: "I cannot produce traces for you today.",
        )
        assert result.traces == []
        assert len(result.rejections) == 1
        assert result.rejections[0][1] == REASON_MALFORMED

    def test_endpoint_down_raises_after_three_attempts(self):
        calls = []

        def failing(payload):
            calls.append(1)
            raise ConnectionError("refused")

        with pytest.raises(AugmentError, match="3 attempts"):
            llm_augment(
                self.request(),
                {1: "desc"},
                self.examples(),
                self.vocab(),
                transport=failing,
                backoff_base=0.0,
            )
        assert len(calls) == 3

    def test_flaky_endpoint_retries_then_succeeds(self):
        state = {"n": 0}

        def flaky(payload):
            state["n"] += 1
            if state["n"] < 3:
                raise TimeoutError("slow")
            return '["m", "x"]'

        result = llm_augment(
            self.request(), {1: "desc"}, self.examples(), self.vocab(),
            transport=flaky, backoff_base=0.0, min_len=1,
        )
        assert result.attempts == 3
        assert len(result.traces) == 1

    def test_numbered_list_lines_parse(self):
        completion = '1. ["m", "x"]\n2) ["m", "y"]\n'
        result = llm_augment(
            self.request(), {1: "d"}, self.examples(), self.vocab(),
            transport=lambda p: completion, min_len=1,
        )
        assert len(result.traces) == 2

    def test_blend_mode_labels_target_family(self):
        req = self.request(mode="blend", families=(1, 2), target_family=-1)
        result = llm_augment(
            req, {1: "a", 2: "b"}, self.examples(), self.vocab(),
            transport=lambda p: '["m", "x"]', min_len=1,
        )
        assert result.traces[0].family == -1
        assert result.traces[0].provenance == "synthetic-blend"

    def test_prompt_carries_family_description_and_examples(self):
        seen = {}

        def capture(payload):
            seen.update(payload)
            return '["m", "x"]'

        llm_augment(
            self.request(), {1: "reverse shell loader"}, self.examples(), self.vocab(),
            transport=capture, min_len=1,
        )
        user_msg = seen["messages"][1]["content"]
        assert "reverse shell loader" in user_msg
        assert '"m"' in user_msg  # example trace rendered into the prompt

    def test_intra_mode_requires_single_family(self):
        with pytest.raises(InvalidInput):
            self.request(mode="intra", families=(1, 2))

    def test_blend_mode_requires_two_distinct_families(self):
        with pytest.raises(InvalidInput):
            self.request(mode="blend", families=(3, 3))


class TestRecipes:
    def test_ds1_shape_matches_published_statistics(self):
        ds = synthesize_dataset(BUILTIN_RECIPES["ds1"])
        assert ds.stats == (452, 21, 1)

    def test_custom_recipe_shape(self):
        ds = synthesize_dataset(
            SynthRecipe(name="mini", n_families=3, n_samples=20, n_outliers=2, seed=1)
        )
        assert ds.stats == (20, 3, 2)
        assert all(t.provenance != "real" for t in ds.traces)

    def test_synthesis_deterministic(self):
        r = SynthRecipe(name="det", n_families=2, n_samples=10, seed=9)
        a, b = synthesize_dataset(r), synthesize_dataset(r)
        assert a.traces == b.traces

    def test_builtin_names_resolve(self):
        assert load_recipe("ds2").n_samples == 553

    def test_yaml_recipe_round_trip(self, tmp_path):
        path = tmp_path / "r.yaml"
        path.write_text(
            "name: custom\nn_families: 2\nn_samples: 8\nseed: 4\n", encoding="utf-8"
        )
        r = load_recipe(path)
        assert (r.name, r.n_families, r.n_samples) == ("custom", 2, 8)

    def test_unknown_recipe_keys_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("name: x\nn_families: 2\nn_samples: 8\nbogus: 1\n")
        with pytest.raises(InvalidConfig, match="bogus"):
            load_recipe(path)

    def test_undersized_recipe_rejected(self):
        with pytest.raises(InvalidConfig):
            SynthRecipe(name="tiny", n_families=5, n_samples=6)

    def test_grammar_overlap_within_recipe_bounds(self):
        recipe = SynthRecipe(name="ov", n_families=4, n_samples=30, seed=2)
        grammars = make_family_grammars(recipe, np.random.default_rng(recipe.seed))
        assert len(grammars) == 4
        assert len({g.family_id for g in grammars}) == 4
