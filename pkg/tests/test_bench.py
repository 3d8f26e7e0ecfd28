"""Benchmark configuration, orchestration, reporting, and the CLI.

The runner smoke tests use a small synthetic recipe with a pruned method
matrix so a full two-stage pass stays under a few seconds.
"""

from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from tracebench.bench import (
    BenchConfig,
    BenchResultStore,
    Cell,
    CellResult,
    default_methods,
    emit_matrix_report,
    emit_rankings,
    export_projection,
    load_config,
    load_embeddings_npz,
    run_benchmark,
    save_embeddings_npz,
)
from tracebench.bench.runner import load_results
from tracebench.cli import main as cli_main
from tracebench.core import Embedding
from tracebench.errors import ConfigError, InvalidInput

MINI_RECIPE = {"name": "mini", "n_families": 3, "n_samples": 20, "n_outliers": 2, "seed": 1}


def write_mini_recipe(dir_path) -> Path:
    path = Path(dir_path) / "mini.yaml"
    path.write_text(yaml.safe_dump(MINI_RECIPE))
    return path


# -- configuration ---------------------------------------------------------------


class TestBenchConfig:
    def test_default_matrix_has_twenty_eight_cells(self):
        cfg = BenchConfig(dataset={"recipe": "mini"})
        cells = cfg.cells()
        assert len(cells) == 28
        by_abs = {a: sum(1 for c in cells if c.abstraction == a) for a in ("sequence", "graph", "tree")}
        assert by_abs == {"sequence": 12, "graph": 8, "tree": 8}

    def test_default_methods_respects_abstraction_subset(self):
        methods = default_methods(("tree",))
        assert set(methods) == {"tree"}
        assert set(methods["tree"]) == {"kernel", "ted", "gnn", "graph2vec"}

    def test_illegal_variant_names_the_key_path(self):
        with pytest.raises(ConfigError, match=r"methods\.sequence\.cbow"):
            BenchConfig(
                dataset={"recipe": "mini"},
                abstractions=("sequence",),
                methods={"sequence": {"cbow": ["cls"]}},
            )

    def test_method_for_disabled_abstraction_rejected(self):
        with pytest.raises(ConfigError, match="not enabled"):
            BenchConfig(
                dataset={"recipe": "mini"},
                abstractions=("sequence",),
                methods={"graph": {"ged": ["-"]}},
            )

    def test_variants_must_be_a_list(self):
        with pytest.raises(ConfigError, match="must be a list"):
            BenchConfig(
                dataset={"recipe": "mini"},
                methods={"sequence": {"cbow": "avg"}},
            )

    def test_dataset_requires_exactly_one_source(self):
        with pytest.raises(ConfigError, match="exactly one"):
            BenchConfig(dataset={"recipe": "mini", "path": "x.jsonl"})
        with pytest.raises(ConfigError, match="exactly one"):
            BenchConfig(dataset={})

    def test_unknown_dataset_key_rejected(self):
        with pytest.raises(ConfigError, match=r"dataset\.fmt"):
            BenchConfig(dataset={"recipe": "mini", "fmt": "jsonl"})

    def test_unknown_classifier_rejected(self):
        with pytest.raises(ConfigError, match="classifiers"):
            BenchConfig(dataset={"recipe": "mini"}, classifiers=("kmeans", "dbscan"))

    def test_override_keys_must_be_method_names(self):
        with pytest.raises(ConfigError, match=r"overrides\.word2vec"):
            BenchConfig(dataset={"recipe": "mini"}, overrides={"word2vec": {}})

    def test_eval_option_names_validated(self):
        with pytest.raises(ConfigError, match=r"eval\.folds"):
            BenchConfig(dataset={"recipe": "mini"}, eval_options={"folds": 3})

    def test_positive_integer_fields_validated(self):
        with pytest.raises(ConfigError, match="seeds"):
            BenchConfig(dataset={"recipe": "mini"}, seeds=0)
        with pytest.raises(ConfigError, match="dim"):
            BenchConfig(dataset={"recipe": "mini"}, dim=-1)

    def test_dataset_name_precedence(self):
        assert BenchConfig(dataset={"recipe": "mini", "name": "custom"}).dataset_name == "custom"
        assert BenchConfig(dataset={"recipe": "mini"}).dataset_name == "mini"
        assert BenchConfig(dataset={"path": "/data/ds9.jsonl"}).dataset_name == "ds9"


class TestLoadConfig:
    def write(self, tmp_path, payload):
        path = tmp_path / "bench.yaml"
        path.write_text(yaml.safe_dump(payload))
        return path

    def test_minimal_file_gets_defaults(self, tmp_path):
        cfg = load_config(self.write(tmp_path, {"dataset": {"recipe": "mini"}}))
        assert cfg.seeds == 10
        assert cfg.dim == 128
        assert len(cfg.cells()) == 28

    def test_unknown_top_level_key_rejected(self, tmp_path):
        path = self.write(tmp_path, {"dataset": {"recipe": "mini"}, "paralellism": 4})
        with pytest.raises(ConfigError, match="paralellism"):
            load_config(path)

    def test_missing_dataset_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="dataset"):
            load_config(self.write(tmp_path, {"seeds": 3}))

    def test_invalid_yaml_rejected(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("dataset: [unclosed\n")
        with pytest.raises(ConfigError, match="not valid YAML"):
            load_config(path)

    def test_non_mapping_top_level_rejected(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- a\n- b\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(path)

    def test_eval_section_maps_to_eval_options(self, tmp_path):
        cfg = load_config(
            self.write(
                tmp_path,
                {"dataset": {"recipe": "mini"}, "eval": {"score_outliers": True}},
            )
        )
        assert cfg.eval_options == {"score_outliers": True}

    def test_round_trips_through_to_dict(self, tmp_path):
        cfg = load_config(self.write(tmp_path, {"dataset": {"recipe": "mini"}, "seeds": 4}))
        # to_dict uses the YAML key "eval"; the constructor kwarg differs.
        payload = cfg.to_dict()
        payload["eval_options"] = payload.pop("eval")
        clone = BenchConfig(**payload)
        assert clone.cells() == cfg.cells()
        assert clone.seeds == 4


# -- embedding cache and result store ----------------------------------------------


class TestEmbeddingCache:
    def test_round_trip_preserves_vectors_ids_method(self, tmp_path):
        rng = np.random.default_rng(0)
        embs = [
            Embedding(vector=rng.normal(size=6), sample_id=f"s{i}", method="toy")
            for i in range(4)
        ]
        path = tmp_path / "cache.npz"
        save_embeddings_npz(path, embs)
        back = load_embeddings_npz(path)
        assert [e.sample_id for e in back] == ["s0", "s1", "s2", "s3"]
        assert all(e.method == "toy" for e in back)
        for a, b in zip(embs, back):
            np.testing.assert_array_equal(a.vector, b.vector)

    def test_empty_save_rejected(self, tmp_path):
        with pytest.raises(InvalidInput):
            save_embeddings_npz(tmp_path / "x.npz", [])


def ok_result(abstraction, method, variant, classifier, mean, dataset="d1", metric="accuracy"):
    return CellResult(
        dataset=dataset,
        abstraction=abstraction,
        method=method,
        variant=variant,
        classifier=classifier,
        metrics={metric: {"mean": mean, "std": 0.0, "per_seed": [mean]}},
    )


class TestBenchResultStore:
    def test_duplicate_key_rejected(self):
        r = ok_result("tree", "ted", "-", "kmeans", 0.5)
        dup = ok_result("tree", "ted", "-", "kmeans", 0.7)
        with pytest.raises(InvalidInput, match="duplicate"):
            BenchResultStore(dataset="d1", config={}, results=[r, dup])

    def test_write_and_load_round_trip(self, tmp_path):
        store = BenchResultStore(
            dataset="d1",
            config={"seeds": 2},
            results=[
                ok_result("tree", "ted", "-", "kmeans", 0.5),
                CellResult(
                    dataset="d1", abstraction="graph", method="ged", variant="-",
                    classifier="svm", status="failed", error="stage1 KernelOverflow: boom",
                ),
            ],
            stage1=[{"abstraction": "tree", "method": "ted", "variant": "-", "status": "computed"}],
        )
        csv_path, json_path = store.write(tmp_path)
        assert csv_path.exists() and json_path.exists()
        back = load_results(tmp_path)
        assert back.to_json_dict() == store.to_json_dict()
        assert back.config == {"seeds": 2}

    def test_failed_rows_keep_csv_shape(self, tmp_path):
        store = BenchResultStore(
            dataset="d1",
            config={},
            results=[
                CellResult(
                    dataset="d1", abstraction="graph", method="ged", variant="-",
                    classifier="svm", status="failed", error="boom, with commas\nand newline",
                )
            ],
        )
        csv_path, _ = store.write(tmp_path)
        lines = csv_path.read_text().strip().splitlines()
        header, row = lines[0], lines[1]
        assert len(row.split(",")) == len(header.split(","))
        assert "boom; with commas and newline" in row
        assert ",failed," in row

    def test_load_results_requires_json(self, tmp_path):
        with pytest.raises(InvalidInput, match="results.json"):
            load_results(tmp_path)


# -- runner smoke test ----------------------------------------------------------------


def smoke_config(out_dir, recipe_path, workers=1):
    return BenchConfig(
        dataset={"recipe_file": str(recipe_path)},
        out_dir=str(out_dir),
        seeds=2,
        dim=8,
        max_len=32,
        workers=workers,
        abstractions=("sequence", "tree"),
        methods={
            "sequence": {"cbow": ["avg", "concat"]},
            "tree": {"ted": ["-"], "kernel": ["subtree"]},
        },
        classifiers=("kmeans", "svm"),
        overrides={"cbow": {"epochs": 3}},
    )


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("bench-smoke")
    recipe = write_mini_recipe(out_dir)
    cfg = smoke_config(out_dir, recipe)
    store = run_benchmark(cfg)
    return cfg, out_dir, recipe, store


class TestRunBenchmark:
    def test_every_cell_classifier_pair_has_a_row(self, smoke_run):
        cfg, _out, _recipe, store = smoke_run
        assert len(store.results) == len(cfg.cells()) * len(cfg.classifiers) == 8
        keys = {r.key for r in store.results}
        for cell in cfg.cells():
            for clf in cfg.classifiers:
                assert (store.dataset, *cell, clf) in keys

    def test_all_cells_succeed_with_expected_metrics(self, smoke_run):
        _cfg, _out, _recipe, store = smoke_run
        assert all(r.status == "ok" for r in store.results)
        for r in store.results:
            expected = {"accuracy", "nmi"} if r.classifier == "kmeans" else {"accuracy", "macro_f1"}
            assert set(r.metrics) == expected
            for m in r.metrics.values():
                assert len(m["per_seed"]) == 2
                assert 0.0 <= m["mean"] <= 1.0

    def test_stage1_caches_exist_per_variant(self, smoke_run):
        _cfg, out_dir, _recipe, store = smoke_run
        emb_dir = out_dir / "embeddings"
        expected = {
            "sequence__cbow__avg.npz",
            "sequence__cbow__concat.npz",
            "tree__ted__novariant.npz",
            "tree__kernel__subtree.npz",
        }
        assert {p.name for p in emb_dir.glob("*.npz")} == expected
        assert all(rec["status"] == "computed" for rec in store.stage1)
        embs = load_embeddings_npz(emb_dir / "sequence__cbow__avg.npz")
        assert len(embs) == 20
        assert embs[0].method == "sequence-cbow-avg"

    def test_results_files_written(self, smoke_run):
        _cfg, out_dir, _recipe, _store = smoke_run
        lines = (out_dir / "results.csv").read_text().strip().splitlines()
        # header + 8 results x 2 metrics
        assert len(lines) == 17
        assert lines[0].startswith("dataset,abstraction,method,variant,classifier")
        assert (out_dir / "results.json").exists()

    def test_resume_reuses_caches_and_reproduces_csv(self, smoke_run):
        _cfg, out_dir, recipe, _store = smoke_run
        before = (out_dir / "results.csv").read_bytes()
        mtimes = {p.name: p.stat().st_mtime_ns for p in (out_dir / "embeddings").glob("*.npz")}
        store = run_benchmark(smoke_config(out_dir, recipe), resume=True)
        assert all(rec["status"] == "cached" for rec in store.stage1)
        after = {p.name: p.stat().st_mtime_ns for p in (out_dir / "embeddings").glob("*.npz")}
        assert after == mtimes
        assert (out_dir / "results.csv").read_bytes() == before

    def test_parallel_workers_reproduce_single_worker_csv(self, smoke_run, tmp_path):
        _cfg, out_dir, recipe, _store = smoke_run
        run_benchmark(smoke_config(tmp_path, recipe, workers=3))
        assert (tmp_path / "results.csv").read_bytes() == (out_dir / "results.csv").read_bytes()

    def test_stage1_failure_poisons_only_its_cells(self, tmp_path):
        cfg = BenchConfig(
            dataset={"recipe_file": str(write_mini_recipe(tmp_path))},
            out_dir=str(tmp_path),
            seeds=2,
            dim=8,
            abstractions=("tree",),
            methods={"tree": {"kernel": ["subtree"], "ted": ["-"]}},
            classifiers=("kmeans",),
            overrides={"kernel": {"bogus_knob": 1}},
        )
        store = run_benchmark(cfg)
        by_method = {r.method: r for r in store.results}
        assert by_method["kernel"].status == "failed"
        assert "stage1" in by_method["kernel"].error
        assert by_method["ted"].status == "ok"
        csv_text = (tmp_path / "results.csv").read_text()
        assert ",failed," in csv_text and ",ok," in csv_text


# -- reports ------------------------------------------------------------------------


def report_store():
    results = [
        ok_result("graph", "kernel", "path", "kmeans", 0.9),
        ok_result("tree", "kernel", "path", "kmeans", 0.7),
        ok_result("tree", "kernel", "path", "svm", 0.8, metric="macro_f1"),
        CellResult(
            dataset="d1", abstraction="graph", method="ged", variant="-",
            classifier="kmeans", status="failed", error="boom",
        ),
    ]
    return BenchResultStore(dataset="d1", config={}, results=results)


class TestMatrixReport:
    def test_csv_layout_and_row_order(self, tmp_path):
        path = emit_matrix_report(report_store(), tmp_path, format="csv")
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "abstraction,method,variant,kmeans_accuracy,kmeans_nmi,svm_accuracy,svm_macro_f1"
        assert lines[1].startswith("graph,kernel,path,0.900000,")
        assert lines[2].startswith("graph,ged,-,")
        assert lines[3].startswith("tree,kernel,path,0.700000,")
        # Failed and absent cells stay empty.
        assert lines[2] == "graph,ged,-,,,,"

    def test_markdown_flags_column_best_and_dashes_missing(self, tmp_path):
        path = emit_matrix_report(report_store(), tmp_path, format="markdown")
        text = path.read_text()
        assert "**0.9000**" in text
        assert "0.7000" in text and "**0.7000**" not in text
        assert "**0.8000**" in text  # sole svm row is its column max
        assert "| - |" in text

    def test_markdown_ties_flag_every_winner(self, tmp_path):
        store = BenchResultStore(
            dataset="d1",
            config={},
            results=[
                ok_result("graph", "kernel", "path", "kmeans", 0.75),
                ok_result("tree", "kernel", "path", "kmeans", 0.75),
            ],
        )
        text = emit_matrix_report(store, tmp_path, format="markdown").read_text()
        assert text.count("**0.7500**") == 2

    def test_heatmap_minmax_normalization(self, tmp_path):
        path = emit_matrix_report(report_store(), tmp_path, format="heatmap-data")
        rows = [line.split(",") for line in path.read_text().strip().splitlines()[1:]]
        by_cell = {(r[0], r[4]): r for r in rows}
        hi = by_cell[("graph", "0.900000")]
        lo = by_cell[("tree", "0.700000")]
        assert hi[5] == "1.000000" and hi[6] == "1"
        assert lo[5] == "0.000000" and lo[6] == "0"
        # Single-entry column normalizes to 1.
        solo = by_cell[("tree", "0.800000")]
        assert solo[5] == "1.000000" and solo[6] == "1"

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(InvalidInput, match="format"):
            emit_matrix_report(report_store(), tmp_path, format="xlsx")

    def test_empty_store_rejected(self, tmp_path):
        with pytest.raises(InvalidInput, match="empty"):
            emit_matrix_report(BenchResultStore(dataset="d", config={}), tmp_path)


class TestRankings:
    def test_scores_average_across_datasets(self, tmp_path):
        s1 = BenchResultStore(
            dataset="d1", config={}, results=[ok_result("tree", "ted", "-", "kmeans", 0.6)]
        )
        s2 = BenchResultStore(
            dataset="d2",
            config={},
            results=[ok_result("tree", "ted", "-", "kmeans", 0.8, dataset="d2")],
        )
        path = emit_rankings([s1, s2], tmp_path)
        lines = path.read_text().strip().splitlines()
        assert lines[1] == "kmeans,1,tree/ted/-,0.700000"

    def test_alphabetical_tiebreak_and_top_n(self, tmp_path):
        results = [
            ok_result("graph", "kernel", "path", "kmeans", 0.5),
            ok_result("graph", "ged", "-", "kmeans", 0.5),
            ok_result("graph", "graph2vec", "-", "kmeans", 0.4),
        ]
        store = BenchResultStore(dataset="d1", config={}, results=results)
        lines = emit_rankings(store, tmp_path, top_n=2).read_text().strip().splitlines()
        assert lines[1] == "kmeans,1,graph/ged/-,0.500000"
        assert lines[2] == "kmeans,2,graph/kernel/path,0.500000"
        assert len(lines) == 3

    def test_failed_results_ignored(self, tmp_path):
        results = [
            CellResult(dataset="d1", abstraction="tree", method="ted", variant="-",
                       classifier="kmeans", status="failed", error="x"),
            ok_result("tree", "kernel", "subtree", "kmeans", 0.3),
        ]
        store = BenchResultStore(dataset="d1", config={}, results=results)
        lines = emit_rankings(store, tmp_path).read_text().strip().splitlines()
        assert len(lines) == 2
        assert "ted" not in lines[1]


class TestProjection:
    def planar_embeddings(self, n=12, seed=0):
        rng = np.random.default_rng(seed)
        coords = rng.normal(size=(n, 2))
        basis, _ = np.linalg.qr(rng.normal(size=(5, 2)))
        X = coords @ basis.T + 3.0
        return [
            Embedding(vector=X[i], sample_id=f"s{i}", method="toy") for i in range(n)
        ], coords

    def test_projection_preserves_planar_geometry(self, tmp_path):
        embs, coords = self.planar_embeddings()
        path = export_projection(embs, tmp_path / "proj.csv")
        rows = [line.split(",") for line in path.read_text().strip().splitlines()[1:]]
        got = np.array([[float(r[2]), float(r[3])] for r in rows])
        want = coords - coords.mean(axis=0)
        # The CSV keeps 8 decimals, so compare at that precision.
        for i in range(len(got)):
            for j in range(i + 1, len(got)):
                assert np.linalg.norm(got[i] - got[j]) == pytest.approx(
                    np.linalg.norm(want[i] - want[j]), abs=1e-6
                )

    def test_two_points_collapse_to_one_axis(self, tmp_path):
        embs = [
            Embedding(vector=np.array([0.0, 0.0, 0.0]), sample_id="a"),
            Embedding(vector=np.array([3.0, 4.0, 0.0]), sample_id="b"),
        ]
        path = export_projection(embs, tmp_path / "two.csv")
        rows = [line.split(",") for line in path.read_text().strip().splitlines()[1:]]
        pc1 = [float(r[2]) for r in rows]
        pc2 = [float(r[3]) for r in rows]
        assert abs(abs(pc1[0] - pc1[1]) - 5.0) < 1e-6
        assert max(abs(v) for v in pc2) < 1e-6

    def test_family_centroids_separate(self, tmp_path):
        rng = np.random.default_rng(1)
        X = np.vstack([
            rng.normal(loc=0.0, scale=0.1, size=(10, 6)),
            rng.normal(loc=4.0, scale=0.1, size=(10, 6)),
        ])
        embs = [Embedding(vector=X[i], sample_id=f"s{i}") for i in range(20)]
        labels = {f"s{i}": 1 if i < 10 else 2 for i in range(20)}
        path = export_projection(embs, tmp_path / "fam.csv", labels=labels)
        rows = [line.split(",") for line in path.read_text().strip().splitlines()[1:]]
        assert {r[1] for r in rows} == {"1", "2"}
        pts = {fam: np.array([[float(r[2]), float(r[3])] for r in rows if r[1] == fam])
               for fam in ("1", "2")}
        gap = np.linalg.norm(pts["1"].mean(axis=0) - pts["2"].mean(axis=0))
        spread = max(
            np.linalg.norm(p - p.mean(axis=0), axis=1).mean() for p in pts.values()
        )
        assert gap > 10 * spread

    def test_missing_label_left_blank(self, tmp_path):
        embs, _ = self.planar_embeddings(n=3)
        path = export_projection(embs, tmp_path / "blank.csv", labels={"s0": 5})
        rows = [line.split(",") for line in path.read_text().strip().splitlines()[1:]]
        assert rows[0][1] == "5" and rows[1][1] == ""

    def test_deterministic_output(self, tmp_path):
        embs, _ = self.planar_embeddings()
        p1 = export_projection(embs, tmp_path / "a.csv")
        p2 = export_projection(embs, tmp_path / "b.csv")
        assert p1.read_bytes() == p2.read_bytes()

    def test_single_embedding_rejected(self, tmp_path):
        with pytest.raises(InvalidInput):
            export_projection([Embedding(vector=np.ones(2), sample_id="a")], tmp_path / "x.csv")


# -- CLI ------------------------------------------------------------------------------


class TestCli:
    def test_synth_writes_jsonl(self, tmp_path):
        out = tmp_path / "mini.jsonl"
        recipe = write_mini_recipe(tmp_path)
        result = CliRunner().invoke(cli_main, ["synth", "--recipe", str(recipe), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "20 traces, 3 families, 2 outliers" in result.output
        assert out.exists() and len(out.read_text().strip().splitlines()) == 20

    def test_run_then_report(self, tmp_path):
        config = {
            "dataset": {"recipe_file": str(write_mini_recipe(tmp_path))},
            "out_dir": str(tmp_path / "out"),
            "seeds": 2,
            "dim": 8,
            "abstractions": ["tree"],
            "methods": {"tree": {"ted": ["-"]}},
            "classifiers": ["kmeans"],
        }
        cfg_path = tmp_path / "bench.yaml"
        cfg_path.write_text(yaml.safe_dump(config))
        runner = CliRunner()
        result = runner.invoke(cli_main, ["run", "--config", str(cfg_path)])
        assert result.exit_code == 0, result.output
        assert "1 result rows (0 failed)" in result.output

        report = runner.invoke(
            cli_main, ["report", "--results", str(tmp_path / "out"), "--format", "markdown"]
        )
        assert report.exit_code == 0, report.output
        assert (tmp_path / "out" / "matrix.md").exists()
        assert (tmp_path / "out" / "rankings.csv").exists()

    def test_run_exits_nonzero_when_cells_fail(self, tmp_path):
        config = {
            "dataset": {"recipe_file": str(write_mini_recipe(tmp_path))},
            "out_dir": str(tmp_path / "out"),
            "seeds": 2,
            "dim": 8,
            "abstractions": ["tree"],
            "methods": {"tree": {"kernel": ["subtree"]}},
            "classifiers": ["kmeans"],
            "overrides": {"kernel": {"bogus_knob": 1}},
        }
        cfg_path = tmp_path / "bench.yaml"
        cfg_path.write_text(yaml.safe_dump(config))
        result = CliRunner().invoke(cli_main, ["run", "--config", str(cfg_path)])
        assert result.exit_code == 1
        assert "(1 failed)" in result.output

    def test_project_attaches_family_labels(self, tmp_path):
        jsonl = tmp_path / "mini.jsonl"
        recipe = write_mini_recipe(tmp_path)
        CliRunner().invoke(cli_main, ["synth", "--recipe", str(recipe), "--out", str(jsonl)])
        from tracebench.core import load_jsonl

        ds = load_jsonl(jsonl, name="mini")
        rng = np.random.default_rng(0)
        embs = [
            Embedding(vector=rng.normal(size=4), sample_id=t.filemd5, method="toy")
            for t in ds.traces
        ]
        npz = tmp_path / "emb.npz"
        save_embeddings_npz(npz, embs)
        result = CliRunner().invoke(
            cli_main,
            ["project", "--embeddings", str(npz), "--dataset", str(jsonl)],
        )
        assert result.exit_code == 0, result.output
        proj = tmp_path / "emb.projection.csv"
        assert proj.exists()
        lines = proj.read_text().strip().splitlines()
        assert lines[0] == "sample_id,family,pc1,pc2"
        assert len(lines) == 21
        families = {line.split(",")[1] for line in lines[1:]}
        assert "-1" in families  # outliers keep their flag in the projection

    def test_report_on_missing_results_fails_cleanly(self, tmp_path):
        result = CliRunner().invoke(cli_main, ["report", "--results", str(tmp_path)])
        assert result.exit_code != 0
        assert "results.json" in result.output
