"""CLI surface: flags, exit codes, and end-to-end pipelines."""

import numpy as np
import pytest

from treescore import parse_csv, read_csv, read_fvec
from treescore.cli import main

from conftest import requires_compiler


def run(argv):
    return main(argv)


@pytest.fixture
def model_path(tmp_path):
    path = tmp_path / "m.tree"
    assert run(["gen-model", "--depth", "3", "--features", "32",
                "--seed", "1", "--out", str(path)]) == 0
    return path


@pytest.fixture
def data_path(tmp_path, model_path):
    path = tmp_path / "d.fvec"
    assert run(["gen-data", "--model", str(model_path), "--count", "1500",
                "--seed", "2", "--out", str(path)]) == 0
    return path


class TestGenAndValidate:
    def test_gen_model_then_validate(self, model_path, capsys):
        assert run(["validate", str(model_path)]) == 0
        out = capsys.readouterr().out
        assert "valid" in out and "max_depth=3" in out

    def test_validate_missing_file(self, tmp_path):
        assert run(["validate", str(tmp_path / "nope.tree")]) == 2

    def test_validate_corrupt_model(self, tmp_path):
        bad = tmp_path / "bad.tree"
        bad.write_text("ensemble 2 1\ntree 1.0\nleaf 0 0.5\n")
        assert run(["validate", str(bad)]) == 2

    def test_gen_model_multiple_trees(self, tmp_path, capsys):
        path = tmp_path / "multi.tree"
        assert run(["gen-model", "--depth", "2", "--features", "8",
                    "--trees", "3", "--seed", "4", "--out", str(path)]) == 0
        assert run(["validate", str(path)]) == 0
        assert "trees=3" in capsys.readouterr().out

    def test_gen_data_fvec_and_csv(self, tmp_path, model_path):
        fvec = tmp_path / "d.fvec"
        csv = tmp_path / "d.csv"
        assert run(["gen-data", "--model", str(model_path), "--count", "100",
                    "--seed", "3", "--out", str(fvec)]) == 0
        assert run(["gen-data", "--model", str(model_path), "--count", "100",
                    "--seed", "3", "--out", str(csv), "--csv"]) == 0
        a = read_fvec(fvec)
        b = read_csv(csv, num_features=32)
        assert a.count == b.count == 100
        assert np.array_equal(a.matrix, b.matrix)

    def test_gen_data_multitree_uniform_fallback(self, tmp_path, capsys):
        model = tmp_path / "multi.tree"
        run(["gen-model", "--depth", "2", "--features", "8", "--trees", "2",
             "--seed", "4", "--out", str(model)])
        out_path = tmp_path / "u.fvec"
        assert run(["gen-data", "--model", str(model), "--count", "64",
                    "--seed", "5", "--out", str(out_path)]) == 0
        assert "uniform" in capsys.readouterr().out


class TestUsageErrors:
    def test_missing_command(self):
        assert run([]) == 1

    def test_unknown_command(self):
        assert run(["frobnicate"]) == 1

    def test_bench_requires_model_or_sweep(self):
        assert run(["bench"]) == 1

    def test_bench_vpredicated_without_batch(self, model_path):
        assert run(["bench", "--model", str(model_path),
                    "--strategies", "vpredicated"]) == 1

    def test_bench_unknown_strategy(self, model_path):
        assert run(["bench", "--model", str(model_path),
                    "--strategies", "warp_drive"]) == 1

    def test_bench_sweep_with_data_conflicts(self, tmp_path):
        assert run(["bench", "--sweep", "--data", str(tmp_path / "x")]) == 1

    def test_bench_bad_trials(self, model_path, data_path):
        assert run(["bench", "--model", str(model_path), "--data",
                    str(data_path), "--trials", "1"]) == 1

    def test_help_exits_zero(self):
        assert run(["--help"]) == 0
        assert run(["bench", "--help"]) == 0


class TestBenchAndTune:
    def test_bench_fixed_pipeline(self, tmp_path, model_path, data_path):
        out = tmp_path / "r.csv"
        code = run(["bench", "--model", str(model_path),
                    "--data", str(data_path),
                    "--strategies", "contiguous,predicated,vpredicated",
                    "--batch", "1,8", "--trials", "2", "--out", str(out)])
        assert code == 0
        report = parse_csv(out.read_text())
        keys = {row.key() for row in report.rows}
        assert ("contiguous", 3, 32, None) in keys
        assert ("vpredicated", 3, 32, 8) in keys
        for row in report.rows:
            assert len(row.trial_elapsed_ns) == 2

    def test_bench_generates_data_when_missing(self, tmp_path, model_path):
        out = tmp_path / "r.csv"
        code = run(["bench", "--model", str(model_path),
                    "--strategies", "contiguous", "--trials", "2",
                    "--instances", "512", "--out", str(out)])
        assert code == 0
        report = parse_csv(out.read_text())
        assert report.rows[0].instances == 512

    def test_bench_sweep_small(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = run(["bench", "--sweep", "--strategies", "contiguous",
                    "--trials", "2", "--instances", "128", "--out", str(out)])
        assert code == 0
        report = parse_csv(out.read_text())
        # Default grid: 5 depths x 3 feature sizes.
        assert len(report.rows) == 15

    def test_bench_to_stdout(self, model_path, data_path, capsys):
        code = run(["bench", "--model", str(model_path), "--data",
                    str(data_path), "--strategies", "contiguous",
                    "--trials", "2"])
        assert code == 0
        captured = capsys.readouterr()
        assert captured.out.splitlines()[-1].startswith("contiguous")

    def test_tune(self, tmp_path, model_path, data_path, capsys):
        out = tmp_path / "tune.csv"
        code = run(["tune", "--model", str(model_path),
                    "--data", str(data_path), "--batches", "1,4",
                    "--out", str(out)])
        assert code == 0
        err = capsys.readouterr().err
        assert "best batch size" in err
        report = parse_csv(out.read_text())
        assert {row.batch for row in report.rows} == {1, 4}


class TestCoverageCommand:
    def test_coverage_output(self, model_path, data_path, capsys):
        assert run(["coverage", "--model", str(model_path),
                    "--data", str(data_path)]) == 0
        out = capsys.readouterr().out
        assert "mean fraction of features examined" in out
        assert "instances: 1500" in out


class TestCodegenCommand:
    def test_emit_only(self, tmp_path, model_path):
        outdir = tmp_path / "gen"
        assert run(["codegen", "--model", str(model_path),
                    "--out", str(outdir)]) == 0
        assert (outdir / "scorer.c").exists()
        assert not (outdir / "scorer.so").exists()

    @requires_compiler
    def test_compile_removes_source_unless_kept(self, tmp_path, model_path):
        outdir = tmp_path / "gen1"
        assert run(["codegen", "--model", str(model_path), "--out",
                    str(outdir), "--compile"]) == 0
        assert (outdir / "scorer.so").exists()
        assert not (outdir / "scorer.c").exists()

        outdir2 = tmp_path / "gen2"
        assert run(["codegen", "--model", str(model_path), "--out",
                    str(outdir2), "--compile", "--keep-sources"]) == 0
        assert (outdir2 / "scorer.so").exists()
        assert (outdir2 / "scorer.c").exists()

    def test_compile_without_compiler_is_env_error(self, tmp_path, model_path,
                                                   monkeypatch):
        monkeypatch.setenv("PATH", "")
        monkeypatch.delenv("TREESCORE_CC", raising=False)
        outdir = tmp_path / "gen3"
        assert run(["codegen", "--model", str(model_path), "--out",
                    str(outdir), "--compile"]) == 3
