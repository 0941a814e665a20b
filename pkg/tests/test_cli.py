"""Command-line surface: happy paths, output determinism, diagnostics."""

import json

import pytest

from pla.cli import main

from conftest import PR_DOC, REMARK_DOC


@pytest.fixture
def pr_file(tmp_path):
    path = tmp_path / "pr.json"
    path.write_text(json.dumps(PR_DOC))
    return str(path)


@pytest.fixture
def remark_file(tmp_path):
    path = tmp_path / "remark.json"
    path.write_text(json.dumps(REMARK_DOC))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


class TestCheck:
    def test_pr_network(self, capsys, pr_file):
        payload = run_json(capsys, "check", "--net", pr_file)
        assert payload["ranks"] == {"P": 0, "R": 1}
        assert payload["aggregation_free"] is True

    def test_remark_network_not_aggregation_free(self, capsys, remark_file):
        payload = run_json(capsys, "check", "--net", remark_file)
        assert payload["aggregation_free"] is False

    def test_formula_report(self, capsys, pr_file):
        payload = run_json(
            capsys, "check", "--net", pr_file, "--formula", "am[R(y) : y : distinct]"
        )
        assert payload["formula"]["function_rank"] == 1
        assert payload["formula"]["free_variables"] == []

    def test_cycle_is_an_error(self, capsys, tmp_path):
        doc = {"relations": [{"name": "R", "arity": 1, "parents": ["R"], "theta": "0.5"}]}
        path = tmp_path / "cycle.json"
        path.write_text(json.dumps(doc))
        code, _, err = run(capsys, "check", "--net", str(path))
        assert code == 1
        assert "cycle" in err


class TestSampleEvalInfer:
    def test_sample_then_eval(self, capsys, tmp_path, pr_file):
        world_file = tmp_path / "world.json"
        code, out, err = run(
            capsys, "sample", "--net", pr_file, "--n", "3", "--seed", "42",
            "--out", str(world_file),
        )
        assert code == 0, err
        payload = run_json(
            capsys, "eval", "--structure", str(world_file),
            "--formula", "am[R(y) : y : distinct]",
        )
        assert 0.0 <= payload["value"] <= 1.0

    def test_sample_deterministic(self, capsys, pr_file):
        _, out1, _ = run(capsys, "sample", "--net", pr_file, "--n", "4", "--seed", "7")
        _, out2, _ = run(capsys, "sample", "--net", pr_file, "--n", "4", "--seed", "7")
        assert out1 == out2

    def test_infer_exact(self, capsys, pr_file):
        payload = run_json(
            capsys, "infer", "exact", "--net", pr_file, "--n", "1",
            "--formula", "R(x)", "--assign", "x=1", "--value-set", "1",
        )
        assert payload["probability"] == pytest.approx(0.55, abs=1e-12)

    def test_infer_mc(self, capsys, pr_file):
        payload = run_json(
            capsys, "infer", "mc", "--net", pr_file, "--n", "2",
            "--formula", "R(x)", "--assign", "x=1", "--value-set", "1",
            "--samples", "2000", "--seed", "5",
        )
        assert abs(payload["estimate"] - 0.55) <= 3 * payload["ci95"]

    def test_infer_mc_requires_seed(self, capsys, pr_file):
        code, _, err = run(
            capsys, "infer", "mc", "--net", pr_file, "--n", "2",
            "--formula", "R(x)", "--assign", "x=1",
        )
        assert code == 1
        assert "seed" in err

    def test_world_cap_env(self, capsys, pr_file, monkeypatch):
        monkeypatch.setenv("PLA_WORLD_CAP", "3")
        code, _, err = run(
            capsys, "infer", "exact", "--net", pr_file, "--n", "1",
            "--formula", "R(x)", "--assign", "x=1",
        )
        assert code == 1
        assert "cap" in err


class TestEliminateCommand:
    def test_report_contains_constant_and_alpha_check(self, capsys, pr_file):
        payload = run_json(
            capsys, "eliminate", "--net", pr_file,
            "--formula", "am[R(y) : y : distinct]",
        )
        assert payload["output_conjuncts"] == [{"type": "1.0", "value": 0.55}]
        table = payload["aggregation_nodes"][0]["table"]
        assert all(abs(r["sum_alpha"] - 1.0) <= 1e-9 for r in table["rows"])

    def test_rejects_aggregating_network(self, capsys, remark_file):
        code, _, err = run(
            capsys, "eliminate", "--net", remark_file,
            "--formula", "max[R(x) : x : x = x]",
        )
        assert code == 1
        assert "aggregation" in err


class TestConverge:
    def test_csv_on_compiled_network(self, capsys, pr_file):
        code, out, err = run(
            capsys, "converge", "--net", pr_file,
            "--formula", "am[R(y) : y : distinct]",
            "--n-grid", "10,30", "--samples", "100", "--seed", "3",
        )
        assert code == 0, err
        lines = out.strip().splitlines()
        assert lines[0] == "n,epsilon,p_exceed,ci_exceed,d_0,p_near_0,ci_0"
        assert len(lines) == 3

    def test_value_set_on_remark_network(self, capsys, remark_file):
        code, out, err = run(
            capsys, "converge", "--net", remark_file,
            "--formula", "max[R(x) : x : x = x]",
            "--n-grid", "20", "--samples", "200", "--seed", "3",
            "--value-set", "1",
        )
        assert code == 0, err
        assert out.splitlines()[0] == "n,epsilon,p_value_set,ci_value_set"

    def test_remark_without_value_set_is_an_error(self, capsys, remark_file):
        code, _, err = run(
            capsys, "converge", "--net", remark_file,
            "--formula", "max[R(x) : x : x = x]",
            "--n-grid", "20", "--samples", "100", "--seed", "3",
        )
        assert code == 1
        assert "value-set" in err

    def test_byte_identical_reruns(self, capsys, pr_file):
        args = (
            "converge", "--net", pr_file, "--formula", "am[R(y) : y : distinct]",
            "--n-grid", "10", "--samples", "50", "--seed", "11",
        )
        _, out1, _ = run(capsys, *args)
        _, out2, _ = run(capsys, *args)
        assert out1 == out2

    def test_workers_shard_samples(self, capsys, pr_file):
        code, out, err = run(
            capsys, "converge", "--net", pr_file,
            "--formula", "am[R(y) : y : distinct]",
            "--n-grid", "10", "--samples", "60", "--seed", "11", "--workers", "2",
        )
        assert code == 0, err
        assert len(out.strip().splitlines()) == 2


class TestAdmissible:
    def test_am_passes(self, capsys):
        payload = run_json(
            capsys, "admissible", "--function", "am",
            "--lengths", "100,1000", "--trials", "5", "--spectra", "3", "--seed", "1",
        )
        assert payload["passed"] is True

    def test_noisy_or_fails(self, capsys):
        payload = run_json(
            capsys, "admissible", "--function", "noisy-or",
            "--lengths", "100,1000,10000", "--trials", "3", "--spectra", "2", "--seed", "1",
        )
        assert payload["passed"] is False

    def test_unknown_function(self, capsys):
        code, _, err = run(capsys, "admissible", "--function", "nope", "--seed", "1")
        assert code == 1
        assert "unknown aggregation function" in err


class TestParseErrors:
    def test_formula_diagnostic_has_position(self, capsys, pr_file):
        code, _, err = run(
            capsys, "check", "--net", pr_file, "--formula", "P(x) &",
        )
        assert code == 1
        assert "line 1" in err

    def test_missing_network_file(self, capsys):
        code, _, err = run(capsys, "check", "--net", "does-not-exist.json")
        assert code == 1
