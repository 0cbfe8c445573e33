"""End-to-end CLI behaviour: exit codes, report files, CSV byte stability."""

import argparse
import json
import pathlib

import numpy as np
import pytest
import yaml

from modlindley.cli import (
    EXIT_COMPARISON,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SOLVER,
    EXIT_UNSTABLE,
    cmd_compare,
    main,
)
from modlindley.errors import SingularSystemError

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"


def write_yaml(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def fast_mg1(tmp_path, seed=8, n_steps=400_000):
    return write_yaml(
        tmp_path,
        "mg1.yaml",
        {
            "label": "fast additive-only",
            "model": "model2",
            "chain": {"transition_matrix": [[1.0]]},
            "arrival_rate": [2.0],
            "gap_rate": [1.0],
            "service": [{"kind": "exponential", "rate": 10.0}],
            "service_alt": [{"kind": "exponential", "rate": 1.0}],
            "v_law": {"p": 1.0},
            "sim": {"n_steps": n_steps, "burn_in": 2000, "seed": seed, "replications": 4},
        },
    )


class TestSolveCommand:
    def test_shipped_config_solves(self, tmp_path, capsys):
        rc = main(["solve", str(CONFIGS / "model2_two_state.yaml"), "--out", str(tmp_path)])
        assert rc == EXIT_OK
        text = (tmp_path / "report.txt").read_text(encoding="utf-8")
        assert "overall: pass" in text
        payload = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert payload["all_passed"] is True
        # every pass/fail entry names its tolerance
        assert payload["checks"]
        for check in payload["checks"]:
            assert "tolerance" in check and check["tolerance"]

    def test_decay_section_present(self, tmp_path, capsys):
        rc = main(["solve", str(CONFIGS / "model2_decay.yaml"), "--out", str(tmp_path)])
        assert rc == EXIT_OK
        payload = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert payload["outputs"]["decay"]["rate"] == pytest.approx(
            np.sqrt(26.0) + 4.0, abs=1e-9
        )

    def test_model1_report_has_means(self, tmp_path, capsys):
        rc = main(["solve", str(CONFIGS / "model1_two_state.yaml"), "--out", str(tmp_path)])
        assert rc == EXIT_OK
        payload = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        means = payload["outputs"]["mean_by_state"]
        assert len(means) == 2 and all(m > 0 for m in means)

    def test_unstable_exit_code(self, tmp_path, capsys):
        path = write_yaml(
            tmp_path,
            "unstable.yaml",
            {
                "model": "model2",
                "chain": {"transition_matrix": [[1.0]]},
                "arrival_rate": [2.0],
                "gap_rate": [1.0],
                "service": [{"kind": "exponential", "rate": 1.0}],
                "service_alt": [{"kind": "exponential", "rate": 1.0}],
                "v_law": {"p": 1.0},
            },
        )
        assert main(["solve", path, "--out", str(tmp_path)]) == EXIT_UNSTABLE
        assert "unstable" in capsys.readouterr().err

    def test_p3_zero_exits_as_instability(self, tmp_path, capsys):
        path = write_yaml(
            tmp_path,
            "p3zero.yaml",
            {
                "model": "model1",
                "chain": {"transition_matrix": [[1.0]]},
                "service": [{"kind": "exponential", "rate": 10.0}],
                "interarrival": [{"kind": "exponential", "rate": 2.0}],
                "v_law": {"p1": 0.5, "p2": 0.5, "p3": 0.0, "a": 0.2, "atoms": [[-1.0, 1.0]]},
            },
        )
        assert main(["solve", path, "--out", str(tmp_path)]) == EXIT_UNSTABLE

    def test_malformed_config_exit_code(self, tmp_path, capsys):
        path = write_yaml(tmp_path, "bad.yaml", {"model": "model9"})
        assert main(["solve", path, "--out", str(tmp_path)]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "config error" in err and "model" in err

    def test_missing_file_exit_code(self, tmp_path, capsys):
        assert main(["solve", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG

    def test_usage_error_is_config_error(self, capsys):
        assert main(["solve"]) == EXIT_CONFIG


class TestCompareCommand:
    def test_compare_passes_and_is_byte_stable(self, tmp_path, capsys):
        cfg = fast_mg1(tmp_path)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["compare", cfg, "--out", str(out1)]) == EXIT_OK
        assert main(["compare", cfg, "--out", str(out2)]) == EXIT_OK
        b1 = (out1 / "comparison.csv").read_bytes()
        b2 = (out2 / "comparison.csv").read_bytes()
        assert b1 == b2
        lines = b1.decode("utf-8").splitlines()
        assert lines[0] == "quantity,state,analytic,simulated,stderr,z_score,pass"
        body = [line.split(",") for line in lines[1:]]
        assert all(row[-1] == "true" for row in body)
        quantities = {row[0] for row in body}
        assert "mean" in quantities and "transform@0.5" in quantities

    def test_seed_override_changes_output(self, tmp_path, capsys):
        cfg = fast_mg1(tmp_path)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["compare", cfg, "--out", str(out1), "--seed", "123"]) == EXIT_OK
        assert main(["compare", cfg, "--out", str(out2), "--seed", "124"]) == EXIT_OK
        assert (out1 / "comparison.csv").read_bytes() != (out2 / "comparison.csv").read_bytes()

    def test_corrupted_solution_fails_mean_rows(self, tmp_path, capsys):
        cfg = fast_mg1(tmp_path)
        args = argparse.Namespace(config=cfg, out=str(tmp_path / "bad"), seed=None, tol=None)
        rc = cmd_compare(args, _shift=0.05)
        assert rc == EXIT_COMPARISON
        lines = (tmp_path / "bad" / "comparison.csv").read_text(encoding="utf-8").splitlines()
        rows = [line.split(",") for line in lines[1:]]
        mean_rows = [r for r in rows if r[0] == "mean"]
        transform_rows = [r for r in rows if r[0].startswith("transform")]
        assert mean_rows and all(r[-1] == "false" for r in mean_rows)
        assert transform_rows and all(r[-1] == "true" for r in transform_rows)


class TestSweepCommands:
    def test_sweep_model1_monotone_and_ordered(self, tmp_path, capsys):
        rc = main(
            [
                "sweep-model1",
                str(CONFIGS / "model1_two_state.yaml"),
                "--out",
                str(tmp_path),
                "--u",
                "1,2,3",
            ]
        )
        assert rc == EXIT_OK
        lines = (tmp_path / "sweep_model1.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "u,mean_auto,mean_indep"
        rows = [line.split(",") for line in lines[1:]]
        u = [float(r[0]) for r in rows]
        auto = [float(r[1]) for r in rows]
        indep = [float(r[2]) for r in rows]
        assert u == [1.0, 2.0, 3.0]
        assert all(a > i for a, i in zip(auto, indep))
        assert all(b > a for a, b in zip(auto, auto[1:]))
        assert all(b > a for a, b in zip(indep, indep[1:]))

    def test_sweep_model1_rejects_model2_config(self, tmp_path, capsys):
        rc = main(
            ["sweep-model1", str(CONFIGS / "model2_two_state.yaml"), "--out", str(tmp_path)]
        )
        assert rc == EXIT_CONFIG

    def test_sweep_model2_grid_and_monotonicity(self, tmp_path, capsys):
        rc = main(
            [
                "sweep-model2",
                str(CONFIGS / "model2_two_state.yaml"),
                "--out",
                str(tmp_path),
                "--p",
                "0.2,0.8",
                "--u",
                "1,2",
            ]
        )
        assert rc == EXIT_OK
        lines = (tmp_path / "sweep_model2.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "p,u,mean_wait"
        rows = [[float(v) for v in line.split(",")] for line in lines[1:]]
        table = {(p, u): w for p, u, w in rows}
        assert len(rows) == 4
        assert table[(0.2, 2.0)] > table[(0.2, 1.0)]
        assert table[(0.8, 2.0)] > table[(0.8, 1.0)]
        # the u-effect grows with p
        assert (table[(0.8, 2.0)] - table[(0.8, 1.0)]) > (
            table[(0.2, 2.0)] - table[(0.2, 1.0)]
        )

    def test_sweep_failure_annotates_row_and_continues(self, tmp_path, capsys, monkeypatch):
        import modlindley.cli as cli_mod

        real = cli_mod.solve_model2

        def boom(spec, search_bound=None):
            if abs(spec.p - 0.8) < 1e-12:
                raise SingularSystemError("forced failure", 1e12)
            return real(spec, search_bound)

        monkeypatch.setattr(cli_mod, "solve_model2", boom)
        rc = main(
            [
                "sweep-model2",
                str(CONFIGS / "model2_two_state.yaml"),
                "--out",
                str(tmp_path),
                "--p",
                "0.2,0.8",
                "--u",
                "1",
            ]
        )
        assert rc == EXIT_OK
        lines = (tmp_path / "sweep_model2.csv").read_text(encoding="utf-8").splitlines()
        assert lines[1].startswith("0.2,1,")
        assert lines[2] == "0.8,1,error:SingularSystemError"

    def test_bad_grid_is_config_error(self, tmp_path, capsys):
        rc = main(
            [
                "sweep-model2",
                str(CONFIGS / "model2_two_state.yaml"),
                "--out",
                str(tmp_path),
                "--u",
                "1,two",
            ]
        )
        assert rc == EXIT_CONFIG


class TestSimulateCommand:
    def test_simulate_writes_reports(self, tmp_path, capsys):
        cfg = fast_mg1(tmp_path, n_steps=200_000)
        rc = main(["simulate", cfg, "--out", str(tmp_path)])
        assert rc == EXIT_OK
        payload = json.loads((tmp_path / "simulation.json").read_text(encoding="utf-8"))
        freqs = payload["outputs"]["visit_frequencies"]
        assert sum(freqs) == pytest.approx(1.0, abs=1e-12)
        assert payload["outputs"]["replications"] == 4
