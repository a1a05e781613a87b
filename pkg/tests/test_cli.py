import json

import numpy as np
import pytest

from rsbkrylov.cli import RunConfig, TraceRow, UsageError, main, read_trace, write_trace


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestTraceFile:
    def test_header_only(self, tmp_path):
        p = tmp_path / "t.csv"
        write_trace([], p)
        assert p.read_bytes() == b"family,cycle,shift,resnorm,matvecs,refresh_products,seconds\n"

    def test_one_row_two_lines(self, tmp_path):
        p = tmp_path / "t.csv"
        write_trace([TraceRow(0, 0, 0, 1.5, 3, 0, 0.0)], p)
        data = p.read_bytes()
        assert data.count(b"\n") == 2 and b"\r" not in data

    def test_round_trip_is_exact(self, tmp_path, rng):
        rows = [TraceRow(f, c, s, float(v), int(m), int(r), float(t))
                for f, c, s, v, m, r, t in zip(range(5), range(5), range(5),
                                                rng.random(5) * 10.0 ** rng.integers(-300, 300, 5),
                                                range(5), range(5), rng.random(5))]
        p = tmp_path / "t.csv"
        write_trace(rows, p)
        assert read_trace(p) == rows

    def test_seventeen_significant_digits(self, tmp_path):
        p = tmp_path / "t.csv"
        write_trace([TraceRow(0, 0, 0, 1.0 / 3.0, 0, 0, 0.0)], p)
        field = p.read_text().splitlines()[1].split(",")[3]
        mantissa = field.split("e")[0].replace(".", "").lstrip("-")
        assert len(mantissa) == 17

    def test_rejects_negative_norm(self):
        with pytest.raises(ValueError):
            TraceRow(0, 0, 0, -1.0, 0, 0, 0.0)


class TestConfig:
    def test_validation(self):
        for bad in (dict(j=0), dict(k=-1), dict(tol=0.0), dict(method="cg"),
                    dict(shifts=[0, 1], s=1), dict(ritz_shift="7")):
            with pytest.raises(UsageError):
                RunConfig(**bad).validate()

    def test_shift_parsing(self):
        cfg = RunConfig(shifts="0,1.5,2-1i")
        assert cfg.shifts == [0.0, 1.5, 2 - 1j] and cfg.s == 3


class TestCommands:
    def test_solve_writes_trace(self, tmp_path, capsys):
        p = tmp_path / "t.csv"
        code, out, _ = run_cli(["solve", "--gen", "poisson:12", "--shifts", "0,1", "-j", "10",
                                "-k", "4", "--trace", str(p)], capsys)
        assert code == 0 and "converged=yes" in out
        rows = read_trace(p)
        assert {r.shift for r in rows} == {0, 1}
        assert all(r.seconds == 0.0 for r in rows)

    def test_compare_writes_one_trace_per_method(self, tmp_path, capsys):
        stem = tmp_path / "cmp.csv"
        code, _, _ = run_cli(["compare", "--gen", "poisson:40", "--shifts", "0,1,2",
                              "--methods", "sbgmres,ursbgmres", "-j", "20", "-k", "10",
                              "--trace", str(stem)], capsys)
        assert code == 0
        a = read_trace(tmp_path / "cmp.sbgmres.csv")
        b = read_trace(tmp_path / "cmp.ursbgmres.csv")
        assert max(r.cycle for r in b) <= max(r.cycle for r in a)

    def test_sequence_reports_refresh(self, tmp_path, capsys):
        p = tmp_path / "s.csv"
        code, out, _ = run_cli(["sequence", "--gen", "poisson:10", "--families", "3", "--eps",
                                "0.01", "--shifts", "0", "-s", "2", "--shift-increment",
                                "1e-4", "-j", "8", "-k", "3", "--trace", str(p)], capsys)
        assert code == 0 and out.count("family") == 3
        rows = read_trace(p)
        assert {r.refresh_products for r in rows if r.family == 2} == {3}

    def test_scalar_methods(self, tmp_path, capsys):
        p = tmp_path / "t.csv"
        code, _, _ = run_cli(["solve", "--gen", "poisson:8", "--shifts", "0,1", "--method",
                              "fom", "-j", "10", "--trace", str(p)], capsys)
        assert code == 0 and read_trace(p)

    def test_non_convergence_exit_code(self, tmp_path, capsys):
        code, out, _ = run_cli(["solve", "--gen", "poisson:20", "--max-cycles", "1",
                                "--trace", str(tmp_path / "t.csv")], capsys)
        assert code == 2 and "converged=no" in out

    def test_missing_matrix_file(self, tmp_path, capsys):
        missing = tmp_path / "absent.mtx"
        code, _, err = run_cli(["solve", "--gen", f"mm:{missing}",
                                "--trace", str(tmp_path / "t.csv")], capsys)
        assert code == 1 and str(missing) in err

    def test_usage_errors_exit_one(self, capsys):
        assert run_cli(["solve", "-j", "0"], capsys)[0] == 1
        assert run_cli(["frobnicate"], capsys)[0] == 1
        assert run_cli(["solve", "--ritz-every-cycle", "maybe"], capsys)[0] == 1

    def test_config_file_and_flag_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"source": "poisson:10", "shifts": [0, 1], "j": 5, "k": 2,
                                   "max_cycles": 1, "trace": str(tmp_path / "cfg.csv")}))
        code, out, _ = run_cli(["solve", "--config", str(cfg), "--max-cycles", "200"], capsys)
        assert code == 0 and (tmp_path / "cfg.csv").exists()

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"colour": "red"}))
        code, _, err = run_cli(["solve", "--config", str(cfg)], capsys)
        assert code == 1 and "colour" in err

    def test_flags_for_recycling_options(self, tmp_path, capsys):
        p = tmp_path / "t.csv"
        code, _, _ = run_cli(["solve", "--gen", "poisson:12", "--shifts", "0,1", "-j", "8",
                              "-k", "3", "--ritz-shift", "cycle", "--ritz-every-cycle", "false",
                              "--orthonormal-c", "--warm-start", "--residual-mode", "absolute",
                              "--tol", "1e-6", "--trace", str(p)], capsys)
        assert code == 0

    def test_determinism(self, tmp_path, capsys):
        args = ["sequence", "--gen", "poisson:12", "--families", "2", "--eps", "0.01",
                "--shifts", "0,0.5", "-j", "6", "-k", "3", "--seed", "4"]
        run_cli(args + ["--trace", str(tmp_path / "a.csv")], capsys)
        run_cli(args + ["--trace", str(tmp_path / "b.csv")], capsys)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
