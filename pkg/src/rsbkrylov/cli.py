"""Command-line driver: ``rsbkrylov {solve,sequence,compare}``.

Every run writes a CSV convergence trace with one row per (cycle, shift)
and prints a short summary.  Exit status is 0 when every family
converged, 2 when some family hit the cycle budget and 1 on any error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse

from .arnoldi import solve_restarted
from .problems import SequenceSpec, build_sequence
from .recycling import SequenceError, solve_recycled_family, solve_sequence

__all__ = ["RunConfig", "TraceRow", "write_trace", "read_trace", "run", "main"]

TRACE_HEADER = ("family", "cycle", "shift", "resnorm", "matvecs", "refresh_products", "seconds")
METHODS = ("fom", "gmres", "sbfom", "sbgmres", "ursbfom", "ursbgmres")
RECYCLED = ("ursbfom", "ursbgmres")


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "solve"
    source: str = "poisson:40"
    shifts: list = field(default_factory=lambda: [0.0])
    s: int | None = None
    shift_increment: float = 0.0
    families: int = 1
    eps: float = 0.0
    j: int = 20
    k: int = 10
    tol: float = 1e-8
    max_cycles: int = 500
    method: str = "ursbgmres"
    methods: list = field(default_factory=lambda: ["sbgmres", "ursbgmres"])
    seed: int = 0
    ritz_shift: str = "0"
    ritz_every_cycle: bool = True
    orthonormal_c: bool = False
    warm_start: bool = False
    trace: str = "trace.csv"
    residual_mode: str = "relative"
    timing: bool = False

    def __post_init__(self):
        self.shifts = _parse_shifts(self.shifts)
        self.ritz_shift = str(self.ritz_shift)
        if self.s is None:
            self.s = len(self.shifts)
        if isinstance(self.methods, str):
            self.methods = [m.strip() for m in self.methods.split(",") if m.strip()]

    def validate(self):
        if self.command not in ("solve", "sequence", "compare"):
            raise UsageError(f"unknown command {self.command!r}")
        if self.j < 1:
            raise UsageError("j must be >= 1")
        if self.k < 0:
            raise UsageError("k must be >= 0")
        if not self.tol > 0:
            raise UsageError("tol must be > 0")
        if self.max_cycles < 0:
            raise UsageError("max-cycles must be >= 0")
        if self.families < 1:
            raise UsageError("families must be >= 1")
        if self.eps < 0:
            raise UsageError("eps must be >= 0")
        if self.s < 1 or len(self.shifts) > self.s:
            raise UsageError(f"s = {self.s} does not fit {len(self.shifts)} shifts")
        if len(self.shifts) < self.s and self.shift_increment == 0:
            raise UsageError(f"s = {self.s} needs {self.s} shifts or a nonzero --shift-increment")
        if self.residual_mode not in ("relative", "absolute"):
            raise UsageError(f"residual mode must be relative or absolute, got {self.residual_mode!r}")
        for m in self.run_methods():
            if m not in METHODS:
                raise UsageError(f"unknown method {m!r} (choose from {', '.join(METHODS)})")
        if self.ritz_shift != "cycle":
            try:
                idx = int(self.ritz_shift)
            except ValueError:
                raise UsageError(f"ritz shift must be an index or 'cycle', got {self.ritz_shift!r}") from None
            if not 0 <= idx < self.s:
                raise UsageError(f"ritz shift index {idx} outside 0..{self.s - 1}")
        return self

    def run_methods(self):
        return list(self.methods) if self.command == "compare" else [self.method]

    def sequence_spec(self) -> SequenceSpec:
        count = self.families if self.command != "solve" else 1
        return SequenceSpec(self.source, count=count, eps=self.eps, base_shifts=self.shifts,
                            shift_increment=self.shift_increment, s=self.s, seed=self.seed)


@dataclass(frozen=True)
class TraceRow:
    family: int
    cycle: int
    shift: int
    resnorm: float
    matvecs: int
    refresh_products: int
    seconds: float

    def __post_init__(self):
        if not (np.isfinite(self.resnorm) and self.resnorm >= 0):
            raise ValueError(f"residual norm must be finite and non-negative, got {self.resnorm}")


def _parse_shifts(value):
    if isinstance(value, str):
        items = [t for t in value.replace(";", ",").split(",") if t.strip()]
    else:
        items = list(np.atleast_1d(value))
    out = []
    for t in items:
        try:
            z = complex(str(t).strip().replace("i", "j")) if isinstance(t, str) else complex(t)
        except ValueError:
            raise UsageError(f"cannot parse shift {t!r}") from None
        out.append(z.real if z.imag == 0 else z)
    if not out:
        raise UsageError("at least one shift is required")
    return out


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def write_trace(rows, path) -> None:
    """Write trace rows as CSV (17 significant digits, LF line endings)."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in rows:
            w.writerow([r.family, r.cycle, r.shift, _fmt(r.resnorm), r.matvecs,
                        r.refresh_products, _fmt(r.seconds)])


def read_trace(path) -> list:
    with open(path, newline="", encoding="ascii") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        return [TraceRow(int(a), int(b), int(c), float(d), int(e), int(f), float(g))
                for a, b, c, d, e, f, g in rd]


def report_rows(report, family: int, timing: bool = False) -> list:
    """Rows for one solve; MAT-VEC and refresh columns count from the family start."""
    rows = []
    for c, norms in enumerate(report.trace):
        t = report.seconds[c] if timing else 0.0
        for i, rn in enumerate(np.atleast_1d(norms)):
            rows.append(TraceRow(family, c, i, float(rn), int(report.matvec_trace[c]),
                                 int(report.refresh_products), float(t)))
    return rows


class _ScalarReports:
    """Per-shift FOM/GMRES solves presented like one family report."""

    def __init__(self, reports):
        self.reports = reports
        self.converged = all(r.converged for r in reports)
        self.cycles = max(r.cycles for r in reports)
        self.matvecs = sum(r.matvecs for r in reports)
        self.refresh_products = 0

    def rows(self, family, timing):
        rows = []
        for i, rep in enumerate(self.reports):
            for r in report_rows(rep, family, timing):
                rows.append(TraceRow(r.family, r.cycle, i, r.resnorm, r.matvecs, 0, r.seconds))
        return sorted(rows, key=lambda r: (r.cycle, r.shift))


def _solve_scalar(fam, cfg, method):
    reps = []
    eye = scipy.sparse.identity(fam.n, dtype=fam.A.dtype, format="csr")
    for i, sigma in enumerate(fam.shifts):
        reps.append(solve_restarted(fam.A + sigma * eye, fam.B[:, i], fam.X0[:, i], m=cfg.j,
                                    tol=cfg.tol, max_cycles=cfg.max_cycles, method=method,
                                    residual_mode=cfg.residual_mode))
    return _ScalarReports(reps)


def _recycled_options(cfg):
    ritz = cfg.ritz_shift if cfg.ritz_shift == "cycle" else int(cfg.ritz_shift)
    return dict(ritz_shift_index=ritz, ritz_every_cycle=cfg.ritz_every_cycle,
                orthonormal_c=cfg.orthonormal_c, residual_mode=cfg.residual_mode)


def _run_method(families, cfg, method):
    """Solve all families with one method; returns a list of (report, rows)."""
    if method in ("fom", "gmres"):
        out = []
        for ell, fam in enumerate(families):
            rep = _solve_scalar(fam, cfg, method)
            out.append((rep, rep.rows(ell, cfg.timing)))
        return out
    basis = None
    opts = {"residual_mode": cfg.residual_mode}
    if method in RECYCLED:
        opts = _recycled_options(cfg)
        if cfg.warm_start:
            # a preliminary untraced solve of the first family seeds the basis
            _, basis = solve_recycled_family(families[0], None, j=cfg.j, k=cfg.k, tol=cfg.tol,
                                             max_cycles=cfg.max_cycles, method=method,
                                             seed=cfg.seed, **opts)
    reports = solve_sequence(families, j=cfg.j, k=cfg.k, tol=cfg.tol,
                             max_cycles=cfg.max_cycles, method=method, basis=basis,
                             seed=cfg.seed, **opts)
    return [(rep, report_rows(rep, ell, cfg.timing)) for ell, rep in enumerate(reports)]


def _trace_path(cfg, method):
    if cfg.command != "compare":
        return cfg.trace
    stem, ext = os.path.splitext(cfg.trace)
    return f"{stem}.{method}{ext or '.csv'}"


def run(cfg: RunConfig, out=None) -> int:
    """Execute a validated configuration; returns the process exit status."""
    out = sys.stdout if out is None else out
    cfg.validate()
    families = build_sequence(cfg.sequence_spec())
    all_converged = True
    for method in cfg.run_methods():
        results = _run_method(families, cfg, method)
        rows = [r for _, rs in results for r in rs]
        path = _trace_path(cfg, method)
        write_trace(rows, path)
        for ell, (rep, _) in enumerate(results):
            all_converged &= bool(rep.converged)
            print(f"{method:>9s} family {ell}: converged={'yes' if rep.converged else 'no'} "
                  f"cycles={rep.cycles} matvecs={rep.matvecs} "
                  f"refresh_products={rep.refresh_products}", file=out)
        print(f"trace written to {path}", file=out)
    return 0 if all_converged else 2


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rsbkrylov", description="Recycled shifted block Krylov solvers.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS
    for name, help_ in (("solve", "solve one shifted family"),
                        ("sequence", "solve a sequence of perturbed families with recycling"),
                        ("compare", "run several methods on identical problems")):
        p = sub.add_parser(name, help=help_, argument_default=S)
        p.add_argument("--config", help="JSON file with RunConfig fields (flags take precedence)")
        p.add_argument("--gen", "--matrix", dest="source", help="poisson:<nx> or mm:<path>")
        p.add_argument("--shifts", help="comma-separated shifts, e.g. 0,1,2 or 0.5+1j")
        p.add_argument("-s", dest="s", type=int, help="number of shifts (extends --shifts)")
        p.add_argument("--shift-increment", type=float)
        p.add_argument("-j", dest="j", type=int, help="block Arnoldi cycle length")
        p.add_argument("-k", dest="k", type=int, help="recycle space dimension")
        p.add_argument("--tol", type=float)
        p.add_argument("--max-cycles", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--ritz-shift", help="shift index for harmonic Ritz extraction, or 'cycle'")
        p.add_argument("--ritz-every-cycle", type=_bool, help="true (default) or false")
        p.add_argument("--orthonormal-c", action="store_true")
        p.add_argument("--warm-start", action="store_true",
                       help="seed the recycle space from a preliminary solve")
        p.add_argument("--residual-mode", choices=("relative", "absolute"))
        p.add_argument("--trace", help="output CSV path")
        p.add_argument("--timing", action="store_true", help="record wall time in the trace")
        if name == "compare":
            p.add_argument("--methods", help="comma-separated methods")
        else:
            p.add_argument("--method", choices=METHODS)
        if name != "solve":
            p.add_argument("--families", type=int)
            p.add_argument("--eps", type=float)
    return parser


def config_from_args(argv) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    values = {}
    path = ns.pop("config", None)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values = json.load(fh)
        except FileNotFoundError:
            raise FileNotFoundError(f"config file not found: {path}") from None
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise UsageError(f"unknown config keys in {path}: {', '.join(unknown)}")
    values.update(ns)
    return RunConfig(**values)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(sys.argv[1:] if argv is None else argv)
        return run(cfg)
    except (SequenceError, UsageError, FileNotFoundError, OSError, ValueError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
