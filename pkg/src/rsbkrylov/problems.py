"""Test problems: Matrix Market input, 2-D Poisson, perturbed sequences."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse

from .linalg import DTYPE, as_sparse
from .shifted import ShiftedFamily, is_rank_deficient

__all__ = [
    "MatrixMarketError",
    "read_matrix_market",
    "write_matrix_market",
    "poisson2d",
    "perturb",
    "random_block",
    "load_matrix",
    "expand_shifts",
    "SequenceSpec",
    "build_sequence",
]

_FIELDS = ("real", "complex", "integer", "pattern")
_SYMMETRIES = ("general", "symmetric", "hermitian", "skew-symmetric")


class MatrixMarketError(ValueError):
    def __init__(self, message, path=None, line=None):
        loc = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(loc + message)
        self.path = path
        self.line = line


def read_matrix_market(path) -> scipy.sparse.csr_matrix:
    """Read a square coordinate-format Matrix Market file into complex CSR.

    Real, integer, complex and pattern fields are accepted (pattern entries
    become 1); symmetric, Hermitian and skew-symmetric storage is expanded.
    Errors carry the offending line number.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"matrix file not found: {path}")
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError("empty file", path, 1)
    header = lines[0].strip().lower().split()
    if len(header) != 5 or header[0] != "%%matrixmarket" or header[1] != "matrix":
        raise MatrixMarketError("invalid Matrix Market banner", path, 1)
    fmt, fld, sym = header[2:]
    if fmt != "coordinate":
        raise MatrixMarketError(f"unsupported format {fmt!r} (only coordinate)", path, 1)
    if fld not in _FIELDS:
        raise MatrixMarketError(f"unsupported field {fld!r}", path, 1)
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {sym!r}", path, 1)
    if fld == "pattern" and sym == "hermitian":
        raise MatrixMarketError("pattern matrices cannot be hermitian", path, 1)

    lineno = 1
    size = None
    for lineno in range(2, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if text and not text.startswith("%"):
            size = text.split()
            break
    if size is None:
        raise MatrixMarketError("missing size line", path, lineno)
    try:
        nrows, ncols, nnz = (int(t) for t in size)
    except ValueError:
        raise MatrixMarketError("size line must hold three integers", path, lineno) from None
    if nrows != ncols:
        raise MatrixMarketError(f"matrix is not square ({nrows}x{ncols})", path, lineno)
    n = nrows

    width = {"pattern": 2, "complex": 4}.get(fld, 3)
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.ones(nnz, dtype=DTYPE)
    count = 0
    for ln in range(lineno + 1, len(lines) + 1):
        text = lines[ln - 1].strip()
        if not text or text.startswith("%"):
            continue
        tok = text.split()
        if len(tok) != width:
            raise MatrixMarketError(f"expected {width} fields, got {len(tok)}", path, ln)
        if count >= nnz:
            raise MatrixMarketError(f"more than the declared {nnz} entries", path, ln)
        try:
            i, j = int(tok[0]), int(tok[1])
            if fld == "complex":
                v = complex(float(tok[2]), float(tok[3]))
            elif fld == "integer":
                v = int(tok[2])
            elif fld == "real":
                v = float(tok[2])
            else:
                v = 1.0
        except ValueError:
            raise MatrixMarketError(f"malformed entry {text!r}", path, ln) from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise MatrixMarketError(f"index ({i}, {j}) outside 1..{n}", path, ln)
        if sym != "general" and i < j:
            raise MatrixMarketError(
                f"entry ({i}, {j}) above the diagonal in {sym} storage", path, ln)
        if sym == "skew-symmetric" and i == j:
            raise MatrixMarketError("diagonal entry in skew-symmetric storage", path, ln)
        rows[count], cols[count], vals[count] = i - 1, j - 1, v
        count += 1
    if count != nnz:
        raise MatrixMarketError(f"declared {nnz} entries, found {count}", path, len(lines))

    if sym != "general":
        off = rows != cols
        mirror = {"symmetric": vals[off], "hermitian": vals[off].conj(),
                  "skew-symmetric": -vals[off]}[sym]
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, mirror]))
    A = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n), dtype=DTYPE)
    return as_sparse(A)


def write_matrix_market(path, A, comment: str = "") -> None:
    """Write ``A`` in coordinate format (general symmetry, full precision)."""
    A = scipy.sparse.coo_matrix(A)
    field_ = "complex" if np.iscomplexobj(A.data) and np.any(A.data.imag) else "real"
    data = A.data if field_ == "complex" else A.data.real
    A = scipy.sparse.coo_matrix((data, (A.row, A.col)), shape=A.shape)
    scipy.io.mmwrite(os.fspath(path), A, comment=comment, field=field_,
                     precision=17, symmetry="general")


def poisson2d(nx: int) -> scipy.sparse.csr_matrix:
    """5-point Dirichlet Laplacian on an ``nx x nx`` grid (dimension ``nx**2``)."""
    if nx < 2:
        raise ValueError("nx must be >= 2")
    T = scipy.sparse.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(nx, nx))
    I = scipy.sparse.identity(nx)
    return as_sparse(scipy.sparse.kron(I, T) + scipy.sparse.kron(T, I))


def _rng(seed, *tags):
    seed = [int(x) for x in np.atleast_1d(seed)]
    return np.random.default_rng(np.random.SeedSequence([*seed, *tags]))


def perturb(A, eps: float, seed) -> scipy.sparse.csr_matrix:
    """``A + eps E`` with ``E`` random on the sparsity pattern of ``A``.

    The entries of ``E`` are uniform on ``[-1, 1]`` (real and imaginary
    parts independently, imaginary part only when ``A`` has complex
    entries) and ``E`` is scaled so that ``||E||_F = ||A||_F``.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    A = as_sparse(A)
    if eps == 0:
        return A.copy()
    rng = _rng(seed, 0x5EED)
    m = A.data.size
    E = rng.uniform(-1.0, 1.0, m).astype(DTYPE)
    if np.any(A.data.imag):
        E = E + 1j * rng.uniform(-1.0, 1.0, m)
    en = np.linalg.norm(E)
    if en > 0:
        E *= np.linalg.norm(A.data) / en
    out = A.copy()
    out.data = A.data + eps * E
    return out


def random_block(n: int, s: int, seed) -> np.ndarray:
    """``n x s`` block with real and imaginary parts uniform on ``[-1, 1]``."""
    if not n >= s >= 1:
        raise ValueError(f"need n >= s >= 1, got n={n}, s={s}")
    for attempt in range(2):
        rng = _rng(seed, 0xB10C, attempt)
        B = rng.uniform(-1, 1, (n, s)) + 1j * rng.uniform(-1, 1, (n, s))
        if not is_rank_deficient(B):
            break
    return B.astype(DTYPE)


def load_matrix(source) -> scipy.sparse.csr_matrix:
    """Resolve ``poisson:<nx>``, ``mm:<path>`` or a bare ``.mtx`` path."""
    if scipy.sparse.issparse(source) or isinstance(source, np.ndarray):
        return as_sparse(source)
    text = str(source)
    kind, sep, arg = text.partition(":")
    if sep and kind == "poisson":
        try:
            nx = int(arg)
        except ValueError:
            raise ValueError(f"bad generator spec {text!r}: expected poisson:<nx>") from None
        return poisson2d(nx)
    if sep and kind == "mm":
        return read_matrix_market(arg)
    if text.endswith(".mtx"):
        return read_matrix_market(text)
    raise ValueError(f"unknown matrix source {text!r} (use poisson:<nx> or mm:<path>)")


def expand_shifts(base, s: int, increment: float = 0.0) -> np.ndarray:
    """Use ``base`` as is when it has ``s`` entries, else grow it by ``increment`` steps."""
    base = [complex(b) for b in np.atleast_1d(base)]
    if len(base) == s:
        return np.asarray(base, dtype=DTYPE)
    if len(base) > s:
        raise ValueError(f"{len(base)} base shifts but s={s}")
    out = list(base)
    while len(out) < s:
        out.append(out[-1] + increment)
    return np.asarray(out, dtype=DTYPE)


@dataclass
class SequenceSpec:
    """Recipe for a sequence of slowly changing shifted families.

    Family 0 uses the base matrix, family ``l >= 1`` the perturbation
    ``perturb(base, eps, seed + l)``.  Its shifts are the base shifts
    (extended to ``s`` values in steps of ``shift_increment``) moved by
    ``l * family_shift_offset``; ``family_shift_offset`` defaults to
    ``s * shift_increment`` so every family gets fresh shifts.
    """

    source: object
    count: int = 1
    eps: float = 0.0
    base_shifts: list = field(default_factory=lambda: [0.0])
    shift_increment: float = 0.0
    family_shift_offset: float | None = None
    s: int | None = None
    seed: int = 0
    x0_scale: float = 1e-6

    def __post_init__(self):
        if self.s is None:
            self.s = len(np.atleast_1d(self.base_shifts))
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if self.family_shift_offset is None:
            self.family_shift_offset = self.s * self.shift_increment


def build_sequence(spec: SequenceSpec) -> list:
    """Materialize the families described by ``spec``; bit-reproducible per seed."""
    base = load_matrix(spec.source)
    n = base.shape[0]
    shifts0 = expand_shifts(spec.base_shifts, spec.s, spec.shift_increment)
    families = []
    for ell in range(spec.count):
        A = base if ell == 0 else perturb(base, spec.eps, spec.seed + ell)
        shifts = shifts0 + ell * spec.family_shift_offset
        B = random_block(n, spec.s, (spec.seed, ell))
        rng = _rng(spec.seed, 0x0C0, ell)
        X0 = spec.x0_scale * (rng.uniform(-1, 1, (n, spec.s)) + 1j * rng.uniform(-1, 1, (n, spec.s)))
        families.append(ShiftedFamily(A, shifts, B, X0))
    return families
