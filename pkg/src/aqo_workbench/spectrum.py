"""Exact low-lying spectrum of ``H(s) = A(s) H_B + B(s) H_P``.

Two eigensolver routes: dense ``eigh`` for small systems and ARPACK Lanczos
(``eigsh``) on a matrix-free operator for larger ones.  The driver term is
applied as a bit-flip stencil, never stored.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .errors import InputError, NumericalError, SizeError
from .ising import Schedule, TransverseFieldModel, diagonal, schedule_values

DENSE_CAP = int(os.environ.get("AQO_DENSE_CAP", 12))
ITERATIVE_CAP = int(os.environ.get("AQO_ITERATIVE_CAP", 24))
# auto mode switches to Lanczos above this size
AUTO_DENSE_MAX = 8
RESIDUAL_TOL = 1e-9
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
DEGENERATE_GAP = 1e-12


def apply_driver(delta: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``H_B v`` with ``H_B = -sum_i delta_i X_i``."""
    n = delta.size
    out = np.zeros_like(v)
    for i in range(n):
        flipped = v.reshape(-1, 2, 1 << i)[:, ::-1, :].reshape(-1)
        out -= delta[i] * flipped
    return out


def driver_matrix(delta: np.ndarray) -> np.ndarray:
    n = delta.size
    dim = 1 << n
    mat = np.zeros((dim, dim))
    idx = np.arange(dim)
    for i in range(n):
        mat[idx, idx ^ (1 << i)] -= delta[i]
    return mat


class _Cache:
    """Per-model diagonal, reused across the many s points of a scan."""

    def __init__(self, m: TransverseFieldModel):
        self.model = m
        self.diag = diagonal(m)
        self.driver_dense = None


def _cache(m: TransverseFieldModel) -> _Cache:
    c = getattr(m, "_spectrum_cache", None)
    if c is None:
        c = _Cache(m)
        object.__setattr__(m, "_spectrum_cache", c)
    return c


def _start_vector(dim: int) -> np.ndarray:
    # deterministic and never orthogonal to the (positive) ground state
    k = np.arange(dim)
    return 1.0 + 0.1 * np.cos(0.7 * k + 0.3)


def set_caps(dense: int | None = None, iterative: int | None = None) -> None:
    """Override the process-wide qubit caps (defaults come from the environment)."""
    global DENSE_CAP, ITERATIVE_CAP
    if dense is not None:
        DENSE_CAP = int(dense)
    if iterative is not None:
        ITERATIVE_CAP = int(iterative)


def _choose_method(n: int, method: str, dense_cap: int, iterative_cap: int) -> str:
    if method == "auto":
        method = "dense" if n <= min(AUTO_DENSE_MAX, dense_cap) else "iterative"
    if method == "dense":
        if n > dense_cap:
            raise SizeError(f"dense diagonalisation refused for n={n} > dense cap {dense_cap}", "dense_cap")
    elif method == "iterative":
        if n > iterative_cap:
            raise SizeError(f"iterative diagonalisation refused for n={n} > iterative cap {iterative_cap}", "iterative_cap")
    else:
        raise InputError(f"unknown eigensolver method {method!r}")
    return method


def hamiltonian_norm_bound(m: TransverseFieldModel, a: float, b: float) -> float:
    c = _cache(m)
    return abs(a) * float(np.sum(m.delta)) + abs(b) * float(np.max(np.abs(c.diag)))


def lowest_eigenpairs(
    m: TransverseFieldModel,
    sch: Schedule,
    s: float,
    count: int = 2,
    method: str = "auto",
    dense_cap: int | None = None,
    iterative_cap: int | None = None,
    v0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``count`` eigenvalues (ascending) and orthonormal eigenvectors as columns."""
    a, b, _, _ = schedule_values(sch, s)
    return eigenpairs_ab(m, a, b, count, method, dense_cap, iterative_cap, v0)


def eigenpairs_ab(m, a, b, count=2, method="auto", dense_cap=None, iterative_cap=None, v0=None):
    dense_cap = DENSE_CAP if dense_cap is None else dense_cap
    iterative_cap = ITERATIVE_CAP if iterative_cap is None else iterative_cap
    method = _choose_method(m.n, method, dense_cap, iterative_cap)
    c = _cache(m)
    dim = 1 << m.n
    count = min(count, dim)
    if method == "dense":
        if c.driver_dense is None:
            c.driver_dense = driver_matrix(m.delta)
        mat = a * c.driver_dense
        mat[np.diag_indices(dim)] += b * c.diag
        vals, vecs = np.linalg.eigh(mat)
        return vals[:count], vecs[:, :count]

    diag_b = b * c.diag
    delta = m.delta

    def matvec(v):
        v = np.asarray(v).reshape(-1)
        return a * apply_driver(delta, v) + diag_b * v

    op = LinearOperator((dim, dim), matvec=matvec, dtype=float)
    # extra vectors keep the wanted levels stable when excited states are near-degenerate
    k = min(count + 2, dim - 1)
    start = _start_vector(dim) if v0 is None else np.asarray(v0, float) + 1e-3 * _start_vector(dim)
    try:
        vals, vecs = eigsh(op, k=k, which="SA", v0=start, tol=1e-13, ncv=min(dim, max(2 * k + 1, 24)), maxiter=dim * 10)
    except ArpackNoConvergence as exc:
        raise NumericalError(f"Lanczos did not converge at A={a}, B={b}", residuals=exc.eigenvalues) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order][:count], vecs[:, order][:, :count]
    norm = max(hamiltonian_norm_bound(m, a, b), 1e-300)
    res = np.array([np.linalg.norm(matvec(vecs[:, q]) - vals[q] * vecs[:, q]) for q in range(vals.size)])
    if np.any(res > RESIDUAL_TOL * norm):
        raise NumericalError(f"eigenpair residuals {res} exceed {RESIDUAL_TOL}*||H||", residuals=res)
    return vals, vecs


@dataclass
class SpectrumProfile:
    s_grid: np.ndarray
    energies: np.ndarray  # (grid, levels)
    gap: np.ndarray
    s_star: float
    g_min: float
    degenerate_at_end: bool
    levels: int = 2
    tracks: "TrackData | None" = field(default=None, repr=False)

    def gap_at(self, s: float) -> float:
        return float(np.interp(s, self.s_grid, self.gap))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s"] + [f"E{k}" for k in range(self.energies.shape[1])] + ["gap"])
        for s, row, g in zip(self.s_grid, self.energies, self.gap):
            w.writerow([_fmt(s)] + [_fmt(v) for v in row] + [_fmt(g)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"s_star": round(self.s_star, 10), "g_min": float(f"{self.g_min:.10g}")}


@dataclass
class TrackData:
    s_grid: np.ndarray
    z_expect: np.ndarray  # (n, grid)
    degenerate: np.ndarray  # (grid,) bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.z_expect.shape[0]
        w.writerow(["s"] + [f"q{i}" for i in range(n)])
        for k, s in enumerate(self.s_grid):
            w.writerow([_fmt(s)] + [_fmt(v) for v in self.z_expect[:, k]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrackData":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][:1] != ["s"]:
            raise InputError("not a track CSV")
        data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(rows[0]))
        return cls(data[:, 0], data[:, 1:].T.copy(), np.zeros(len(data), bool))


@dataclass
class AdiabaticTimeResult:
    t_a: float
    matrix_element: float
    g_min: float
    s_star: float

    def to_dict(self) -> dict:
        return {
            "t_a": None if math.isinf(self.t_a) else float(f"{self.t_a:.10g}"),
            "matrix_element": float(f"{self.matrix_element:.10g}"),
            "g_min": float(f"{self.g_min:.10g}"),
        }


def _fmt(v: float) -> str:
    return f"{float(v):.10g}"


def z_expectations(n: int, psi: np.ndarray) -> np.ndarray:
    prob = np.abs(psi) ** 2
    prob = prob / prob.sum()
    idx = np.arange(prob.size)
    return np.array([float(np.sum(prob * (((idx >> i) & 1) * 2.0 - 1.0))) for i in range(n)])


def _golden_min(f, lo: float, hi: float, tol: float) -> tuple[float, float]:
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def gap_profile(
    m: TransverseFieldModel,
    sch: Schedule,
    grid_size: int = 101,
    levels: int = 2,
    refine_tol: float = 1e-5,
    with_tracks: bool = False,
    method: str = "auto",
) -> SpectrumProfile:
    """Scan ``E0..E_{levels-1}`` on a uniform grid and refine the minimum gap.

    The minimum is refined by golden-section search between the grid
    neighbours of the smallest sampled gap; the refined value is kept only if
    it does not exceed the best grid value.
    """
    if grid_size < 2:
        raise InputError("grid_size must be at least 2")
    levels = max(levels, 2)
    grid = np.linspace(0.0, 1.0, grid_size)
    energies = np.empty((grid_size, levels))
    z = np.empty((m.n, grid_size)) if with_tracks else None
    degenerate = np.zeros(grid_size, dtype=bool)
    prev = None
    for k, s in enumerate(grid):
        vals, vecs = lowest_eigenpairs(m, sch, float(s), levels, method=method, v0=prev)
        energies[k] = vals
        prev = vecs[:, 0]
        if with_tracks:
            z[:, k] = z_expectations(m.n, vecs[:, 0])
            degenerate[k] = vals[1] - vals[0] < DEGENERATE_GAP
    gap = np.maximum(energies[:, 1] - energies[:, 0], 0.0)
    k = int(np.argmin(gap))
    s_star, g_min = float(grid[k]), float(gap[k])
    lo, hi = float(grid[max(k - 1, 0)]), float(grid[min(k + 1, grid_size - 1)])
    if hi > lo:
        def gap_fn(s):
            vals, _ = lowest_eigenpairs(m, sch, s, 2, method=method)
            return max(vals[1] - vals[0], 0.0)

        s_ref, g_ref = _golden_min(gap_fn, lo, hi, refine_tol)
        if g_ref <= g_min:
            s_star, g_min = float(s_ref), float(g_ref)
    tracks = TrackData(grid, z, degenerate) if with_tracks else None
    return SpectrumProfile(grid, energies, gap, s_star, g_min, bool(gap[-1] < DEGENERATE_GAP), levels, tracks)


def sigma_z_tracks(m: TransverseFieldModel, sch: Schedule, grid_size: int = 101, method: str = "auto") -> TrackData:
    grid = np.linspace(0.0, 1.0, grid_size)
    z = np.empty((m.n, grid_size))
    degenerate = np.zeros(grid_size, dtype=bool)
    prev = None
    for k, s in enumerate(grid):
        vals, vecs = lowest_eigenpairs(m, sch, float(s), 2, method=method, v0=prev)
        prev = vecs[:, 0]
        z[:, k] = z_expectations(m.n, vecs[:, 0])
        degenerate[k] = vals[1] - vals[0] < DEGENERATE_GAP
    return TrackData(grid, z, degenerate)


def adiabatic_time(m: TransverseFieldModel, sch: Schedule, profile: SpectrumProfile, method: str = "auto") -> AdiabaticTimeResult:
    """``t_a = (4/pi) |<0|dH/ds|1>| / g_min**2`` at the refined anticrossing."""
    s = profile.s_star
    a, b, da, db = schedule_values(sch, s)
    vals, vecs = lowest_eigenpairs(m, sch, s, 2, method=method)
    g = float(vals[1] - vals[0])
    v0, v1 = vecs[:, 0], vecs[:, 1]
    diag = _cache(m).diag
    element = da * float(v0 @ apply_driver(m.delta, v1)) + db * float(v0 @ (diag * v1))
    element = abs(element)
    if g < DEGENERATE_GAP:
        return AdiabaticTimeResult(math.inf, element, g, s)
    return AdiabaticTimeResult(4.0 / math.pi * element / g**2, element, g, s)


def detect_discontinuity(t: TrackData, threshold: float = 0.5) -> tuple[bool, float | None]:
    """Largest single-step change of any qubit's track; flagged above ``threshold``."""
    if t.z_expect.shape[1] < 2:
        return False, None
    jumps = np.abs(np.diff(t.z_expect, axis=1)).max(axis=0)
    k = int(np.argmax(jumps))
    if jumps[k] <= threshold:
        return False, None
    return True, float(0.5 * (t.s_grid[k] + t.s_grid[k + 1]))
