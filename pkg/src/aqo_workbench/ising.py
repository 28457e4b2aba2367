"""Transverse-field Ising form of the MIS cost and annealing schedules.

Qubit ``i`` in the computational state ``sigma^z_i = +1`` means node ``i`` is
in the set, i.e. ``x_i = (1 + sigma^z_i) / 2``.  Energies are dimensionless
(hbar = 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import InputError
from .graphs import Graph, ProblemInstance, nodes_of

SCHEDULE_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class TransverseFieldModel:
    """``H_P = sum h_i Z_i + sum_edges J_ij Z_i Z_j + shift`` and ``H_B = -sum delta_i X_i``."""

    n: int
    h: np.ndarray
    j: dict[tuple[int, int], float]
    delta: np.ndarray
    constant_shift: float
    graph: Graph = field(repr=False)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        delta = np.asarray(self.delta, dtype=float)
        if h.shape != (self.n,) or delta.shape != (self.n,):
            raise InputError("h and delta must both have length n")
        if not np.all(delta > 0):
            raise InputError("transverse fields delta_i must all be positive")
        h.setflags(write=False)
        delta.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "delta", delta)
        neigh: list[list[tuple[int, float]]] = [[] for _ in range(self.n)]
        for (a, b), v in self.j.items():
            neigh[a].append((b, v))
            neigh[b].append((a, v))
        object.__setattr__(self, "_neighbours", neigh)

    def with_delta(self, delta: Sequence[float]) -> "TransverseFieldModel":
        return TransverseFieldModel(self.n, self.h, self.j, np.asarray(delta, float), self.constant_shift, self.graph)

    def local_field(self, x: int, i: int) -> float:
        f = self.h[i]
        for k, v in self._neighbours[i]:
            f += v * (1.0 if (x >> k) & 1 else -1.0)
        return f


def build_model(inst: ProblemInstance, delta: Sequence[float] | None = None) -> TransverseFieldModel:
    """Ising coefficients whose diagonal reproduces :func:`graphs.cost` exactly.

    Substituting ``x_i = (1 + Z_i)/2`` gives ``h_i = (c * deg_i - 2) / 4``,
    ``J_ij = c / 4`` on edges and a constant ``c|E|/4 - n/2``.
    """
    g = inst.graph
    c = inst.c
    h = np.array([(c * g.degree(i) - 2.0) / 4.0 for i in range(g.n)])
    couplings = {e: c / 4.0 for e in g.edges}
    shift = c * len(g.edges) / 4.0 - g.n / 2.0
    if delta is None:
        delta = np.ones(g.n)
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (g.n,):
        raise InputError(f"delta has length {delta.shape}, expected {g.n}")
    return TransverseFieldModel(g.n, h, couplings, delta, shift, g)


def _spin(x: int, i: int) -> float:
    return 1.0 if (x >> i) & 1 else -1.0


def diagonal_energy(m: TransverseFieldModel, x: int) -> float:
    e = m.constant_shift
    for i in range(m.n):
        e += m.h[i] * _spin(x, i)
    for (a, b), v in m.j.items():
        e += v * _spin(x, a) * _spin(x, b)
    return e


def diagonal(m: TransverseFieldModel) -> np.ndarray:
    """Diagonal of ``H_P`` over all ``2**n`` basis states, indexed by bitmask."""
    idx = np.arange(1 << m.n, dtype=np.int64)
    z = np.empty((m.n, idx.size))
    for i in range(m.n):
        z[i] = ((idx >> i) & 1) * 2.0 - 1.0
    e = np.full(idx.size, m.constant_shift)
    e += m.h @ z
    for (a, b), v in m.j.items():
        e += v * z[a] * z[b]
    return e


def flip_cost(m: TransverseFieldModel, x: int, i: int) -> float:
    """Energy change of flipping qubit ``i`` in state ``x``, in O(degree)."""
    if not 0 <= i < m.n:
        raise InputError(f"qubit {i} outside [0, {m.n})")
    return -2.0 * _spin(x, i) * m.local_field(x, i)


def gradient_descent(m: TransverseFieldModel, x: int) -> int:
    """Steepest single-flip descent; ties go to the lowest qubit index."""
    while True:
        best_i = -1
        best = 0.0
        for i in range(m.n):
            d = flip_cost(m, x, i)
            if d < best - 1e-12:
                best, best_i = d, i
        if best_i < 0:
            return x
        x ^= 1 << best_i


def descent_map(m: TransverseFieldModel, energies: np.ndarray | None = None) -> np.ndarray:
    """Vectorised :func:`gradient_descent` applied to every basis state at once."""
    if energies is None:
        energies = diagonal(m)
    states = np.arange(1 << m.n, dtype=np.int64)
    bits = (np.int64(1) << np.arange(m.n, dtype=np.int64))
    active = states.copy()
    pos = np.arange(states.size)
    while active.size:
        delta = energies[active[:, None] ^ bits[None, :]] - energies[active][:, None]
        k = np.argmin(delta, axis=1)
        improving = delta[np.arange(active.size), k] < -1e-12
        if not improving.any():
            break
        active = active[improving] ^ bits[k[improving]]
        pos = pos[improving]
        states[pos] = active
    return states


def is_local_minimum(m: TransverseFieldModel, x: int) -> bool:
    return all(flip_cost(m, x, i) > 0 for i in range(m.n))


@dataclass(frozen=True)
class Schedule:
    """Annealing energy scales ``A(s)`` (driver) and ``B(s)`` (problem)."""

    kind: str = "linear"
    table: tuple[tuple[float, float, float], ...] | None = None
    energy_unit: str = "dimensionless"

    def __post_init__(self):
        if self.kind not in ("linear", "tabulated"):
            raise InputError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "linear":
            return
        if not self.table or len(self.table) < 2:
            raise InputError("tabulated schedule needs at least two rows")
        arr = np.asarray(self.table, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise InputError("schedule table rows must be (s, A, B)")
        s, a, b = arr.T
        if np.any(np.diff(s) <= 0):
            raise InputError("schedule s values must be strictly increasing")
        if abs(s[0]) > 1e-12 or abs(s[-1] - 1.0) > 1e-12:
            raise InputError("schedule table must span s = 0 to s = 1")
        if np.any(a < 0) or np.any(b < 0):
            raise InputError("A(s) and B(s) must be nonnegative")
        if not (a[0] > 10 * b[0] and b[-1] > 10 * a[-1]):
            raise InputError("schedule must satisfy A(0)/B(0) > 10 and B(1)/A(1) > 10")
        object.__setattr__(self, "table", tuple(tuple(map(float, row)) for row in arr))
        object.__setattr__(self, "_a", PchipInterpolator(s, a))
        object.__setattr__(self, "_b", PchipInterpolator(s, b))

    def to_json(self) -> str:
        doc = {
            "version": SCHEDULE_FORMAT_VERSION,
            "kind": self.kind,
            "table": None if self.table is None else [list(r) for r in self.table],
            "energy_unit": self.energy_unit,
        }
        return json.dumps(doc, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Schedule":
        try:
            doc = json.loads(text)
            table = doc.get("table")
            return cls(
                kind=doc.get("kind", "linear"),
                table=None if table is None else tuple(tuple(r) for r in table),
                energy_unit=doc.get("energy_unit", "dimensionless"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed schedule document: {exc}") from exc


LINEAR = Schedule()


def schedule_values(sch: Schedule, s: float) -> tuple[float, float, float, float]:
    """``(A, B, dA/ds, dB/ds)`` at ``s``."""
    if not 0.0 <= s <= 1.0:
        raise InputError(f"s={s} outside [0, 1]")
    if sch.kind == "linear":
        return 1.0 - s, s, -1.0, 1.0
    a, b = sch._a, sch._b
    return float(a(s)), float(b(s)), float(a.derivative()(s)), float(b.derivative()(s))


def lambda_of(sch: Schedule, s: float) -> float:
    """Driver-to-problem ratio ``A(s)/B(s)``; infinite where ``B`` vanishes."""
    a, b, _, _ = schedule_values(sch, s)
    return np.inf if b == 0 else a / b


def state_label(x: int) -> str:
    return "{" + ",".join(map(str, nodes_of(x))) + "}"
