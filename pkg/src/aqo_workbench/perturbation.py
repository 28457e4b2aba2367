"""Second-order degenerate perturbation theory for ``H_P + lambda * H_B``.

A cluster is a set of equal-energy local minima linked by two-flip paths.
Within a cluster the driver acts at second order through the effective matrix

    A[k, k'] = -sum over paths (i, j) from M_k to M_k' of delta_i delta_j / B[k, i]

where ``B[k, i]`` is the classical cost of flipping qubit ``i`` out of
``M_k``.  Its lowest eigenpair gives the curvature ``e2`` and the weights
``C_k`` of the lowest superposition; comparing curvatures of the global and a
local cluster predicts where their perturbed levels cross.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError, InvariantError
from .graphs import ProblemInstance, enumerate_maximal_sets, nodes_of, popcount
from .ising import TransverseFieldModel, build_model, diagonal_energy, flip_cost

EQ_TOL = 1e-9


def two_flip_paths(m: TransverseFieldModel, a: int, b: int) -> list[tuple[int, int]]:
    """Ordered qubit pairs ``(i, j)`` such that flipping ``i`` then ``j`` takes ``a`` to ``b``."""
    if a == b:
        return [(i, i) for i in range(m.n)]
    if popcount(a) != popcount(b):
        raise InputError("two-flip paths are only defined between sets of equal size")
    diff = a ^ b
    if popcount(diff) != 2:
        return []
    u, w = nodes_of(diff)
    # the member of a is removed first in the first listed path
    first, second = (u, w) if (a >> u) & 1 else (w, u)
    return [(first, second), (second, first)]


def two_flip_components(sets: Sequence[int]) -> list[list[int]]:
    """Connected components of ``sets`` under Hamming distance 2, each sorted, ordered by first member."""
    index = {s: k for k, s in enumerate(sets)}
    parent = list(range(len(sets)))

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    width = max((s.bit_length() for s in sets), default=0)
    for k, s in enumerate(sets):
        for u in nodes_of(s):
            base = s & ~(1 << u)
            for w in range(width):
                if (s >> w) & 1:
                    continue
                other = index.get(base | (1 << w))
                if other is not None:
                    ra, rb = find(k), find(other)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for k, s in enumerate(sets):
        groups.setdefault(find(k), []).append(s)
    comps = [sorted(g) for g in groups.values()]
    comps.sort(key=lambda g: g[0])
    return comps


@dataclass
class ClusterState:
    members: list[int]
    e0: float
    coefficients: np.ndarray | None = None
    e2: float | None = None
    adjacency: list[tuple[int, int]] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return popcount(self.members[0])

    @property
    def k(self) -> int:
        return len(self.members)

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "K": self.k,
            "e0": self.e0,
            "e2": None if self.e2 is None else float(f"{self.e2:.12g}"),
            "coefficients": None if self.coefficients is None else [float(f"{c:.12g}") for c in self.coefficients],
            "members": [nodes_of(s) for s in self.members],
            "flags": list(self.flags),
        }


@dataclass
class CrossingPrediction:
    lambda_star: float | None
    cluster_global: ClusterState
    cluster_local: ClusterState
    condition_met: bool
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lambda_star": None if self.lambda_star is None else float(f"{self.lambda_star:.12g}"),
            "condition_met": self.condition_met,
            "local_size": self.cluster_local.size,
            "local_K": self.cluster_local.k,
            "flags": list(self.flags),
        }


def find_clusters(m: TransverseFieldModel, minima: Sequence[int]) -> list[ClusterState]:
    by_energy: dict[float, list[int]] = {}
    for s in sorted(set(minima)):
        by_energy.setdefault(round(diagonal_energy(m, s), 9), []).append(s)
    out = []
    for e0 in sorted(by_energy):
        for comp in two_flip_components(by_energy[e0]):
            pos = {s: k for k, s in enumerate(comp)}
            adjacency = []
            for k, s in enumerate(comp):
                for t in comp[k + 1:]:
                    if popcount(s ^ t) == 2:
                        adjacency.append((k, pos[t]))
            out.append(ClusterState(members=comp, e0=e0, adjacency=adjacency))
    return out


def _members(cluster) -> list[int]:
    return list(cluster.members) if isinstance(cluster, ClusterState) else list(cluster)


def effective_matrix(m: TransverseFieldModel, cluster) -> np.ndarray:
    members = _members(cluster)
    if len({popcount(s) for s in members}) > 1:
        raise InputError("cluster members must all have the same size")
    energies = {round(diagonal_energy(m, s), 9) for s in members}
    if len(energies) > 1:
        raise InputError("cluster members are not degenerate")
    pos = {s: k for k, s in enumerate(members)}
    size = len(members)
    mat = np.zeros((size, size))
    d = m.delta
    for k, s in enumerate(members):
        b = np.array([flip_cost(m, s, i) for i in range(m.n)])
        if np.any(b <= 0):
            raise InvariantError(f"state {s:#x} is not a strict local minimum (flip costs {b})")
        mat[k, k] -= float(np.sum(d * d / b))
        for u in nodes_of(s):
            base = s & ~(1 << u)
            for w in range(m.n):
                if w == u or (s >> w) & 1:
                    continue
                other = pos.get(base | (1 << w))
                if other is None:
                    continue
                # path from s: flip u (remove) then w, and flip w (add) then u
                mat[k, other] -= d[u] * d[w] / b[u] + d[w] * d[u] / b[w]
    return mat


def path_sum_energy(m: TransverseFieldModel, members: Sequence[int], coeffs: Sequence[float]) -> float:
    """Second-order energy summed path by path over every ordered member pair."""
    total = 0.0
    for k, a in enumerate(members):
        for kp, b in enumerate(members):
            for i, j in two_flip_paths(m, a, b):
                total -= m.delta[i] * m.delta[j] * coeffs[k] * coeffs[kp] / flip_cost(m, a, i)
    return total


def _lowest_positive_vector(mat: np.ndarray) -> tuple[float, np.ndarray, bool]:
    vals, vecs = np.linalg.eigh(mat)
    scale = max(1.0, float(np.max(np.abs(vals))))
    low = vals[0]
    space = vecs[:, np.abs(vals - low) <= 1e-10 * scale]
    if space.shape[1] == 1:
        v = space[:, 0]
        v = v if v.sum() >= 0 else -v
    else:
        ones = np.ones(mat.shape[0])
        v = space @ (space.T @ ones)
    v = v / np.linalg.norm(v)
    return float(low), v, bool(np.all(v > 0))


def cluster_state(m: TransverseFieldModel, cluster) -> ClusterState:
    members = _members(cluster)
    base = cluster if isinstance(cluster, ClusterState) else None
    mat = effective_matrix(m, members)
    e2, coeffs, positive = _lowest_positive_vector(mat)
    flags = list(base.flags) if base else []
    if not positive:
        flags.append("mixed-sign coefficients")
    check = path_sum_energy(m, members, coeffs)
    if abs(check - e2) > 1e-10 * max(1.0, abs(e2)):
        raise InvariantError(f"path-sum energy {check} disagrees with effective-matrix eigenvalue {e2}")
    e0 = diagonal_energy(m, members[0])
    adjacency = base.adjacency if base else [
        (k, kp) for k in range(len(members)) for kp in range(k + 1, len(members)) if popcount(members[k] ^ members[kp]) == 2
    ]
    return ClusterState(members, e0, coeffs, e2, adjacency, flags)


def first_order_correction(m: TransverseFieldModel, cluster) -> float:
    """``<M|H_B|M>`` for the cluster superposition; zero for same-size clusters."""
    members = _members(cluster)
    if len({popcount(s) for s in members}) > 1:
        raise InputError("first-order correction requested for a cluster with mixed set sizes")
    coeffs = getattr(cluster, "coefficients", None)
    if coeffs is None:
        coeffs = np.full(len(members), 1.0 / math.sqrt(len(members)))
    total = 0.0
    for k, a in enumerate(members):
        for kp, b in enumerate(members):
            diff = a ^ b
            if popcount(diff) == 1:
                total -= m.delta[diff.bit_length() - 1] * coeffs[k] * coeffs[kp]
    return total


def predict_crossing(global_cluster: ClusterState, local_cluster: ClusterState) -> CrossingPrediction:
    if not global_cluster.e0 < local_cluster.e0:
        raise InputError("global cluster must lie strictly below the local cluster at lambda = 0")
    met = local_cluster.e2 < global_cluster.e2
    flags = []
    lam = None
    if met:
        lam = math.sqrt(-(local_cluster.e0 - global_cluster.e0) / (local_cluster.e2 - global_cluster.e2))
        if lam > 1.0:
            flags.append("outside perturbative regime")
    return CrossingPrediction(lam, global_cluster, local_cluster, met, flags)


ANALYSIS_FORMAT_VERSION = 1


@dataclass
class CrossingAnalysis:
    global_cluster: ClusterState
    local_clusters: list[ClusterState]
    predictions: list[CrossingPrediction]

    @property
    def earliest_crossing(self) -> CrossingPrediction | None:
        """The prediction the ground state meets last on its way to ``lambda = 0``.

        The global level is lowest only for ``lambda`` below every crossing
        point, so the relevant anticrossing is the smallest ``lambda_star``.
        """
        met = [p for p in self.predictions if p.condition_met]
        return min(met, key=lambda p: p.lambda_star) if met else None

    def to_dict(self) -> dict:
        best = self.earliest_crossing
        return {
            "version": ANALYSIS_FORMAT_VERSION,
            "clusters": [self.global_cluster.to_dict()] + [c.to_dict() for c in self.local_clusters],
            "predictions": [p.to_dict() for p in self.predictions],
            "lambda_star": None if best is None else best.lambda_star,
        }


def analyze_instance(
    inst: ProblemInstance,
    delta: Sequence[float] | None = None,
    depth: int = 2,
    model: TransverseFieldModel | None = None,
) -> CrossingAnalysis:
    """Cluster analysis of the MIS and the maximal sets up to ``depth`` nodes smaller."""
    m = model if model is not None else build_model(inst, delta)
    sets = enumerate_maximal_sets(inst.graph, 0)
    top = max(popcount(s) for s in sets)
    keep = [s for s in sets if popcount(s) >= top - depth]
    clusters = find_clusters(m, keep)
    ground_e0 = min(c.e0 for c in clusters)
    ground = [c for c in clusters if c.e0 == ground_e0]
    if len(ground) != 1:
        raise InputError("crossing analysis needs a unique global-minimum cluster")
    g_state = cluster_state(m, ground[0])
    locals_ = [cluster_state(m, c) for c in clusters if c.e0 > ground_e0]
    predictions = [predict_crossing(g_state, c) for c in locals_]
    return CrossingAnalysis(g_state, locals_, predictions)
