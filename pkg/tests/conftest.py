"""Independent brute-force oracles shared by the test modules.

Nothing here imports the solver code paths it is used to check: Hamiltonians
are assembled from Kronecker products, costs from explicit edge loops, and
maximal sets from exhaustive enumeration.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from aqo_workbench.graphs import Graph, ProblemInstance

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.diag([-1.0, 1.0])  # basis order |0>, |1>; bit set means spin up
I2 = np.eye(2)


def kron_site(op: np.ndarray, i: int, n: int) -> np.ndarray:
    # qubit i is bit i of the basis index, i.e. the (n-1-i)-th kron factor
    out = np.array([[1.0]])
    for k in reversed(range(n)):
        out = np.kron(out, op if k == i else I2)
    return out


def brute_cost(n: int, edges, c: float, x: int) -> float:
    bits = [(x >> i) & 1 for i in range(n)]
    return -sum(bits) + c * sum(bits[a] * bits[b] for a, b in edges)


def brute_problem_matrix(n: int, edges, c: float) -> np.ndarray:
    return np.diag([brute_cost(n, edges, c, x) for x in range(1 << n)])


def brute_driver_matrix(delta) -> np.ndarray:
    n = len(delta)
    return -sum(d * kron_site(SX, i, n) for i, d in enumerate(delta))


def brute_ising_matrix(h, j: dict, shift: float, n: int) -> np.ndarray:
    mat = shift * np.eye(1 << n)
    for i in range(n):
        mat = mat + h[i] * kron_site(SZ, i, n)
    for (a, b), v in j.items():
        mat = mat + v * kron_site(SZ, a, n) @ kron_site(SZ, b, n)
    return mat


def brute_maximal_sets(n: int, edges) -> list[int]:
    adj = [0] * n
    for a, b in edges:
        adj[a] |= 1 << b
        adj[b] |= 1 << a
    out = []
    for x in range(1 << n):
        if any((x >> i) & 1 and adj[i] & x for i in range(n)):
            continue
        covered = x
        for i in range(n):
            if (x >> i) & 1:
                covered |= adj[i]
        if covered == (1 << n) - 1:
            out.append(x)
    return out


def random_edges(n: int, p: float, rng) -> tuple[tuple[int, int], ...]:
    return tuple(e for e in itertools.combinations(range(n), 2) if rng.random() < p)


def make_instance(n: int, edges, c: float = 2.0, known_mis=None) -> ProblemInstance:
    return ProblemInstance(graph=Graph(n, tuple(edges)), c=c, known_mis=known_mis)


@pytest.fixture
def path4() -> ProblemInstance:
    # maximum independent sets {0,2}, {0,3}, {1,3} form one two-flip cluster
    return make_instance(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def star4() -> ProblemInstance:
    # centre 0 with three leaves: MIS {1,2,3}, lone local minimum {0}
    return make_instance(4, [(0, 1), (0, 2), (0, 3)], known_mis=0b1110)
