from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aqo_workbench.errors import InputError
from aqo_workbench.graphs import Graph, ProblemInstance, is_maximal_independent
from aqo_workbench.ising import (
    LINEAR,
    Schedule,
    build_model,
    descent_map,
    diagonal,
    diagonal_energy,
    flip_cost,
    gradient_descent,
    is_local_minimum,
    lambda_of,
    schedule_values,
    state_label,
)

from conftest import brute_cost, brute_ising_matrix, make_instance, random_edges


def test_degree_three_node_field():
    # star centre: h = (c * deg - 2) / 4 = (2 * 3 - 2) / 4
    inst = make_instance(4, [(0, 1), (0, 2), (0, 3)])
    m = build_model(inst)
    assert m.h[0] == pytest.approx(1.0)
    assert m.h[1] == pytest.approx(0.0)
    assert m.j[(0, 1)] == pytest.approx(0.5)


def test_isolated_node_model():
    m = build_model(make_instance(1, []))
    assert m.h[0] == pytest.approx(-0.5)
    assert diagonal(m).tolist() == [0.0, -1.0]


@pytest.mark.parametrize("seed", range(10))
def test_diagonal_equals_cost_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    c = float(rng.uniform(1.1, 4.0))
    edges = random_edges(n, 0.4, rng)
    m = build_model(make_instance(n, edges, c=c))
    want = np.array([brute_cost(n, edges, c, x) for x in range(1 << n)])
    np.testing.assert_allclose(diagonal(m), want, atol=1e-12)
    # the Pauli-sum matrix built from the coefficients is the same diagonal
    np.testing.assert_allclose(np.diag(brute_ising_matrix(m.h, m.j, m.constant_shift, n)), want, atol=1e-12)


@given(st.integers(0, 255), st.integers(0, 7))
@settings(max_examples=100, deadline=None)
def test_flip_cost_matches_energy_difference(x, i):
    m = build_model(make_instance(8, [(0, 1), (1, 2), (2, 5), (3, 7), (4, 5), (5, 6), (0, 7)]))
    assert flip_cost(m, x, i) == pytest.approx(diagonal_energy(m, x ^ (1 << i)) - diagonal_energy(m, x))


def test_delta_validation():
    inst = make_instance(2, [(0, 1)])
    with pytest.raises(InputError):
        build_model(inst, [1.0, 0.0])
    with pytest.raises(InputError):
        build_model(inst, [1.0])
    m = build_model(inst, [0.5, 2.0])
    with pytest.raises(ValueError):
        m.delta[0] = 3.0


def test_descent_reaches_maximal_sets():
    rng = np.random.default_rng(4)
    edges = random_edges(9, 0.35, rng)
    inst = make_instance(9, edges)
    m = build_model(inst)
    labels = descent_map(m)
    for x in range(1 << 9):
        d = int(labels[x])
        assert d == gradient_descent(m, x)
        assert is_maximal_independent(inst.graph, d)
        assert is_local_minimum(m, d)
    # minima are fixed points
    for d in set(labels.tolist()):
        assert labels[d] == d


def test_descent_tie_break_lowest_index():
    m = build_model(make_instance(3, []))
    # from the empty set all three additions tie; qubit 0 goes first
    assert gradient_descent(m, 0) == 0b111
    m2 = build_model(make_instance(2, [(0, 1)]))
    assert gradient_descent(m2, 0) == 0b01
    assert gradient_descent(m2, 0b11) == 0b10


def test_linear_schedule_values():
    assert schedule_values(LINEAR, 0.25) == (0.75, 0.25, -1.0, 1.0)
    assert lambda_of(LINEAR, 0.25) == pytest.approx(3.0)
    assert lambda_of(LINEAR, 0.0) == np.inf
    with pytest.raises(InputError):
        schedule_values(LINEAR, 1.5)


def _table():
    s = np.linspace(0, 1, 11)
    return tuple((float(x), float(5 * (1 - x) ** 2 + 0.01), float(4 * x**2 + 0.02)) for x in s)


def test_tabulated_schedule_interpolates_nodes_and_roundtrips():
    sch = Schedule("tabulated", _table(), "GHz")
    for s, a, b in _table():
        va, vb, _, _ = schedule_values(sch, s)
        assert va == pytest.approx(a) and vb == pytest.approx(b)
    a, b, da, db = schedule_values(sch, 0.55)
    assert da < 0 < db
    back = Schedule.from_json(sch.to_json())
    assert back.table == sch.table and back.energy_unit == "GHz"


@pytest.mark.parametrize(
    "table",
    [
        ((0.0, 1.0, 0.0),),
        ((0.0, 1.0, 0.0), (0.5, 1.0, 1.0), (0.4, 0.0, 1.0), (1.0, 0.0, 1.0)),
        ((0.0, 1.0, 0.0), (0.9, 0.0, 1.0)),
        ((0.0, 1.0, 0.5), (1.0, 0.0, 1.0)),
        ((0.0, -1.0, 0.0), (1.0, 0.0, 1.0)),
    ],
)
def test_bad_schedules_rejected(table):
    with pytest.raises(InputError):
        Schedule("tabulated", table)


def test_schedule_json_errors():
    with pytest.raises(InputError):
        Schedule.from_json(json.dumps({"kind": "cubic"}))


def test_state_label():
    assert state_label(0b1010) == "{1,3}"
