from __future__ import annotations

import math

import numpy as np
import pytest

from aqo_workbench import spectrum
from aqo_workbench.errors import InputError, SizeError
from aqo_workbench.graphs import Graph
from aqo_workbench.ising import LINEAR, Schedule, TransverseFieldModel, build_model
from aqo_workbench.spectrum import (
    TrackData,
    adiabatic_time,
    apply_driver,
    detect_discontinuity,
    gap_profile,
    lowest_eigenpairs,
    sigma_z_tracks,
)

from conftest import brute_driver_matrix, brute_problem_matrix, make_instance, random_edges


def one_qubit(h: float) -> TransverseFieldModel:
    return TransverseFieldModel(1, np.array([h]), {}, np.array([1.0]), 0.0, Graph(1))


def test_two_level_gap_formula():
    m = one_qubit(-1.0)
    for s in (0.0, 0.2, 0.5, 0.9, 1.0):
        vals, _ = lowest_eigenpairs(m, LINEAR, s, 2)
        assert vals[1] - vals[0] == pytest.approx(2 * math.sqrt(s**2 + (1 - s) ** 2), abs=1e-12)
    prof = gap_profile(m, LINEAR, grid_size=11, refine_tol=1e-8)
    assert prof.g_min == pytest.approx(math.sqrt(2), abs=1e-10)
    assert prof.s_star == pytest.approx(0.5, abs=1e-6)


def test_isolated_node_instance_gap():
    # H = -(1-s) X - (s/2) Z + const, so gap^2 = 4(1-s)^2 + s^2, minimal at s = 4/5
    m = build_model(make_instance(1, []))
    prof = gap_profile(m, LINEAR, grid_size=21, refine_tol=1e-8)
    assert prof.s_star == pytest.approx(0.8, abs=1e-6)
    assert prof.g_min == pytest.approx(math.sqrt(0.8), abs=1e-10)


def test_edgeless_pair_is_tensor_product():
    m = build_model(make_instance(2, []))
    vals, _ = lowest_eigenpairs(m, LINEAR, 0.5, 4)
    one, _ = lowest_eigenpairs(build_model(make_instance(1, [])), LINEAR, 0.5, 2)
    want = sorted(a + b for a in one for b in one)
    np.testing.assert_allclose(vals, want, atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_driver_stencil_matches_kron(seed):
    rng = np.random.default_rng(seed)
    n = 6
    delta = rng.uniform(0.25, 3.0, n)
    v = rng.normal(size=1 << n)
    np.testing.assert_allclose(apply_driver(delta, v), brute_driver_matrix(delta) @ v, atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_dense_and_iterative_agree_with_kron_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    n = 8
    edges = random_edges(n, 0.35, rng)
    delta = rng.uniform(0.25, 2.0, n)
    m = build_model(make_instance(n, edges), delta)
    s = float(rng.uniform(0.1, 0.9))
    full = (1 - s) * brute_driver_matrix(delta) + s * brute_problem_matrix(n, edges, 2.0)
    want = np.linalg.eigvalsh(full)[:3]
    for method in ("dense", "iterative"):
        vals, vecs = lowest_eigenpairs(m, LINEAR, s, 3, method=method)
        np.testing.assert_allclose(vals, want, atol=1e-9)
        np.testing.assert_allclose(full @ vecs[:, 0], vals[0] * vecs[:, 0], atol=1e-8)


def test_size_caps():
    m = build_model(make_instance(6, []))
    with pytest.raises(SizeError) as err:
        lowest_eigenpairs(m, LINEAR, 0.5, method="dense", dense_cap=5)
    assert err.value.cap_name == "dense_cap"
    with pytest.raises(SizeError) as err:
        lowest_eigenpairs(m, LINEAR, 0.5, method="iterative", iterative_cap=5)
    assert err.value.cap_name == "iterative_cap"
    with pytest.raises(InputError):
        lowest_eigenpairs(m, LINEAR, 0.5, method="magic")


def test_set_caps_is_honoured():
    m = build_model(make_instance(4, []))
    old = (spectrum.DENSE_CAP, spectrum.ITERATIVE_CAP)
    try:
        spectrum.set_caps(3, 3)
        with pytest.raises(SizeError):
            lowest_eigenpairs(m, LINEAR, 0.5)
    finally:
        spectrum.set_caps(*old)


def test_profile_shape_and_refinement():
    m = build_model(make_instance(5, [(0, 1), (1, 2), (2, 3), (3, 4)]))
    prof = gap_profile(m, LINEAR, grid_size=3)
    assert prof.energies.shape == (3, 2)
    assert prof.g_min <= prof.gap.min() + 1e-15
    assert prof.to_csv().count("\n") == 4
    fine = gap_profile(m, LINEAR, grid_size=201, refine_tol=1e-7)
    assert fine.g_min <= fine.gap.min()
    with pytest.raises(InputError):
        gap_profile(m, LINEAR, grid_size=1)


def test_degenerate_final_ground_state(path4):
    prof = gap_profile(build_model(path4), LINEAR, grid_size=11)
    assert prof.degenerate_at_end
    assert prof.gap[-1] == pytest.approx(0.0, abs=1e-9)


def test_adiabatic_time_single_qubit():
    m = one_qubit(-1.0)
    prof = gap_profile(m, LINEAR, grid_size=11, refine_tol=1e-9)
    res = adiabatic_time(m, LINEAR, prof)
    # dH/ds = X - Z; at s = 1/2 the eigenvectors of -(X + Z)/2 give |<0|X - Z|1>| = sqrt(2)
    assert res.matrix_element == pytest.approx(math.sqrt(2), abs=1e-6)
    assert res.t_a == pytest.approx(4 / math.pi * math.sqrt(2) / 2, abs=1e-6)


def test_adiabatic_time_tabulated_schedule_uses_derivatives():
    table = tuple((s, 2.0 * (1 - s) + 0.01, 3.0 * s + 0.01) for s in np.linspace(0, 1, 6))
    sch = Schedule("tabulated", table)
    m = one_qubit(-1.0)
    prof = gap_profile(m, sch, grid_size=21, refine_tol=1e-9)
    res = adiabatic_time(m, sch, prof)
    a, b, da, db = spectrum.schedule_values(sch, prof.s_star)
    mat = a * np.array([[0, -1.0], [-1.0, 0]]) + b * np.diag([1.0, -1.0])
    _, vecs = np.linalg.eigh(mat)
    dmat = da * np.array([[0, -1.0], [-1.0, 0]]) + db * np.diag([1.0, -1.0])
    assert res.matrix_element == pytest.approx(abs(vecs[:, 0] @ dmat @ vecs[:, 1]), rel=1e-8)


def test_tracks_and_detector():
    grid = np.linspace(0, 1, 5)
    smooth = TrackData(grid, np.array([[-1, -0.5, 0, 0.5, 1.0]]), np.zeros(5, bool))
    assert detect_discontinuity(smooth) == (False, None)
    jump = TrackData(grid, np.array([[0.9, 0.9, 0.9, -0.9, -0.9], [0, 0, 0, 0, 0.0]]), np.zeros(5, bool))
    found, where = detect_discontinuity(jump)
    assert found and where == pytest.approx(0.625)


def test_sigma_z_tracks_csv(star4):
    t = sigma_z_tracks(build_model(star4), LINEAR, grid_size=3)
    lines = t.to_csv().splitlines()
    assert lines[0] == "s,q0,q1,q2,q3"
    assert len(lines) == 4
    # at s = 0 every qubit is in |+>, at s = 1 in the classical ground state {1,2,3}
    np.testing.assert_allclose(t.z_expect[:, 0], 0.0, atol=1e-9)
    np.testing.assert_allclose(t.z_expect[:, -1], [-1, 1, 1, 1], atol=1e-9)


def test_tracks_csv_round_trip():
    grid = np.linspace(0, 1, 4)
    t = TrackData(grid, np.array([[-1, -0.25, 0.5, 1.0], [0.1, 0.2, 0.3, 0.4]]), np.zeros(4, bool))
    back = TrackData.from_csv(t.to_csv())
    np.testing.assert_allclose(back.s_grid, grid)
    np.testing.assert_allclose(back.z_expect, t.z_expect)
    assert back.to_csv() == t.to_csv()
    with pytest.raises(InputError):
        TrackData.from_csv("x,y\n1,2\n")
