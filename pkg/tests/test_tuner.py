from __future__ import annotations

import json

import numpy as np
import pytest

from aqo_workbench.errors import InputError, InvariantError
from aqo_workbench.graphs import generate_hard_instance, mask_of, popcount
from aqo_workbench.ising import LINEAR, build_model
from aqo_workbench.perturbation import cluster_state, find_clusters, two_flip_components
from aqo_workbench.sampler import SampleSet, SamplerConfig, choose_sample_point, sample_exact
from aqo_workbench.spectrum import gap_profile
from aqo_workbench.tuner import (
    TunerConfig,
    compute_mu,
    histogram_csv,
    raw_update,
    rescale_delta,
    run,
    unsolved_histogram,
    update_delta,
)

from conftest import make_instance


def one_sample(x: int, count: int = 1) -> SampleSet:
    return SampleSet(0.5, [(x, count)], [(x, count)], count)


def test_mu_return_paths_only(star4):
    m = build_model(star4)
    # the MIS {1,2,3}: centre costs 5 to add, each leaf costs 1 to remove
    mu = compute_mu(m, one_sample(star4.known_mis))
    np.testing.assert_allclose(mu, [1 / 5, 1, 1, 1])


def test_mu_with_partner(path4):
    m = build_model(path4)
    mu = compute_mu(m, one_sample(mask_of([0, 2])))
    # {0,2} -> {0,3} through (2,3) and (3,2); adding 1 costs 3
    np.testing.assert_allclose(mu, [1, 1 / 3, 2, 2])


def test_mu_is_a_weighted_mean(path4):
    m = build_model(path4)
    a, b = mask_of([0, 2]), mask_of([1, 3])
    both = SampleSet(0.5, [], [(a, 3), (b, 1)], 4)
    want = (3 * compute_mu(m, one_sample(a)) + compute_mu(m, one_sample(b))) / 4
    np.testing.assert_allclose(compute_mu(m, both), want)


def test_mu_excludes_global_and_rejects_empty(star4):
    m = build_model(star4)
    s = SampleSet(0.5, [], [(star4.known_mis, 5), (0b0001, 5)], 10)
    np.testing.assert_allclose(compute_mu(m, s, exclude=[star4.known_mis]), compute_mu(m, one_sample(0b0001)))
    with pytest.raises(InputError):
        compute_mu(m, one_sample(star4.known_mis), exclude=[star4.known_mis])


def test_mu_positive_lower_bound():
    from aqo_workbench.ising import flip_cost

    inst = generate_hard_instance(12, 18, 4, seed=1)
    m = build_model(inst, np.linspace(0.25, 3, 12))
    x = inst.known_mis
    mu = compute_mu(m, one_sample(x))
    bound = np.array([m.delta[i] / flip_cost(m, x, i) for i in range(12)])
    assert np.all(mu >= bound - 1e-15) and np.all(mu > 0)


def test_update_examples():
    cfg = TunerConfig()
    assert raw_update(np.array([1.0]), np.array([4.0]), cfg.beta_for(1))[0] == pytest.approx(0.5)
    out = update_delta(np.ones(3), np.full(3, 2.0), 1, cfg)
    np.testing.assert_allclose(out, [0.25] * 3)
    with pytest.raises(InvariantError):
        raw_update(np.ones(2), np.array([1.0, 0.0]), 0.5)


def test_geometric_mean_identity():
    rng = np.random.default_rng(0)
    cfg = TunerConfig()
    delta = rng.uniform(0.5, 2, 5)
    history = [delta]
    d = delta
    for kappa in range(1, 7):
        mu = rng.uniform(0.1, 5, 5)
        history.append(1 / mu)
        d = raw_update(d, mu, cfg.beta_for(kappa))
        want = np.exp(np.mean(np.log(np.array(history)), axis=0))
        np.testing.assert_allclose(d, want, rtol=1e-12, atol=0)


def test_two_step_closed_form():
    cfg = TunerConfig()
    mu1, mu2 = np.array([2.0, 3.0]), np.array([5.0, 0.5])
    d = raw_update(raw_update(np.ones(2), mu1, cfg.beta_for(1)), mu2, cfg.beta_for(2))
    np.testing.assert_allclose(d, (mu1 * mu2) ** (-1 / 3), rtol=1e-12)


@pytest.mark.parametrize(
    "raw,want", [([0.1, 0.2], [0.25, 0.5]), ([1, 100], [0.25, 8]), ([0.25, 4], [0.25, 4])]
)
def test_rescale_examples(raw, want):
    np.testing.assert_allclose(rescale_delta(np.array(raw, float), TunerConfig()), want)


def test_fixed_beta_rule():
    cfg = TunerConfig(beta_rule="fixed", beta=0.3)
    assert cfg.beta_for(1) == cfg.beta_for(9) == 0.3
    with pytest.raises(InputError):
        cfg.beta_for(0)


@pytest.mark.parametrize(
    "kw", [dict(delta_min=1, delta_max=1), dict(beta=0), dict(p_min=1.0), dict(max_iterations=-1), dict(beta_rule="x")]
)
def test_config_validation(kw):
    with pytest.raises(InputError):
        TunerConfig(**kw)


def test_easy_instance_solved_immediately(star4):
    res = run(star4, LINEAR, TunerConfig(grid_size=11), SamplerConfig(r=100))
    assert res.solved_at == 1
    assert res.iterations[0].mu is None and len(res.iterations) == 1


def test_zero_iterations_is_one_evaluation():
    inst = generate_hard_instance(8, 8, 3, seed=0)
    cfg = TunerConfig(max_iterations=0, t_a_max=1e-9, p_min=0.999, grid_size=11)
    res = run(inst, LINEAR, cfg, SamplerConfig(r=50))
    assert res.solved_at is None and len(res.iterations) == 1
    assert res.summary()["solved"] is False


def test_run_history_and_determinism():
    inst = generate_hard_instance(8, 8, 3, seed=0)
    cfg = TunerConfig(max_iterations=3, t_a_max=1e-9, p_min=0.999, grid_size=11)
    a = run(inst, LINEAR, cfg, SamplerConfig(r=100, seed=4, s_point_rule="fixed_offset"))
    b = run(inst, LINEAR, cfg, SamplerConfig(r=100, seed=4, s_point_rule="fixed_offset"))
    assert a.to_jsonl() == b.to_jsonl()
    assert [it.kappa for it in a.iterations] == [1, 2, 3, 4]
    for it in a.iterations[:-1]:
        d = np.array(it.delta_after)
        assert d.min() == pytest.approx(0.25) and d.max() <= 8.0
        assert it.mu is not None and min(it.mu) > 0
    lines = [json.loads(l) for l in a.to_jsonl().splitlines()]
    assert lines[-1]["record"] == "summary" and lines[-1]["solved"] is False
    assert lines[1]["delta_before"] == lines[0]["delta_after"]


def test_histogram_is_nonincreasing():
    class R:
        def __init__(self, k):
            self.solved_at = k

    runs = [R(1), R(3), R(None), None, R(2)]
    hist = unsolved_histogram(runs, 4)
    assert hist == [(1, 4), (2, 3), (3, 2), (4, 2)]
    assert histogram_csv(hist).splitlines()[0] == "iteration,unsolved"


def _dominant_cluster(m, inst, samples):
    local = {x: c for x, c in samples.descended if x != inst.known_mis}
    size = max(popcount(x) for x in local)
    comps = two_flip_components(sorted(x for x in local if popcount(x) == size))
    best = max(comps, key=lambda cl: sum(local[x] for x in cl))
    return best, {x: local[x] for x in best}


def _cluster_of(m, inst, member):
    from aqo_workbench.graphs import enumerate_maximal_sets

    same = [s for s in enumerate_maximal_sets(inst.graph) if popcount(s) == popcount(member)]
    for cl in find_clusters(m, same):
        if member in cl.members:
            return cl
    raise AssertionError("member not found")


@pytest.mark.parametrize("seed", [0, 2])
def test_mu_sum_tracks_cluster_curvature(seed):
    inst = generate_hard_instance(12, 18, 4, seed)
    m = build_model(inst)
    prof = gap_profile(m, LINEAR, grid_size=31, method="iterative")
    s = choose_sample_point(prof, SamplerConfig(s_point_rule="fixed_offset"))
    ss = sample_exact(m, LINEAR, s, SamplerConfig(r=500, seed=seed), method="iterative")
    members, counts = _dominant_cluster(m, inst, ss)
    sub = SampleSet(s, [], sorted(counts.items()), sum(counts.values()))
    mu = compute_mu(m, sub)
    e2 = cluster_state(m, _cluster_of(m, inst, members[0])).e2
    assert float(m.delta @ mu) == pytest.approx(abs(e2), rel=0.25)


@pytest.mark.parametrize("seed", [0, 2])
def test_update_penalises_sampled_cluster(seed):
    inst = generate_hard_instance(12, 18, 4, seed)
    m = build_model(inst)
    prof = gap_profile(m, LINEAR, grid_size=31, method="iterative")
    s = choose_sample_point(prof, SamplerConfig(s_point_rule="fixed_offset"))
    ss = sample_exact(m, LINEAR, s, SamplerConfig(r=500, seed=seed), method="iterative")
    members, _ = _dominant_cluster(m, inst, ss)
    mu = compute_mu(m, ss, exclude=[inst.known_mis])
    cfg = TunerConfig()
    new = build_model(inst, update_delta(m.delta, mu, 1, cfg))
    before = cluster_state(m, _cluster_of(m, inst, members[0])).e2
    after = cluster_state(new, _cluster_of(new, inst, members[0])).e2
    assert after > before
    # relative to the global minimum the sampled cluster loses curvature too
    g_before = cluster_state(m, [inst.known_mis]).e2
    g_after = cluster_state(new, [inst.known_mis]).e2
    assert after / g_after < before / g_before
