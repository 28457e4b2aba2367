"""Computational-basis samples of the ground state just before an anticrossing.

Sampling the instantaneous ground state slightly before ``s*`` stands in for
running the annealer too fast: the samples land in the local minima the
system would follow through the anticrossing.  Each raw sample is pushed to
its local minimum by steepest descent; the descended view is what the tuner
consumes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .errors import InputError
from .graphs import ProblemInstance
from .ising import Schedule, TransverseFieldModel, descent_map, diagonal, gradient_descent, schedule_values
from .qmc import run_chains
from .rng import child_seed, make_rng
from .spectrum import AdiabaticTimeResult, SpectrumProfile, lowest_eigenpairs

SAMPLESET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "exact"
    r: int = 500
    s_point_rule: str = "gap_ratio"
    rho: float = 10.0
    offset: float = 0.05
    seed: int = 0
    qmc_slices: int = 64
    qmc_beta: float = 20.0
    qmc_burn_in: int = 1000
    qmc_interval: int = 1
    qmc_chains: int = 4

    def __post_init__(self):
        if self.kind not in ("exact", "qmc"):
            raise InputError(f"unknown sampler kind {self.kind!r}")
        if self.r < 1:
            raise InputError("r must be at least 1")
        if self.s_point_rule not in ("gap_ratio", "fixed_offset"):
            raise InputError(f"unknown s-point rule {self.s_point_rule!r}")
        if not self.rho > 1:
            raise InputError("rho must exceed 1")
        if not 0 < self.offset <= 0.2:
            raise InputError("offset must lie in (0, 0.2]")
        if self.qmc_slices < 2 or self.qmc_chains < 1 or self.qmc_interval < 1 or self.qmc_burn_in < 0:
            raise InputError("invalid QMC parameters")
        if not self.qmc_beta > 0:
            raise InputError("qmc_beta must be positive")

    def replace(self, **kw) -> "SamplerConfig":
        d = asdict(self)
        d.update(kw)
        return SamplerConfig(**d)


@dataclass
class SampleSet:
    s_point: float
    raw: list[tuple[int, int]]
    descended: list[tuple[int, int]]
    total: int
    kind: str = "exact"
    seed: int = 0
    # exact probability mass per descent destination; exact sampler only
    basin_mass: dict[int, float] | None = None
    config: dict = field(default_factory=dict)

    def descended_counts(self) -> dict[int, int]:
        return dict(self.descended)

    def to_json(self) -> str:
        doc = {
            "version": SAMPLESET_FORMAT_VERSION,
            "kind": self.kind,
            "s_point": round(self.s_point, 12),
            "seed": self.seed,
            "total": self.total,
            "raw": [[f"{s:x}", c] for s, c in self.raw],
            "descended": [[f"{s:x}", c] for s, c in self.descended],
            "basin_mass": None
            if self.basin_mass is None
            else [[f"{s:x}", float(f"{p:.12g}")] for s, p in sorted(self.basin_mass.items())],
            "config": self.config,
        }
        return json.dumps(doc, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SampleSet":
        doc = json.loads(text)
        basin = doc.get("basin_mass")
        return cls(
            s_point=doc["s_point"],
            raw=[(int(s, 16), c) for s, c in doc["raw"]],
            descended=[(int(s, 16), c) for s, c in doc["descended"]],
            total=doc["total"],
            kind=doc.get("kind", "exact"),
            seed=doc.get("seed", 0),
            basin_mass=None if basin is None else {int(s, 16): p for s, p in basin},
            config=doc.get("config", {}),
        )


def choose_sample_point(profile: SpectrumProfile, cfg: SamplerConfig, flags: list | None = None) -> float:
    """Point just before the anticrossing at which to sample.

    ``gap_ratio``: the largest grid point left of ``s*`` whose gap has
    recovered to ``rho * g_min``.  Falls back to ``fixed_offset`` (and appends
    a flag) when no such point exists.
    """
    if cfg.s_point_rule == "gap_ratio":
        target = cfg.rho * profile.g_min
        left = [(s, g) for s, g in zip(profile.s_grid, profile.gap) if s < profile.s_star and g >= target]
        if left:
            return float(max(left)[0])
        if flags is not None:
            flags.append("gap_ratio_fallback")
    return max(0.0, profile.s_star - cfg.offset)


def _aggregate(states: np.ndarray) -> list[tuple[int, int]]:
    vals, counts = np.unique(states, return_counts=True)
    return [(int(v), int(c)) for v, c in zip(vals, counts)]


def _descend(m: TransverseFieldModel, raw: list[tuple[int, int]], basins: np.ndarray | None) -> list[tuple[int, int]]:
    acc: dict[int, int] = {}
    for s, c in raw:
        d = int(basins[s]) if basins is not None else gradient_descent(m, s)
        acc[d] = acc.get(d, 0) + c
    return sorted(acc.items())


def basin_labels(m: TransverseFieldModel) -> np.ndarray:
    """Descent destination of every basis state; cached on the model's diagonal."""
    cached = getattr(m, "_basins", None)
    if cached is None:
        cached = descent_map(m, diagonal(m))
        object.__setattr__(m, "_basins", cached)
    return cached


def sample_exact(m: TransverseFieldModel, sch: Schedule, s: float, cfg: SamplerConfig, method: str = "auto") -> SampleSet:
    """Draw ``r`` basis states from ``|psi_0(s)|^2`` with a seeded multinomial."""
    _, vecs = lowest_eigenpairs(m, sch, s, 1, method=method)
    prob = vecs[:, 0] ** 2
    prob = prob / prob.sum()
    rng = make_rng(cfg.seed)
    counts = rng.multinomial(cfg.r, prob)
    nz = np.nonzero(counts)[0]
    raw = [(int(k), int(counts[k])) for k in nz]
    basins = basin_labels(m)
    mass: dict[int, float] = {}
    for dest, p in zip(*_group_sum(basins, prob)):
        mass[int(dest)] = float(p)
    return SampleSet(
        s_point=float(s),
        raw=raw,
        descended=_descend(m, raw, basins),
        total=cfg.r,
        kind="exact",
        seed=cfg.seed,
        basin_mass=mass,
        config=asdict(cfg),
    )


def _group_sum(labels: np.ndarray, weights: np.ndarray):
    uniq, inv = np.unique(labels, return_inverse=True)
    return uniq, np.bincount(inv, weights=weights)


def sample_qmc(m: TransverseFieldModel, sch: Schedule, s: float, cfg: SamplerConfig) -> SampleSet:
    """Path-integral Monte Carlo samples at inverse temperature ``cfg.qmc_beta``."""
    if np.any(np.asarray(m.delta) <= 0):
        raise InputError("QMC needs strictly positive transverse fields")
    a, b, _, _ = schedule_values(sch, s)
    chains = cfg.qmc_chains
    per = [cfg.r // chains + (1 if k < cfg.r % chains else 0) for k in range(chains)]
    seeds = [child_seed(cfg.seed, "qmc-chain", k) for k in range(chains)]
    states = run_chains(
        m.n, m.h, m.j, m.delta, a, b, cfg.qmc_beta, cfg.qmc_slices, cfg.qmc_burn_in, cfg.qmc_interval, per, seeds
    )
    raw = _aggregate(states)
    basins = basin_labels(m) if m.n <= 20 else None
    return SampleSet(
        s_point=float(s),
        raw=raw,
        descended=_descend(m, raw, basins),
        total=cfg.r,
        kind="qmc",
        seed=cfg.seed,
        basin_mass=None,
        config=asdict(cfg),
    )


def draw_samples(m: TransverseFieldModel, sch: Schedule, s: float, cfg: SamplerConfig, method: str = "auto") -> SampleSet:
    if cfg.kind == "exact":
        return sample_exact(m, sch, s, cfg, method=method)
    return sample_qmc(m, sch, s, cfg)


def at_least_once(p: float, r: int) -> float:
    """Probability that ``r`` independent tries hit an event of probability ``p``."""
    return 1.0 - (1.0 - p) ** r


@dataclass(frozen=True)
class SuccessThresholds:
    t_a_max: float = math.inf
    p_min: float = 0.005


@dataclass
class Verdict:
    success: bool
    reason: str | None
    t_a: float | None
    p_global: float
    p_at_least_once: float
    ta_pass: bool
    basin_pass: bool

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "reason": self.reason,
            "t_a": None if self.t_a is None or math.isinf(self.t_a) else float(f"{self.t_a:.10g}"),
            "p_global": float(f"{self.p_global:.10g}"),
            "p_at_least_once": float(f"{self.p_at_least_once:.10g}"),
            "ta_pass": self.ta_pass,
            "basin_pass": self.basin_pass,
        }


def global_basin_probability(samples: SampleSet, inst: ProblemInstance) -> float:
    if inst.known_mis is None:
        return 0.0
    if samples.basin_mass is not None:
        return float(samples.basin_mass.get(inst.known_mis, 0.0))
    hits = samples.descended_counts().get(inst.known_mis, 0)
    return hits / samples.total


def evaluate_success(
    samples: SampleSet,
    inst: ProblemInstance,
    t_a: AdiabaticTimeResult | None,
    thresholds: SuccessThresholds = SuccessThresholds(),
) -> Verdict:
    """Solved if the adiabatic time is short enough or the global basin is populated enough."""
    p = global_basin_probability(samples, inst)
    ta_value = None if t_a is None else t_a.t_a
    ta_pass = ta_value is not None and ta_value < thresholds.t_a_max
    basin_pass = p > thresholds.p_min
    reason = "t_a" if ta_pass else ("global_basin" if basin_pass else None)
    return Verdict(
        success=ta_pass or basin_pass,
        reason=reason,
        t_a=ta_value,
        p_global=p,
        p_at_least_once=at_least_once(p, samples.total),
        ta_pass=ta_pass,
        basin_pass=basin_pass,
    )


def total_variation(p: dict[int, float], q: dict[int, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def empirical_distribution(samples: SampleSet) -> dict[int, float]:
    return {s: c / samples.total for s, c in samples.raw}


def exact_distribution(m: TransverseFieldModel, sch: Schedule, s: float, method: str = "auto") -> np.ndarray:
    _, vecs = lowest_eigenpairs(m, sch, s, 1, method=method)
    prob = vecs[:, 0] ** 2
    return prob / prob.sum()
