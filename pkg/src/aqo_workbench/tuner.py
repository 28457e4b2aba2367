"""Iterative transverse-field tuning.

Each round anneals (here: exact spectrum plus sampling just before the
anticrossing), checks for success, estimates how much every qubit feeds the
second-order curvature of the sampled local minima, and shrinks the
transverse fields of the worst offenders.  With the harmonic exponent the
update is a running geometric mean over every penalty seen so far.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError, InvariantError
from .graphs import ProblemInstance, is_maximal_independent
from .ising import Schedule, TransverseFieldModel, build_model, diagonal_energy, flip_cost
from .rng import child_seed
from .sampler import SampleSet, SamplerConfig, SuccessThresholds, Verdict, choose_sample_point, draw_samples, evaluate_success
from .spectrum import adiabatic_time, detect_discontinuity, gap_profile

RUN_FORMAT_VERSION = 1
ENERGY_TOL = 1e-9

# Settings for 12-qubit tuning corpora.  Every instance at that size already
# puts far more than p_min of its pre-crossing weight in the global basin, so
# the basin route is switched off and only t_a decides.
DESK_EXPERIMENT = {
    "grid": 31,
    "method": "iterative",
    "t_a_max": 160.0,
    "t_f": 0.8,
    "p_min": 0.999,
    "r": 500,
    "max_iter": 15,
    "s_point": "fixed_offset",
    "offset": 0.05,
}


@dataclass(frozen=True)
class TunerConfig:
    r: int = 500
    beta_rule: str = "harmonic"
    beta: float = 0.5  # used only by the fixed rule
    delta_min: float = 0.25
    delta_max: float = 8.0
    max_iterations: int = 15
    t_a_max: float = 160.0
    p_min: float = 0.005
    t_f: float = 0.8
    grid_size: int = 41
    refine_tol: float = 1e-4
    method: str = "auto"
    track_threshold: float = 0.5

    def __post_init__(self):
        if not 0 < self.delta_min < self.delta_max:
            raise InputError("need 0 < delta_min < delta_max")
        if self.beta_rule not in ("harmonic", "fixed"):
            raise InputError(f"unknown beta rule {self.beta_rule!r}")
        if not 0 < self.beta <= 1:
            raise InputError("beta must lie in (0, 1]")
        if not 0 < self.p_min < 1:
            raise InputError("p_min must lie in (0, 1)")
        if self.max_iterations < 0 or self.r < 1:
            raise InputError("max_iterations must be >= 0 and r >= 1")
        if not self.t_a_max > 0:
            raise InputError("t_a_max must be positive")

    def beta_for(self, kappa: int) -> float:
        if kappa < 1:
            raise InputError("kappa starts at 1")
        return 1.0 / (kappa + 1) if self.beta_rule == "harmonic" else self.beta

    @property
    def thresholds(self) -> SuccessThresholds:
        return SuccessThresholds(t_a_max=self.t_a_max, p_min=self.p_min)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["t_a_max"] = None if math.isinf(self.t_a_max) else self.t_a_max
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TunerConfig":
        d = dict(d)
        if d.get("t_a_max") is None:
            d["t_a_max"] = math.inf
        return cls(**d)


def _partner_weight(m: TransverseFieldModel, x: int, e_x: float, i: int) -> float:
    """``sum_j delta_j`` over flips j that take ``flip_i(x)`` to a degenerate maximal set (j = i included)."""
    total = float(m.delta[i])  # return path
    y = x ^ (1 << i)
    for j in range(m.n):
        if j == i:
            continue
        z = y ^ (1 << j)
        if abs(diagonal_energy(m, z) - e_x) < ENERGY_TOL and is_maximal_independent(m.graph, z):
            total += float(m.delta[j])
    return total


def minimum_contributions(m: TransverseFieldModel, x: int) -> np.ndarray:
    """Per-qubit curvature contribution of one local minimum ``x``."""
    e_x = diagonal_energy(m, x)
    out = np.empty(m.n)
    for i in range(m.n):
        b = flip_cost(m, x, i)
        if b <= 0:
            raise InvariantError(f"state {x:#x} is not a strict local minimum (B_{i} = {b})")
        out[i] = _partner_weight(m, x, e_x, i) / b
    return out


def compute_mu(
    m: TransverseFieldModel,
    samples: SampleSet,
    cluster_energy: float | None = None,
    exclude: Sequence[int] = (),
) -> np.ndarray:
    """Sample-weighted mean of per-minimum contributions over the descended samples.

    Each sampled minimum is scored against its own energy class.  States in
    ``exclude`` (the known global minimum) are left out.  ``cluster_energy``
    is accepted for reporting symmetry; it does not filter.
    """
    skip = set(exclude)
    pairs = [(x, c) for x, c in samples.descended if x not in skip and c > 0]
    if not pairs:
        raise InputError("no local-minimum samples to compute mu from")
    acc = np.zeros(m.n)
    weight = 0
    for x, c in pairs:
        acc += c * minimum_contributions(m, x)
        weight += c
    return acc / weight


def modal_energy(m: TransverseFieldModel, samples: SampleSet, exclude: Sequence[int] = ()) -> float | None:
    by_energy: dict[float, int] = {}
    for x, c in samples.descended:
        if x in exclude:
            continue
        e = round(diagonal_energy(m, x), 9)
        by_energy[e] = by_energy.get(e, 0) + c
    if not by_energy:
        return None
    return max(sorted(by_energy), key=lambda e: by_energy[e])


def rescale_delta(delta: np.ndarray, cfg: TunerConfig) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    if np.any(delta <= 0):
        raise InvariantError("transverse fields must stay positive")
    scaled = delta * (cfg.delta_min / delta.min())
    return np.minimum(scaled, cfg.delta_max)


def raw_update(delta_old: np.ndarray, mu: np.ndarray, beta: float) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0) or not np.all(np.isfinite(mu)):
        raise InvariantError("mu must be positive and finite")
    return np.asarray(delta_old, dtype=float) ** (1.0 - beta) * mu ** (-beta)


def update_delta(delta_old: np.ndarray, mu: np.ndarray, kappa: int, cfg: TunerConfig) -> np.ndarray:
    return rescale_delta(raw_update(delta_old, mu, cfg.beta_for(kappa)), cfg)


@dataclass
class IterationRecord:
    kappa: int
    delta_before: list[float]
    s_point: float
    spectrum_summary: dict
    verdict: dict
    sample_summary: dict
    mu: list[float] | None = None
    delta_after: list[float] | None = None
    flags: list[str] = field(default_factory=list)
    tracks_csv: str | None = field(default=None, repr=False)
    discontinuity: float | None = None

    def to_dict(self) -> dict:
        d = {
            "kappa": self.kappa,
            "delta_before": _round_list(self.delta_before),
            "mu": None if self.mu is None else _round_list(self.mu),
            "delta_after": None if self.delta_after is None else _round_list(self.delta_after),
            "s_point": round(self.s_point, 12),
            "spectrum_summary": self.spectrum_summary,
            "verdict": self.verdict,
            "sample_summary": self.sample_summary,
            "flags": self.flags,
        }
        if self.tracks_csv is not None:
            d["discontinuity"] = self.discontinuity
        return d


def _round_list(v) -> list[float]:
    return [float(f"{x:.12g}") for x in v]


@dataclass
class TunerRun:
    iterations: list[IterationRecord]
    solved_at: int | None
    config: dict
    sampler_config: dict

    @property
    def solved(self) -> bool:
        return self.solved_at is not None

    def summary(self) -> dict:
        last = self.iterations[-1]
        return {
            "solved": self.solved,
            "solved_at": self.solved_at,
            "evaluations": len(self.iterations),
            "final_delta": _round_list(last.delta_before),
            "final_verdict": last.verdict,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps({"record": "iteration", **it.to_dict()}, sort_keys=True) for it in self.iterations]
        lines.append(
            json.dumps(
                {
                    "record": "summary",
                    "version": RUN_FORMAT_VERSION,
                    "config": self.config,
                    "sampler_config": self.sampler_config,
                    **self.summary(),
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


def _sample_summary(samples: SampleSet, inst: ProblemInstance, top: int = 5) -> dict:
    ranked = sorted(samples.descended, key=lambda p: (-p[1], p[0]))
    return {
        "total": samples.total,
        "distinct_raw": len(samples.raw),
        "distinct_minima": len(samples.descended),
        "global_hits": samples.descended_counts().get(inst.known_mis, 0) if inst.known_mis is not None else 0,
        "top_minima": [[f"{x:x}", c] for x, c in ranked[:top]],
    }


def evaluate_round(
    inst: ProblemInstance,
    sch: Schedule,
    delta: np.ndarray,
    cfg: TunerConfig,
    sampler_cfg: SamplerConfig,
    with_tracks: bool = False,
):
    """One anneal-and-check round: spectrum, adiabatic time, samples, verdict."""
    m = build_model(inst, delta)
    profile = gap_profile(
        m, sch, grid_size=cfg.grid_size, refine_tol=cfg.refine_tol, with_tracks=with_tracks, method=cfg.method
    )
    ta = adiabatic_time(m, sch, profile, method=cfg.method)
    flags: list[str] = []
    s_point = choose_sample_point(profile, sampler_cfg, flags)
    samples = draw_samples(m, sch, s_point, sampler_cfg, method=cfg.method)
    verdict = evaluate_success(samples, inst, ta, cfg.thresholds)
    return m, profile, ta, samples, verdict, flags


def run(
    inst: ProblemInstance,
    sch: Schedule,
    cfg: TunerConfig = TunerConfig(),
    sampler_cfg: SamplerConfig = SamplerConfig(),
    with_tracks: bool = False,
) -> TunerRun:
    """Tune until the success check passes or ``cfg.max_iterations`` updates are spent.

    ``solved_at`` counts anneal-and-check rounds, so an instance that is
    already easy has ``solved_at == 1``.
    """
    if inst.known_mis is None:
        raise InputError("tuning needs an instance with a known maximum independent set")
    delta = np.ones(inst.n)
    records: list[IterationRecord] = []
    solved_at = None
    kappa = 1
    while True:
        round_cfg = sampler_cfg.replace(r=cfg.r, seed=child_seed(sampler_cfg.seed, "sample", kappa - 1))
        m, profile, ta, samples, verdict, flags = evaluate_round(inst, sch, delta, cfg, round_cfg, with_tracks)
        spec = {**profile.summary(), **ta.to_dict()}
        rec = IterationRecord(
            kappa=kappa,
            delta_before=list(delta),
            s_point=samples.s_point,
            spectrum_summary=spec,
            verdict=verdict.to_dict(),
            sample_summary=_sample_summary(samples, inst),
            flags=flags,
        )
        if with_tracks:
            rec.tracks_csv = profile.tracks.to_csv()
            _, where = detect_discontinuity(profile.tracks, cfg.track_threshold)
            rec.discontinuity = where
        records.append(rec)
        if verdict.success:
            solved_at = kappa
            break
        if kappa > cfg.max_iterations:
            break
        energy = modal_energy(m, samples, exclude=(inst.known_mis,))
        try:
            mu = compute_mu(m, samples, energy, exclude=(inst.known_mis,))
        except InputError:
            rec.flags.append("no_local_minimum_samples")
            break
        new_delta = update_delta(delta, mu, kappa, cfg)
        rec.mu = list(mu)
        rec.delta_after = list(new_delta)
        delta = new_delta
        kappa += 1
    return TunerRun(records, solved_at, cfg.to_dict(), asdict(sampler_cfg))


def unsolved_histogram(runs: Sequence[TunerRun | None], max_round: int) -> list[tuple[int, int]]:
    """Unsolved count after each round ``1..max_round``; failed runs count as unsolved."""
    out = []
    for k in range(1, max_round + 1):
        out.append((k, sum(1 for r in runs if r is None or r.solved_at is None or r.solved_at > k)))
    return out


def histogram_csv(rows: Sequence[tuple[int, int]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "unsolved"])
    w.writerows(rows)
    return buf.getvalue()


def desk_configs(seed: int = 0) -> tuple[TunerConfig, SamplerConfig]:
    d = DESK_EXPERIMENT
    tuner = TunerConfig(
        r=d["r"], max_iterations=d["max_iter"], t_a_max=d["t_a_max"], p_min=d["p_min"], t_f=d["t_f"],
        grid_size=d["grid"], method=d["method"],
    )
    sampler = SamplerConfig(r=d["r"], s_point_rule=d["s_point"], offset=d["offset"], seed=seed)
    return tuner, sampler
