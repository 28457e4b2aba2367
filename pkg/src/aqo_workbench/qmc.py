"""Discrete imaginary-time path-integral Monte Carlo for the transverse-field Ising model.

``Tr exp(-beta H)`` with ``H = a H_B + b H_P`` is Trotterised into ``P``
slices.  Each qubit becomes a ring of classical spins with ferromagnetic
coupling ``K_i = -0.5 ln tanh(beta a delta_i / P)`` between neighbouring
slices; within a slice the spins feel ``beta b H_P / P``.

A sweep is one Metropolis pass over every spin followed by one
Swendsen-Wang style cluster pass along imaginary time for every qubit.  The
cluster pass is what keeps the chain mobile when ``K_i`` is large.
"""

from __future__ import annotations

import numpy as np
from numba import njit

K_CAP = 30.0


@njit(cache=True)
def _slice_field(z, p, i, h, nbr_ptr, nbr_idx, nbr_j):
    f = h[i]
    for q in range(nbr_ptr[i], nbr_ptr[i + 1]):
        f += nbr_j[q] * z[p, nbr_idx[q]]
    return f


@njit(cache=True)
def _sweep(z, h, nbr_ptr, nbr_idx, nbr_j, kt, tau_b):
    n_slices, n = z.shape
    # local Metropolis moves
    for p in range(n_slices):
        up = (p + 1) % n_slices
        dn = (p - 1 + n_slices) % n_slices
        for i in range(n):
            s = z[p, i]
            f = _slice_field(z, p, i, h, nbr_ptr, nbr_idx, nbr_j)
            d_action = tau_b * (-2.0 * s * f) + 2.0 * kt[i] * s * (z[up, i] + z[dn, i])
            if d_action <= 0.0 or np.random.random() < np.exp(-d_action):
                z[p, i] = -s
    # imaginary-time cluster moves, one qubit at a time
    bond = np.empty(n_slices, dtype=np.bool_)
    for i in range(n):
        p_bond = 1.0 - np.exp(-2.0 * kt[i])
        n_active = 0
        for p in range(n_slices):
            up = (p + 1) % n_slices
            bond[p] = z[p, i] == z[up, i] and np.random.random() < p_bond
            if bond[p]:
                n_active += 1
        if n_active == n_slices:
            d_action = 0.0
            for p in range(n_slices):
                d_action += tau_b * (-2.0 * z[p, i] * _slice_field(z, p, i, h, nbr_ptr, nbr_idx, nbr_j))
            if np.random.random() < 1.0 / (1.0 + np.exp(d_action)):
                for p in range(n_slices):
                    z[p, i] = -z[p, i]
            continue
        # start just after a broken bond so every segment is contiguous mod P
        start = 0
        for p in range(n_slices):
            if not bond[p]:
                start = (p + 1) % n_slices
                break
        p = start
        visited = 0
        while visited < n_slices:
            seg_start = p
            length = 0
            d_action = 0.0
            while True:
                d_action += tau_b * (-2.0 * z[p, i] * _slice_field(z, p, i, h, nbr_ptr, nbr_idx, nbr_j))
                length += 1
                linked = bond[p]
                p = (p + 1) % n_slices
                if not linked:
                    break
            visited += length
            if np.random.random() < 1.0 / (1.0 + np.exp(d_action)):
                q = seg_start
                for _ in range(length):
                    z[q, i] = -z[q, i]
                    q = (q + 1) % n_slices


@njit(cache=True)
def _run_chain(n, n_slices, h, nbr_ptr, nbr_idx, nbr_j, kt, tau_b, burn_in, interval, n_samples, seed):
    np.random.seed(seed)
    z = np.empty((n_slices, n), dtype=np.float64)
    for p in range(n_slices):
        for i in range(n):
            z[p, i] = 1.0 if np.random.random() < 0.5 else -1.0
    for _ in range(burn_in):
        _sweep(z, h, nbr_ptr, nbr_idx, nbr_j, kt, tau_b)
    out = np.empty(n_samples, dtype=np.int64)
    for k in range(n_samples):
        for _ in range(interval):
            _sweep(z, h, nbr_ptr, nbr_idx, nbr_j, kt, tau_b)
        p = np.random.randint(0, n_slices)
        x = 0
        for i in range(n):
            if z[p, i] > 0:
                x |= 1 << i
        out[k] = x
    return out


def neighbour_arrays(n: int, couplings: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for (a, b), v in sorted(couplings.items()):
        rows[a].append((b, v))
        rows[b].append((a, v))
    ptr = np.zeros(n + 1, dtype=np.int64)
    idx, val = [], []
    for i, row in enumerate(rows):
        for k, v in row:
            idx.append(k)
            val.append(v)
        ptr[i + 1] = len(idx)
    return ptr, np.asarray(idx, dtype=np.int64), np.asarray(val, dtype=np.float64)


def temporal_coupling(a: float, delta: np.ndarray, tau: float) -> np.ndarray:
    arg = tau * a * np.asarray(delta, dtype=float)
    with np.errstate(divide="ignore"):
        kt = np.where(arg > 0, -0.5 * np.log(np.tanh(np.maximum(arg, 1e-300))), K_CAP)
    return np.minimum(kt, K_CAP)


def run_chains(
    n: int,
    h: np.ndarray,
    couplings: dict,
    delta: np.ndarray,
    a: float,
    b: float,
    beta: float,
    slices: int,
    burn_in: int,
    interval: int,
    samples_per_chain: list[int],
    seeds: list[int],
) -> np.ndarray:
    """Concatenated basis-state samples (bitmasks) from independent chains."""
    ptr, idx, val = neighbour_arrays(n, couplings)
    tau = beta / slices
    kt = temporal_coupling(a, delta, tau)
    out = []
    for count, seed in zip(samples_per_chain, seeds):
        if count == 0:
            continue
        out.append(
            _run_chain(n, slices, np.asarray(h, float), ptr, idx, val, kt, tau * b, burn_in, interval, count, seed % (2**32))
        )
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)
