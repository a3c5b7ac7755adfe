"""Batch trajectory engine: many members advanced in lockstep.

Members are partitioned into fixed-size chunks (independent of the worker
count) and each chunk is advanced as one vectorized array, drawing every
member's Brownian increments from its own counter-based stream keyed by
(master_seed, member_index).  Chunks may run on any number of threads;
results are stitched in index order, so reports are bit-identical for any
worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from burgers_lab.dynamics import CFLViolationError, SimConfig, Stepper
from burgers_lab.forcing import NOISE_BLOCK, make_generator, member_seed

__all__ = ["evolve_members", "evolve_convolution", "default_workers", "CHUNK_SIZE",
           "NOISE_STREAM", "INIT_STREAM"]

CHUNK_SIZE = 64

# stream indices for per-member seed derivation
NOISE_STREAM = 0
INIT_STREAM = 1


def default_workers() -> int:
    env = os.environ.get("BURGERS_LAB_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _steps_for(times: np.ndarray, dt: float) -> np.ndarray:
    steps = np.array([int(round(t / dt)) for t in times])
    if np.any(steps < 0):
        raise ValueError("checkpoint times must be nonnegative")
    if len(steps) > 1 and np.any(np.diff(steps) <= 0):
        raise ValueError("checkpoint times must be strictly increasing and distinct at this dt")
    return steps


@dataclass
class _ChunkResult:
    index: int
    snapshots: np.ndarray            # (n_checkpoints, chunk, N)
    per_step: list | None


def _evolve_chunk(chunk_index: int, u0: np.ndarray, seeds: list[int],
                  config: SimConfig, check_steps: np.ndarray,
                  shared_noise_pairs: bool, per_step_fn) -> _ChunkResult:
    st = Stepper(config)
    e = config.basis.coeff_matrix()
    a = u0.copy()
    gens = [make_generator(s) for s in seeds]
    n_steps = int(check_steps[-1])
    snaps = np.empty((len(check_steps), ) + u0.shape)
    w = 0
    if check_steps[0] == 0:
        snaps[0] = a
        w = 1
    collected = [] if per_step_fn is not None else None
    scale = np.sqrt(config.dt)
    done = 0
    while done < n_steps:
        nb = min(NOISE_BLOCK, n_steps - done)
        dW = np.stack([g.normal(0.0, scale, size=(2, nb)) for g in gens])  # (B,2,nb)
        if shared_noise_pairs:
            # rows are (first_0..first_{P-1}, second_0..second_{P-1}); the
            # second half reuses the first half's increments
            half = a.shape[0] // 2
            dW[half:] = dW[:half]
        for j in range(nb):
            noise = dW[:, 0, [j]] * e[0] + dW[:, 1, [j]] * e[1]
            try:
                a = st.step(a, noise=noise)
            except CFLViolationError as err:
                members = None
                if err.members is not None:
                    members = [chunk_index * CHUNK_SIZE + int(m) for m in err.members]
                raise CFLViolationError(err.max_abs_u, err.dt, err.dt_max, members) from None
            done += 1
            if collected is not None:
                collected.append(per_step_fn(done * config.dt, a))
            if w < len(check_steps) and done == check_steps[w]:
                snaps[w] = a
                w += 1
    return _ChunkResult(index=chunk_index, snapshots=snaps, per_step=collected)


def evolve_members(u0: np.ndarray, times, config: SimConfig, master_seed: int,
                   workers: int | None = None, shared_noise_pairs: bool = False,
                   per_step_fn=None):
    """Advance a batch of members, returning snapshots at the given times.

    Parameters
    ----------
    u0 : (B, N) array of initial coefficients.
    times : increasing checkpoint times (may include 0).
    shared_noise_pairs : if True, B must be even and row half+i reuses the
        increments of row i (shared-noise coupling for pairs); per-member
        seeds are derived from (master_seed, member_index) either way.
    per_step_fn : optional callable (t, states_chunk) -> value recorded at
        every step (used for running time averages / hitting scans).

    Returns
    -------
    snapshots : (n_times, B, N) array
    per_step : list of per-chunk recorded lists (chunk order) or None
    """
    u0 = np.asarray(u0, dtype=float)
    if u0.ndim != 2:
        raise ValueError("u0 must be (B, N)")
    n_members = u0.shape[0]
    if shared_noise_pairs and n_members % 2:
        raise ValueError("shared-noise pairing needs an even member count")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    check_steps = _steps_for(times, config.dt)
    workers = workers or default_workers()

    if shared_noise_pairs:
        # one chunk: the pairing couples row i with row half+i
        chunks = [(0, u0, [member_seed(master_seed, i, NOISE_STREAM)
                           for i in range(n_members // 2)] * 2)]
    else:
        chunks = []
        for c0 in range(0, n_members, CHUNK_SIZE):
            idx = slice(c0, min(c0 + CHUNK_SIZE, n_members))
            seeds = [member_seed(master_seed, i, NOISE_STREAM)
                     for i in range(c0, min(c0 + CHUNK_SIZE, n_members))]
            chunks.append((c0 // CHUNK_SIZE, u0[idx], seeds))

    results: list[_ChunkResult] = []
    if workers == 1 or len(chunks) == 1:
        for ci, cu, cs in chunks:
            results.append(_evolve_chunk(ci, cu, cs, config, check_steps,
                                         shared_noise_pairs, per_step_fn))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_evolve_chunk, ci, cu, cs, config, check_steps,
                                shared_noise_pairs, per_step_fn)
                    for ci, cu, cs in chunks]
            results = [f.result() for f in futs]
    results.sort(key=lambda r: r.index)
    snapshots = np.concatenate([r.snapshots for r in results], axis=1)
    per_step = [r.per_step for r in results] if per_step_fn is not None else None
    return snapshots, per_step


def evolve_convolution(n_members: int, times, config: SimConfig, master_seed: int,
                       per_step_fn=None):
    """Advance a batch of stochastic-convolution paths z (linear, no FFTs).

    Same update as convolution_step, vectorized over members; seeds follow
    the same (master_seed, member_index) convention as evolve_members.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    check_steps = _steps_for(times, config.dt)
    n_steps = int(check_steps[-1])
    k = np.arange(1, config.n_modes + 1, dtype=float)
    decay = np.exp(-config.nu * k**2 * config.dt)
    e = config.basis.coeff_matrix()
    z = np.zeros((n_members, config.n_modes))
    gens = [make_generator(member_seed(master_seed, i, NOISE_STREAM))
            for i in range(n_members)]
    snaps = np.empty((len(check_steps), n_members, config.n_modes))
    w = 0
    if check_steps[0] == 0:
        snaps[0] = z
        w = 1
    collected = [] if per_step_fn is not None else None
    scale = np.sqrt(config.dt)
    done = 0
    while done < n_steps:
        nb = min(NOISE_BLOCK, n_steps - done)
        dW = np.stack([g.normal(0.0, scale, size=(2, nb)) for g in gens])
        for j in range(nb):
            z = decay * z + dW[:, 0, [j]] * e[0] + dW[:, 1, [j]] * e[1]
            done += 1
            if collected is not None:
                collected.append(per_step_fn(done * config.dt, z))
            if w < len(check_steps) and done == check_steps[w]:
                snaps[w] = z
                w += 1
    return snaps, collected
