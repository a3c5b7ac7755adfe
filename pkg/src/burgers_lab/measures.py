"""Empirical measures on state space and distances between them.

The dual-Lipschitz (bounded-Lipschitz) distance over V cannot be computed
exactly, so we report a lower-bound estimator built from a fixed family of
unit-V directions: for each direction both a clipped-ramp mean difference
and a clipped one-dimensional transport distance of the projected samples,
each normalized so the implied test function has combined sup + Lipschitz
norm at most one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import wasserstein_distance

from burgers_lab.dynamics import SimConfig
from burgers_lab.engine import INIT_STREAM, evolve_members, member_seed
from burgers_lab.forcing import make_generator
from burgers_lab.spectral import NormTag, SpectralState, l1_norm_arr, linf_norm_arr, sobolev_norm_sq

__all__ = [
    "Ensemble",
    "TestFunctionFamily",
    "TargetSet",
    "make_ensemble",
    "constant_sampler",
    "sobolev_sampler",
    "dual_lipschitz_distance",
    "resampled_noise_floor",
    "moment_report",
    "MomentRow",
    "in_target_set",
]


@dataclass(frozen=True)
class Ensemble:
    """States of independent members sampled at a common time."""

    states: np.ndarray            # (B, N)
    t: float
    config_hash: str
    seeds: tuple[int, ...]

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim != 2 or s.shape[0] < 1:
            raise ValueError("states must be a non-empty (B, N) array")
        object.__setattr__(self, "states", s)

    @property
    def n_members(self) -> int:
        return self.states.shape[0]

    @property
    def n_modes(self) -> int:
        return self.states.shape[1]

    def member(self, i: int) -> SpectralState:
        return SpectralState(self.states[i])


def constant_sampler(state: SpectralState):
    """Point-mass initial law (every member starts at the same state)."""
    def sample(rng: np.random.Generator) -> np.ndarray:
        return state.coeffs
    return sample


def sobolev_sampler(scale: float = 1.0, decay: float = 2.0, n_modes: int | None = None):
    """Random initial states with coefficients scale * xi_k / k^decay."""
    def sample(rng: np.random.Generator) -> np.ndarray:
        if n_modes is None:
            raise ValueError("sobolev_sampler needs n_modes")
        k = np.arange(1, n_modes + 1, dtype=float)
        return scale * rng.standard_normal(n_modes) / k**decay
    return sample


def make_ensemble(u0_sampler, t: float, n_members: int, config: SimConfig,
                  master_seed: int, workers: int | None = None) -> Ensemble:
    """Evolve n_members independent draws of u0_sampler to time t.

    Per-member noise and initial-draw streams are split from master_seed by
    member index, so the result does not depend on evaluation order or
    worker count.
    """
    if n_members < 2:
        raise ValueError("need at least 2 members")
    u0 = np.stack([
        np.asarray(u0_sampler(make_generator(member_seed(master_seed, i, INIT_STREAM))),
                   dtype=float)
        for i in range(n_members)
    ])
    if u0.shape[1] != config.n_modes:
        raise ValueError("sampler resolution differs from config")
    seeds = tuple(member_seed(master_seed, i) for i in range(n_members))
    if t == 0.0:
        return Ensemble(states=u0, t=0.0, config_hash=config.config_hash(), seeds=seeds)
    snaps, _ = evolve_members(u0, [t], config, master_seed, workers=workers)
    return Ensemble(states=snaps[-1], t=float(t),
                    config_hash=config.config_hash(), seeds=seeds)


@dataclass(frozen=True)
class TestFunctionFamily:
    """Projection directions (unit V norm) plus the clip bound for the ramp."""

    __test__ = False              # not a pytest class, despite the name

    directions: np.ndarray        # (D, N)
    clip: float
    seed: int

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float)
        if d.ndim != 2 or d.shape[0] < 1:
            raise ValueError("directions must be (D, N)")
        vn = np.sqrt(sobolev_norm_sq(d, 1.0))
        if np.max(np.abs(vn - 1.0)) > 1e-10:
            raise ValueError("directions must have unit V norm")
        object.__setattr__(self, "directions", d)

    @property
    def size(self) -> int:
        return self.directions.shape[0]

    @staticmethod
    def gaussian(n_modes: int, size: int = 48, seed: int = 2**20 + 7,
                 clip: float = 1.0) -> "TestFunctionFamily":
        """Directions drawn once from a fixed-seed Gaussian in V, V-normalized."""
        if size < 32:
            raise ValueError("family size must be at least 32")
        rng = make_generator(seed)
        k = np.arange(1, n_modes + 1, dtype=float)
        d = rng.standard_normal((size, n_modes)) / k**2
        d /= np.sqrt(sobolev_norm_sq(d, 1.0))[:, None]
        return TestFunctionFamily(directions=d, clip=clip, seed=seed)

    def subfamily(self, size: int) -> "TestFunctionFamily":
        if not 1 <= size <= self.size:
            raise ValueError("bad subfamily size")
        return TestFunctionFamily(directions=self.directions[:size],
                                  clip=self.clip, seed=self.seed)


def _v_projections(states: np.ndarray, family: TestFunctionFamily) -> np.ndarray:
    """V inner products <u, d>_V for all members x directions."""
    k2 = np.arange(1, states.shape[1] + 1, dtype=float) ** 2
    return 0.5 * np.pi * ((states * k2) @ family.directions.T)


def dual_lipschitz_distance(a: Ensemble, b: Ensemble, family: TestFunctionFamily) -> float:
    """Family-based lower bound on the dual-Lipschitz distance over V.

    For each direction d the projected samples are centered at the pooled
    mean and clipped at +-clip; the reported value is the max over
    directions of the larger of |mean difference of the ramp| and half the
    one-dimensional transport distance of the clipped projections.  Both
    correspond to test functions with ||f||_inf + Lip(f) <= 1, so the true
    distance is never smaller.
    """
    if a.n_modes != b.n_modes:
        raise ValueError("ensembles have different resolutions")
    if family.directions.shape[1] != a.n_modes:
        raise ValueError("family resolution differs from ensembles")
    if a.states is b.states:
        return 0.0
    pa = _v_projections(a.states, family)
    pb = _v_projections(b.states, family)
    best = 0.0
    c = family.clip
    for j in range(family.size):
        center = 0.5 * (pa[:, j].mean() + pb[:, j].mean())
        xa = np.clip(pa[:, j] - center, -c, c)
        xb = np.clip(pb[:, j] - center, -c, c)
        ramp = abs(xa.mean() - xb.mean()) / (2.0 * c)
        w1 = wasserstein_distance(xa, xb) / (2.0 * c)
        best = max(best, ramp, w1)
    return float(best)


def resampled_noise_floor(a: Ensemble, b: Ensemble, family: TestFunctionFamily,
                          n_resamples: int = 24, seed: int = 424242,
                          quantile: float = 0.95) -> float:
    """Estimator value expected when both ensembles share one law.

    Pools the members, splits them at random into two halves, and reports a
    high quantile of the estimator over the resamples.  Deterministic in the
    seed.
    """
    pooled = np.concatenate([a.states, b.states], axis=0)
    rng = make_generator(seed)
    n = pooled.shape[0]
    half = n // 2
    vals = []
    for _ in range(n_resamples):
        perm = rng.permutation(n)
        ea = Ensemble(states=pooled[perm[:half]], t=a.t, config_hash=a.config_hash, seeds=(0,))
        eb = Ensemble(states=pooled[perm[half:2 * half]], t=b.t, config_hash=b.config_hash, seeds=(0,))
        vals.append(dual_lipschitz_distance(ea, eb, family))
    return float(np.quantile(vals, quantile))


@dataclass(frozen=True)
class MomentRow:
    norm: str
    power: int
    mean: float
    stderr: float


def _norm_values(states: np.ndarray, tag: NormTag) -> np.ndarray:
    if tag.kind == "L2":
        return np.sqrt(sobolev_norm_sq(states, 0.0))
    if tag.kind == "Hs":
        return np.sqrt(sobolev_norm_sq(states, tag.s))
    if tag.kind == "L1":
        return np.atleast_1d(l1_norm_arr(states))
    return np.atleast_1d(linf_norm_arr(states))


def _tag_label(tag: NormTag) -> str:
    return f"Hs({tag.s:g})" if tag.kind == "Hs" else tag.kind


def moment_report(ensemble: Ensemble, norms: list[NormTag], powers: list[int]) -> list[MomentRow]:
    """Sample means of ||u||^p with standard errors, one row per (norm, p)."""
    rows = []
    for tag in norms:
        vals = _norm_values(ensemble.states, tag)
        for p in powers:
            v = vals ** p
            se = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
            rows.append(MomentRow(norm=_tag_label(tag), power=int(p),
                                  mean=float(v.mean()), stderr=se))
    return rows


@dataclass(frozen=True)
class TargetSet:
    """The open set {u : ||u - u_hat||_L1 < 2 eps, ||u||_V < 2 M}."""

    u_hat: SpectralState
    eps: float
    M: float

    def __post_init__(self):
        if self.eps <= 0 or self.M <= 0:
            raise ValueError("eps and M must be positive")


def in_target_set(u: SpectralState, target: TargetSet, refine: int = 1) -> bool:
    """Strict membership test (boundary points are outside)."""
    if u.n_modes != target.u_hat.n_modes:
        raise ValueError("resolution mismatch")
    l1 = float(l1_norm_arr(u.coeffs - target.u_hat.coeffs, refine=refine))
    if l1 >= 2.0 * target.eps:
        return False
    vn = float(np.sqrt(sobolev_norm_sq(u.coeffs, 1.0)))
    return vn < 2.0 * target.M


def target_membership_arr(states: np.ndarray, target: TargetSet, refine: int = 1) -> np.ndarray:
    """Vectorized membership over a (B, N) batch."""
    l1 = l1_norm_arr(states - target.u_hat.coeffs, refine=refine)
    vn = np.sqrt(sobolev_norm_sq(states, 1.0))
    return (l1 < 2.0 * target.eps) & (vn < 2.0 * target.M)
