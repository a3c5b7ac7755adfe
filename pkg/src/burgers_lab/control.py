"""Two-mode control of the deterministic equation by trajectory optimization.

The control zeta(t) = z1(t) e1 + z2(t) e2 is parametrized by its values at
K+1 uniform knots (piecewise linear, hence continuous), and a quasi-Newton
search with finite-difference gradients minimizes

    J = ||u(T) - u_hat||_L1 + lam_V max(0, ||u(T)||_V - M)^2
        + lam_reg  int ||zeta(t)||^2 dt.

Forward solves for the gradient stencil run as one vectorized batch.
Reported achieved norms always come from an independent forward solve of
the returned schedule, never from optimizer internals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize as sopt
from scipy.stats import binomtest

from burgers_lab.dynamics import (
    CFLViolationError,
    ControlSchedule,
    SimConfig,
    Stepper,
    simulate_controlled,
)
from burgers_lab.engine import evolve_members, member_seed
from burgers_lab.forcing import make_generator
from burgers_lab.measures import TargetSet, target_membership_arr
from burgers_lab.spectral import SpectralState, l1_norm_arr, sobolev_norm_sq

__all__ = [
    "ControlProblem",
    "ControlResult",
    "objective",
    "optimize_control",
    "hit_probability",
    "BLOWUP_PENALTY",
]

BLOWUP_PENALTY = 1e6


@dataclass(frozen=True)
class ControlProblem:
    """Steer u0 into the L1 ball around u_hat while keeping the V norm below M."""

    u0: SpectralState
    u_hat: SpectralState
    T: float
    eps: float
    M: float
    n_knots: int
    config: SimConfig
    lam_v: float = 10.0
    lam_reg: float = 1e-3

    def __post_init__(self):
        if self.T <= 0 or self.eps <= 0 or self.M <= 0:
            raise ValueError("T, eps, M must be positive")
        if self.n_knots < 2:
            raise ValueError("need at least 2 knots")

    def knot_times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_knots + 1)

    def schedule_from_params(self, params: np.ndarray) -> ControlSchedule:
        kk = self.n_knots + 1
        return ControlSchedule(self.knot_times(),
                               np.stack([params[:kk], params[kk:]], axis=1))


@dataclass(frozen=True)
class ControlResult:
    schedule: ControlSchedule
    achieved_l1: float
    achieved_v: float
    iterations: int
    converged: bool
    objective_value: float
    n_starts: int
    blowups: int


def _control_energy(problem: ControlProblem, params_batch: np.ndarray) -> np.ndarray:
    """Exact integral of zeta' G zeta for the piecewise-linear schedules."""
    kk = problem.n_knots + 1
    z = np.stack([params_batch[:, :kk], params_batch[:, kk:]], axis=2)  # (B, kk, 2)
    gram = problem.config.basis.gram()
    q = np.einsum("bki,ij,bkj->bk", z, gram, z)
    zm = 0.5 * (z[:, :-1] + z[:, 1:])
    qm = np.einsum("bki,ij,bkj->bk", zm, gram, zm)
    dtk = np.diff(problem.knot_times())
    # Simpson per knot interval is exact for the quadratic integrand
    return np.sum(dtk / 6.0 * (q[:, :-1] + 4.0 * qm + q[:, 1:]), axis=1)


def _final_states(problem: ControlProblem, params_batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched forward solves; returns (final_states, blowup_mask)."""
    cfg = problem.config
    st = Stepper(cfg)
    n_steps = int(round(problem.T / cfg.dt))
    knots = problem.knot_times()
    kk = problem.n_knots + 1
    t_grid = np.arange(n_steps) * cfg.dt
    B = params_batch.shape[0]
    w1 = np.stack([np.interp(t_grid, knots, params_batch[i, :kk]) for i in range(B)])
    w2 = np.stack([np.interp(t_grid, knots, params_batch[i, kk:]) for i in range(B)])
    e = cfg.basis.coeff_matrix()
    a = np.tile(problem.u0.coeffs, (B, 1))
    alive = np.ones(B, dtype=bool)
    for s in range(n_steps):
        # on a CFL blow-up, freeze the offending members and retry the step
        # with the survivors so their trajectories are unaffected
        while np.any(alive):
            force = w1[alive][:, [s]] * e[0] + w2[alive][:, [s]] * e[1]
            try:
                a[alive] = st.step(a[alive], extra_force=force)
                break
            except CFLViolationError as err:
                idx = np.nonzero(alive)[0]
                bad = idx[np.asarray(err.members)] if err.members is not None else idx
                alive[bad] = False
        if not np.any(alive):
            break
    return a, ~alive


def objective(problem: ControlProblem, schedule: ControlSchedule) -> float:
    """The control objective for one schedule (blow-ups give a large finite value)."""
    kk = problem.n_knots + 1
    if len(schedule.knots) != kk or abs(schedule.horizon - problem.T) > 1e-12:
        raise ValueError("schedule knots do not match the problem")
    params = np.concatenate([schedule.coeffs[:, 0], schedule.coeffs[:, 1]])
    return float(_objective_batch(problem, params[None])[0])


def _objective_batch(problem: ControlProblem, params_batch: np.ndarray) -> np.ndarray:
    finals, blown = _final_states(problem, params_batch)
    j = np.empty(params_batch.shape[0])
    ok = ~blown
    if np.any(ok):
        l1 = l1_norm_arr(finals[ok] - problem.u_hat.coeffs, refine=4)
        vn = np.sqrt(sobolev_norm_sq(finals[ok], 1.0))
        reg = _control_energy(problem, params_batch[ok])
        j[ok] = (l1 + problem.lam_v * np.maximum(0.0, vn - problem.M) ** 2
                 + problem.lam_reg * reg)
    if np.any(blown):
        j[blown] = BLOWUP_PENALTY
    return j


def objective_gradient_fd(problem: ControlProblem, params: np.ndarray,
                          step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient, all perturbations in one batch."""
    d = len(params)
    stencil = np.tile(params, (2 * d, 1))
    for i in range(d):
        stencil[2 * i, i] += step
        stencil[2 * i + 1, i] -= step
    vals = _objective_batch(problem, stencil)
    return (vals[0::2] - vals[1::2]) / (2.0 * step)


def _verify_schedule(problem: ControlProblem, schedule: ControlSchedule) -> tuple[float, float]:
    """Independent forward solve of the returned schedule (sampled once at T)."""
    traj = simulate_controlled(problem.u0, problem.T, problem.config, schedule,
                               sample_every=max(1, int(round(problem.T / problem.config.dt))))
    final = traj.final
    l1 = float(l1_norm_arr(final.coeffs - problem.u_hat.coeffs, refine=4))
    vn = float(np.sqrt(sobolev_norm_sq(final.coeffs, 1.0)))
    return l1, vn


def optimize_control(problem: ControlProblem, n_starts: int = 4,
                     start_scale: float = 0.8, maxiter: int = 60,
                     master_seed: int = 0, stop_when_converged: bool = True) -> ControlResult:
    """Multi-start quasi-Newton minimization of the control objective.

    The first start is the zero schedule; the rest are Gaussian draws.  A
    start that already meets both targets short-circuits the remaining ones
    unless ``stop_when_converged`` is off.  converged=False is a valid
    outcome and is reported as such.
    """
    dim = 2 * (problem.n_knots + 1)
    starts = [np.zeros(dim)]
    for i in range(1, n_starts):
        rng = make_generator(member_seed(master_seed, i, 3))
        starts.append(start_scale * rng.standard_normal(dim))

    blowups = 0

    def fun(p):
        return float(_objective_batch(problem, p[None])[0])

    def jac(p):
        return objective_gradient_fd(problem, p)

    best_params, best_val, total_iter = None, np.inf, 0
    for s0 in starts:
        res = sopt.minimize(fun, s0, jac=jac, method="L-BFGS-B",
                            options=dict(maxiter=maxiter))
        total_iter += int(res.nit)
        if res.fun >= BLOWUP_PENALTY:
            blowups += 1
        if res.fun < best_val:
            best_val, best_params = float(res.fun), res.x.copy()
            sched = problem.schedule_from_params(best_params)
            l1, vn = _verify_schedule(problem, sched)
            if stop_when_converged and l1 < problem.eps and vn < problem.M:
                break

    schedule = problem.schedule_from_params(best_params)
    l1, vn = _verify_schedule(problem, schedule)
    return ControlResult(
        schedule=schedule, achieved_l1=l1, achieved_v=vn,
        iterations=total_iter,
        converged=bool(l1 < problem.eps and vn < problem.M),
        objective_value=best_val, n_starts=len(starts), blowups=blowups,
    )


def hit_probability(v_list, config: SimConfig, eps: float, M: float, T: float,
                    n_seeds: int, u_hat: SpectralState | None = None,
                    master_seed: int = 0, workers: int | None = None) -> list[dict]:
    """Empirical frequency of u(T) in the target set, per starting state.

    Rows carry Wilson 95% confidence bounds.  Sharing the simulated final
    states across nested (eps, M) choices is up to the caller; this routine
    evaluates a single target set.
    """
    if u_hat is None:
        u_hat = SpectralState.zero(config.n_modes)
    target = TargetSet(u_hat=u_hat, eps=eps, M=M)
    rows = []
    for vi, v in enumerate(v_list):
        u0 = np.tile(v.coeffs, (n_seeds, 1))
        snaps, _ = evolve_members(u0, [T], config,
                                  member_seed(master_seed, vi, 7), workers=workers)
        hits = int(np.sum(target_membership_arr(snaps[-1], target)))
        ci = binomtest(hits, n_seeds).proportion_ci(confidence_level=0.95, method="wilson")
        rows.append({"start_index": vi, "hits": hits, "n_seeds": n_seeds,
                     "frequency": hits / n_seeds,
                     "ci_low": float(ci.low), "ci_high": float(ci.high)})
    return rows
