import numpy as np
import pytest

from burgers_lab.dynamics import SimConfig
from burgers_lab.experiments import (
    rough_initial_sampler,
    run_contraction,
    run_energy_balance,
    run_mixing,
    run_recurrence,
    run_regularization,
)
from burgers_lab.forcing import ForcingBasis
from burgers_lab.measures import TestFunctionFamily
from burgers_lab.spectral import SpectralState


def tiny_config(**kw):
    defaults = dict(nu=0.5, n_modes=48, dt=2e-3)
    defaults.update(kw)
    return SimConfig.default(**defaults)


def test_contraction_small_run_passes():
    cfg = tiny_config()
    report = run_contraction(n_pairs=6, config=cfg, T=0.5, master_seed=17)
    assert report.verdict
    assert report.details["violations"] == 0
    assert report.details["worst_ratio"] <= 1.0 + 1e-6
    # distances shrink overall
    assert report.series["mean_distance"][-1] < report.series["mean_distance"][0]


def test_contraction_identical_pair_stays_zero():
    cfg = tiny_config()
    report = run_contraction(n_pairs=2, config=cfg, T=0.2, master_seed=23,
                             pair_scale=0.0)
    assert report.verdict
    assert max(report.series["max_distance"]) == 0.0


def test_contraction_report_reproducible():
    cfg = tiny_config()
    a = run_contraction(n_pairs=3, config=cfg, T=0.3, master_seed=5)
    b = run_contraction(n_pairs=3, config=cfg, T=0.3, master_seed=5)
    assert a.series == b.series
    assert a.to_json_dict() == b.to_json_dict()


def test_mixing_identical_initial_states_at_floor():
    cfg = tiny_config()
    fam = TestFunctionFamily.gaussian(48, size=32)
    z = SpectralState.zero(48)
    report = run_mixing(z, z, cfg, [0.25, 0.5], 40, fam, master_seed=7,
                        threshold=1.0)
    dist = np.array(report.series["distance"])
    floor = np.array(report.series["noise_floor"])
    assert np.all(dist <= 2.0 * floor)
    assert report.verdict


def test_mixing_separated_states_decay():
    cfg = tiny_config()
    fam = TestFunctionFamily.gaussian(48, size=32)
    v2 = SpectralState.single_mode(48, 1, amplitude=1.5)
    report = run_mixing(SpectralState.zero(48), v2, cfg, [0.2, 1.0, 3.0],
                        60, fam, master_seed=9, threshold=1.0)
    d = report.series["distance"]
    assert d[0] > d[-1]


def test_regularization_tiny_run():
    cfg = tiny_config(nu=0.1, n_modes=64, dt=5e-4)
    sampler = rough_initial_sampler(64)
    report = run_regularization(sampler, cfg, n_seeds=6, master_seed=31)
    assert report.verdict
    assert report.details["tail_collapse_ok"]
    assert report.series["t"] == [0.0, cfg.dt, 0.1, 1.0]


def test_regularization_smooth_start_trivially_passes():
    cfg = tiny_config(nu=0.1, n_modes=64, dt=5e-4)

    def smooth(rng):
        return SpectralState.single_mode(64, 1).coeffs

    report = run_regularization(smooth, cfg, n_seeds=4, master_seed=37,
                                tail_collapse_factor=1.0)
    vr = report.series["rough_v_max"]
    assert all(np.isfinite(vr))


def test_recurrence_started_inside_hits_immediately():
    cfg = tiny_config()
    def inside(rng):
        return np.zeros(48)
    report = run_recurrence([1], cfg, n_pairs=4, horizon=0.2, master_seed=41,
                            M=2.0, start_sampler=inside, check_every=5)
    per_m = report.details["per_m"]["1"]
    assert per_m["hits"] == 4
    # both components start inside B_1, so the tail is 0 from t=0 on
    sel = [s for m, s in zip(report.series["m"], report.series["survival"]) if m == 1]
    assert sel[0] == 0.0


def test_recurrence_nested_sets_exact_monotonicity():
    cfg = tiny_config()
    report = run_recurrence([1, 2, 4], cfg, n_pairs=10, horizon=3.0,
                            master_seed=43, M=2.0, check_every=10)
    mm = np.array(report.series["m"])
    tt = np.array(report.series["t"])
    ss = np.array(report.series["survival"])
    for t in np.unique(tt):
        by_m = [ss[(mm == m) & (tt == t)][0] for m in (1, 2, 4)]
        assert by_m[0] <= by_m[1] + 1e-12
        assert by_m[1] <= by_m[2] + 1e-12


def test_recurrence_survival_non_increasing_exactly():
    cfg = tiny_config()
    report = run_recurrence([2], cfg, n_pairs=8, horizon=2.0, master_seed=47,
                            M=2.0, check_every=10)
    ss = np.array(report.series["survival"])
    assert np.all(np.diff(ss) <= 1e-12)


def test_energy_balance_degenerate_zero_amplitude():
    # zero forcing amplitudes: both sides of the balance vanish
    n = 48
    zero_state = SpectralState.zero(n)
    basis = ForcingBasis(a=1.0, b=2.0, c1=0.0, c2=0.0, e1=zero_state,
                         e2=zero_state, trunc_error=0.0)
    cfg = SimConfig(nu=0.5, n_modes=n, dt=2e-3, basis=basis)
    report = run_energy_balance(cfg, T_burn=0.05, T_avg=0.2, master_seed=51,
                                n_members=4)
    assert report.verdict
    assert report.details["injection"] == 0.0
    assert abs(report.details["mean_dissipation"]) <= 1e-12


def test_energy_balance_small_run_near_target():
    cfg = tiny_config(n_modes=64, dt=1e-3)
    report = run_energy_balance(cfg, T_burn=5.0, T_avg=20.0, master_seed=53,
                                n_members=32, tolerance=0.2)
    assert report.details["injection"] == pytest.approx(1.0, abs=1e-4)
    assert abs(report.details["ratio"] - 1.0) <= 0.2
    assert report.verdict


@pytest.mark.slow
def test_energy_balance_amplitude_scaling():
    # halving both amplitudes quarters the stationary V-norm square
    report_full = run_energy_balance(tiny_config(n_modes=64, dt=1e-3),
                                     T_burn=5.0, T_avg=25.0, master_seed=57,
                                     n_members=48)
    report_half = run_energy_balance(tiny_config(n_modes=64, dt=1e-3, c1=0.5, c2=0.5),
                                     T_burn=5.0, T_avg=25.0, master_seed=57,
                                     n_members=48)
    v2_full = report_full.details["mean_dissipation"] / (2 * 0.5)
    v2_half = report_half.details["mean_dissipation"] / (2 * 0.5)
    assert abs(v2_half / v2_full - 0.25) <= 0.1 * 0.25


@pytest.mark.slow
def test_mixing_uniform_over_separated_starts():
    # decay curves from widely separated starts meet at the final time
    cfg = SimConfig.default(nu=0.5, n_modes=96, dt=2e-3)
    fam = TestFunctionFamily.gaussian(96)
    from burgers_lab.engine import evolve_members
    from burgers_lab.measures import Ensemble, dual_lipschitz_distance, resampled_noise_floor

    starts = [SpectralState.zero(96),
              SpectralState.single_mode(96, 1, amplitude=2.0),
              SpectralState.single_mode(96, 1, amplitude=-2.0),
              SpectralState.single_mode(96, 3, amplitude=1.5),
              SpectralState(2.0 / np.arange(1, 97.0) ** 2)]
    n_members = 250
    u0 = np.concatenate([np.tile(s.coeffs, (n_members, 1)) for s in starts])
    snaps, _ = evolve_members(u0, [20.0], cfg, master_seed=71)
    ensembles = [Ensemble(states=snaps[0][i * n_members:(i + 1) * n_members],
                          t=20.0, config_hash="u", seeds=(i,))
                 for i in range(len(starts))]
    worst = 0.0
    floor = 0.0
    for i in range(len(starts)):
        for j in range(i + 1, len(starts)):
            worst = max(worst, dual_lipschitz_distance(ensembles[i], ensembles[j], fam))
            floor = max(floor, resampled_noise_floor(ensembles[i], ensembles[j], fam))
    assert worst <= 3.0 * floor
