"""Batch command-line runner.

Subcommands: simulate, ensemble, mixing, contraction, recurrence, energy,
regularize, control, steady, semigroup-norms.  Each run reads an INI-style
config (flat key = value entries in a [common] section plus one section per
experiment), executes, and writes a JSON report, a CSV series, and a PNG
figure named {experiment}-{confighash}-{seed}.{ext} into the output
directory.  Exit status: 0 pass verdict, 2 fail verdict, 1 execution error.
Unknown config keys are rejected with a message listing them.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import re
import sys
from pathlib import Path

import numpy as np

from burgers_lab import __version__
from burgers_lab.control import ControlProblem, optimize_control
from burgers_lab.dynamics import (
    ControlSchedule,
    SimConfig,
    simulate,
    steady_state,
)
from burgers_lab.engine import default_workers
from burgers_lab.experiments import (
    ExperimentReport,
    rough_initial_sampler,
    run_contraction,
    run_energy_balance,
    run_mixing,
    run_recurrence,
    run_regularization,
)
from burgers_lab.measures import (
    TestFunctionFamily,
    constant_sampler,
    make_ensemble,
    moment_report,
)
from burgers_lab.plotting import render_report
from burgers_lab.snapshot import FORMAT_VERSION, load_snapshot, save_snapshot
from burgers_lab.spectral import (
    NormTag,
    SpectralState,
    heat_operator_norm,
    l1_norm_arr,
    linf_norm_arr,
    sobolev_norm_sq,
)

__all__ = ["main", "run", "ConfigError"]


class ConfigError(ValueError):
    pass


EXPERIMENTS = ("simulate", "ensemble", "mixing", "contraction", "recurrence",
               "energy", "regularize", "control", "steady", "semigroup-norms")

COMMON_KEYS = {"nu", "n_modes", "dt", "a", "b", "c1", "c2", "dealias",
               "nonlinearity_form", "h"}

SECTION_KEYS = {
    "simulate": {"t", "sample_every", "u0", "save_snapshot"},
    "ensemble": {"t", "n_members", "u0", "norms", "powers"},
    "mixing": {"times", "n_members", "threshold", "family_size", "v1", "v2"},
    "contraction": {"n_pairs", "t", "sample_dt", "rel_tol", "pair_scale"},
    "recurrence": {"m_list", "n_pairs", "horizon", "m_bound", "check_every",
                   "start_scale"},
    "energy": {"t_burn", "t_avg", "n_members", "tolerance"},
    "regularize": {"n_seeds", "exponent", "tail_collapse_factor",
                   "band_median_bound", "band_q95_bound"},
    "control": {"t", "eps", "eps_rel", "m_bound", "n_knots", "u0", "target",
                "maxiter", "n_starts", "replay"},
    "steady": {"tol", "max_iter", "save_snapshot"},
    "semigroup-norms": {"source_order", "target_order", "t_min", "t_max",
                        "n_points", "tolerance"},
}

_TERM_RE = re.compile(r"^\s*([+-]?\d*\.?\d+(?:[eE][+-]?\d+)?)\s*\*?\s*sin\(\s*(\d+)\s*x\s*\)\s*$")


def parse_state_expr(expr: str, n_modes: int) -> np.ndarray:
    """Parse 'zero' or a sum of c*sin(kx) terms into sine coefficients."""
    expr = expr.strip()
    coeffs = np.zeros(n_modes)
    if expr.lower() in ("0", "zero", "none"):
        return coeffs
    if expr.startswith("snapshot:"):
        snap = load_snapshot(expr[len("snapshot:"):])
        state = snap.to_state()
        if state.n_modes != n_modes:
            raise ConfigError(f"snapshot has {state.n_modes} modes, config wants {n_modes}")
        return state.coeffs
    for term in re.split(r"\s*\+\s*", expr):
        m = _TERM_RE.match(term)
        if not m:
            raise ConfigError(f"cannot parse state term {term!r} "
                              "(use e.g. '0.5*sin(2x) + 1.0*sin(1x)', 'zero', or 'snapshot:PATH')")
        amp, k = float(m.group(1)), int(m.group(2))
        if not 1 <= k <= n_modes:
            raise ConfigError(f"sin({k}x) outside resolution {n_modes}")
        coeffs[k - 1] += amp
    return coeffs


def _read_config(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    found = cp.read(path)
    if not found:
        raise ConfigError(f"config file not found: {path}")
    unknown_sections = [s for s in cp.sections() if s != "common" and s not in SECTION_KEYS]
    if unknown_sections:
        raise ConfigError(f"unknown config sections: {', '.join(unknown_sections)}")
    if "common" in cp:
        bad = sorted(set(cp["common"]) - COMMON_KEYS)
        if bad:
            raise ConfigError(f"unknown keys in [common]: {', '.join(bad)}")
    for sec, allowed in SECTION_KEYS.items():
        if sec in cp:
            bad = sorted(set(cp[sec]) - allowed)
            if bad:
                raise ConfigError(f"unknown keys in [{sec}]: {', '.join(bad)}")
    return cp


def _build_sim_config(cp: configparser.ConfigParser) -> SimConfig:
    sec = cp["common"] if "common" in cp else {}

    def get(key, default, cast):
        raw = sec.get(key)
        if raw is None:
            return default
        try:
            if cast is bool:
                return str(raw).strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        except ValueError as err:
            raise ConfigError(f"bad value for common.{key}: {raw!r}") from None

    n_modes = get("n_modes", 128, int)
    h_expr = sec.get("h", "zero") if hasattr(sec, "get") else "zero"
    h_coeffs = parse_state_expr(h_expr, n_modes)
    h = None if not np.any(h_coeffs) else SpectralState(h_coeffs)
    try:
        return SimConfig.default(
            nu=get("nu", 0.5, float), n_modes=n_modes, dt=get("dt", 1e-3, float),
            a=get("a", 1.0, float), b=get("b", 2.0, float),
            c1=get("c1", 1.0, float), c2=get("c2", 1.0, float), h=h,
            dealias=get("dealias", True, bool),
            nonlinearity_form=sec.get("nonlinearity_form", "skew_symmetric"),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None


def _sec(cp, name):
    return cp[name] if name in cp else {}


def _getval(sec, key, default, cast):
    raw = sec.get(key) if hasattr(sec, "get") else None
    if raw is None:
        return default
    try:
        if cast is bool:
            return str(raw).strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def _float_list(raw: str) -> list[float]:
    return [float(x) for x in raw.replace(",", " ").split()]


def _int_list(raw: str) -> list[int]:
    return [int(x) for x in raw.replace(",", " ").split()]


# -- per-subcommand runners ---------------------------------------------------


def _run_simulate(cp, config, seed, workers):
    sec = _sec(cp, "simulate")
    T = _getval(sec, "t", 5.0, float)
    sample_every = _getval(sec, "sample_every", 100, int)
    u0 = SpectralState(parse_state_expr(sec.get("u0", "1.0*sin(1x)") if hasattr(sec, "get") else "1.0*sin(1x)", config.n_modes))
    traj = simulate(u0, T, config, seed, sample_every=sample_every)
    series = {
        "t": [float(t) for t in traj.times],
        "l2": [float(x) for x in np.sqrt(sobolev_norm_sq(traj.states, 0.0))],
        "v": [float(x) for x in np.sqrt(sobolev_norm_sq(traj.states, 1.0))],
        "hs15": [float(x) for x in np.sqrt(sobolev_norm_sq(traj.states, 1.5))],
        "linf": [float(x) for x in linf_norm_arr(traj.states)],
    }
    details = {"T": T, "sample_every": sample_every,
               "final_l2": series["l2"][-1], "final_v": series["v"][-1]}
    report = ExperimentReport("simulate", {"T": T}, series, True, details,
                              seed, config.config_hash())
    extra_files = []
    if _getval(sec, "save_snapshot", False, bool):
        extra_files.append(("state", traj.final, traj.times[-1]))
    return report, extra_files


def _run_ensemble(cp, config, seed, workers):
    sec = _sec(cp, "ensemble")
    t = _getval(sec, "t", 1.0, float)
    n_members = _getval(sec, "n_members", 64, int)
    u0 = SpectralState(parse_state_expr(sec.get("u0", "zero") if hasattr(sec, "get") else "zero", config.n_modes))
    norm_names = (sec.get("norms", "L2,V") if hasattr(sec, "get") else "L2,V").split(",")
    tags = []
    for nm in norm_names:
        nm = nm.strip()
        if nm.lower() == "v":
            tags.append(NormTag.v())
        elif nm.lower().startswith("hs(") and nm.endswith(")"):
            tags.append(NormTag.hs(float(nm[3:-1])))
        elif nm.upper() in ("L1", "L2", "LINF"):
            tags.append({"L1": NormTag.l1(), "L2": NormTag.l2(), "LINF": NormTag.linf()}[nm.upper()])
        else:
            raise ConfigError(f"unknown norm {nm!r}")
    powers = _int_list(sec.get("powers", "1,2") if hasattr(sec, "get") else "1,2")
    ens = make_ensemble(constant_sampler(u0), t, n_members, config, seed, workers=workers)
    rows = moment_report(ens, tags, powers)
    series = {
        "norm": [r.norm for r in rows],
        "power": [r.power for r in rows],
        "mean": [r.mean for r in rows],
        "stderr": [r.stderr for r in rows],
    }
    v_norms = [float(x) for x in np.sqrt(sobolev_norm_sq(ens.states, 1.0))]
    details = {"t": t, "n_members": n_members, "v_norms": v_norms}
    return ExperimentReport("ensemble", {"t": t, "n_members": n_members},
                            series, True, details, seed, config.config_hash()), []


def _resolve_state(expr, config, tol=1e-10):
    if expr.strip().lower() == "steady":
        return steady_state(config, tol=tol)
    return SpectralState(parse_state_expr(expr, config.n_modes))


def _run_mixing(cp, config, seed, workers):
    sec = _sec(cp, "mixing")
    times = _float_list(sec.get("times", "1, 2, 5, 10, 20") if hasattr(sec, "get") else "1, 2, 5, 10, 20")
    n_members = _getval(sec, "n_members", 200, int)
    threshold = _getval(sec, "threshold", 0.1, float)
    family_size = _getval(sec, "family_size", 48, int)
    v1 = _resolve_state(sec.get("v1", "zero") if hasattr(sec, "get") else "zero", config)
    v2 = _resolve_state(sec.get("v2", "steady") if hasattr(sec, "get") else "steady", config)
    family = TestFunctionFamily.gaussian(config.n_modes, size=family_size)
    report = run_mixing(v1, v2, config, times, n_members, family, seed,
                        threshold=threshold, workers=workers)
    return report, []


def _run_contraction(cp, config, seed, workers):
    sec = _sec(cp, "contraction")
    report = run_contraction(
        n_pairs=_getval(sec, "n_pairs", 100, int), config=config,
        T=_getval(sec, "t", 5.0, float), master_seed=seed,
        sample_dt=_getval(sec, "sample_dt", 0.1, float),
        rel_tol=_getval(sec, "rel_tol", 1e-6, float),
        pair_scale=_getval(sec, "pair_scale", 1.0, float), workers=workers)
    return report, []


def _run_recurrence(cp, config, seed, workers):
    sec = _sec(cp, "recurrence")
    start_scale = _getval(sec, "start_scale", 2.0, float)
    n = config.n_modes

    def starts(rng):
        k = np.arange(1, n + 1, dtype=float)
        return start_scale * rng.standard_normal(n) / k**2

    report = run_recurrence(
        m_list=_int_list(sec.get("m_list", "1,2,4") if hasattr(sec, "get") else "1,2,4"),
        config=config, n_pairs=_getval(sec, "n_pairs", 200, int),
        horizon=_getval(sec, "horizon", 20.0, float), master_seed=seed,
        M=_getval(sec, "m_bound", 2.0, float), start_sampler=starts,
        check_every=_getval(sec, "check_every", 10, int), workers=workers)
    return report, []


def _run_energy(cp, config, seed, workers):
    sec = _sec(cp, "energy")
    report = run_energy_balance(
        config, T_burn=_getval(sec, "t_burn", 15.0, float),
        T_avg=_getval(sec, "t_avg", 60.0, float), master_seed=seed,
        n_members=_getval(sec, "n_members", 128, int),
        tolerance=_getval(sec, "tolerance", 0.05, float), workers=workers)
    return report, []


def _run_regularize(cp, config, seed, workers):
    sec = _sec(cp, "regularize")
    sampler = rough_initial_sampler(config.n_modes,
                                    _getval(sec, "exponent", -0.6, float))
    report = run_regularization(
        sampler, config, n_seeds=_getval(sec, "n_seeds", 100, int),
        master_seed=seed,
        tail_collapse_factor=_getval(sec, "tail_collapse_factor", 1e3, float),
        median_ratio_bound=_getval(sec, "band_median_bound", 1.3, float),
        q95_ratio_bound=_getval(sec, "band_q95_bound", 1.5, float),
        workers=workers)
    return report, []


def _run_steady(cp, config, seed, workers):
    sec = _sec(cp, "steady")
    u_hat = steady_state(config, tol=_getval(sec, "tol", 1e-10, float),
                         max_iter=_getval(sec, "max_iter", 50, int))
    from burgers_lab.dynamics import Stepper
    st = Stepper(config)
    nl, _ = st.nonlin(u_hat.coeffs)
    resid = -config.nu * st.k**2 * u_hat.coeffs + nl + config.h_coeffs()
    res_norm = float(np.sqrt(0.5 * np.pi * np.sum(resid**2)))
    series = {"mode": list(range(1, config.n_modes + 1)),
              "coefficient": [float(c) for c in u_hat.coeffs]}
    details = {"residual_l2": res_norm,
               "v_norm": float(np.sqrt(sobolev_norm_sq(u_hat.coeffs, 1.0))),
               "l1_norm": float(l1_norm_arr(u_hat.coeffs))}
    report = ExperimentReport("steady", {}, series, res_norm <= 1e-9, details,
                              seed, config.config_hash())
    extra = []
    if _getval(sec, "save_snapshot", True, bool):
        extra.append(("state", u_hat, 0.0))
    return report, extra


def _run_semigroup(cp, config, seed, workers):
    sec = _sec(cp, "semigroup-norms")
    src = _getval(sec, "source_order", 0.0, float)
    tgt = _getval(sec, "target_order", 1.0, float)
    t_min = _getval(sec, "t_min", 1e-4, float)
    t_max = _getval(sec, "t_max", 10.0, float)
    n_points = _getval(sec, "n_points", 240, int)
    tolerance = _getval(sec, "tolerance", 0.01, float)
    ts = np.geomspace(t_min, t_max, n_points)
    norms = np.array([heat_operator_norm(t, config.nu, src, tgt) for t in ts])
    gap = tgt - src
    scaled = ts ** (gap / 2.0) * norms
    sup_scaled = float(np.max(scaled))
    # the continuous-in-k envelope of the scaled norm
    envelope = (gap / (2.0 * np.e * config.nu)) ** (gap / 2.0) if gap > 0 else 1.0
    rel_err = abs(sup_scaled - envelope) / envelope if gap > 0 else 0.0
    verdict = bool(rel_err <= tolerance)
    series = {"t": [float(t) for t in ts],
              "norm": [float(x) for x in norms],
              "reference": [float(envelope / t ** (gap / 2.0)) for t in ts]}
    details = {"sup_scaled": sup_scaled, "envelope": float(envelope),
               "rel_err": float(rel_err), "tolerance": tolerance,
               "source_order": src, "target_order": tgt}
    return ExperimentReport("semigroup-norms", {"source": src, "target": tgt},
                            series, verdict, details, seed, config.config_hash()), []


def _load_schedule_csv(path: str) -> ControlSchedule:
    """Read a (t, zeta1, zeta2) schedule CSV; extra columns are ignored."""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    knots = np.array([float(r["t"]) for r in rows])
    coeffs = np.stack([[float(r["zeta1"]), float(r["zeta2"])] for r in rows])
    return ControlSchedule(knots, coeffs)


def _run_control(cp, config, seed, workers):
    sec = _sec(cp, "control")
    T = _getval(sec, "t", 4.0, float)
    u0 = SpectralState(parse_state_expr(
        sec.get("u0", "-1.0*sin(1x) + 0.3*sin(3x)") if hasattr(sec, "get") else "-1.0*sin(1x) + 0.3*sin(3x)",
        config.n_modes))
    target_expr = sec.get("target", "steady") if hasattr(sec, "get") else "steady"
    if target_expr.startswith("manufactured:"):
        # build h so the requested profile is an exact steady state, then
        # aim at that profile
        w = SpectralState(parse_state_expr(target_expr[len("manufactured:"):], config.n_modes))
        from burgers_lab.dynamics import Stepper
        st = Stepper(config)
        nl, _ = st.nonlin(w.coeffs)
        h = SpectralState(config.nu * st.k**2 * w.coeffs - nl)
        config = config.with_h(h)
        u_hat = w
    else:
        u_hat = _resolve_state(target_expr, config)
    base_l1 = float(l1_norm_arr(u0.coeffs - u_hat.coeffs, refine=4))
    eps = _getval(sec, "eps", 0.0, float)
    if eps <= 0:
        eps = _getval(sec, "eps_rel", 0.1, float) * base_l1
    problem = ControlProblem(
        u0=u0, u_hat=u_hat, T=T, eps=eps,
        M=_getval(sec, "m_bound", 5.0, float),
        n_knots=_getval(sec, "n_knots", 8, int), config=config)
    replay = sec.get("replay") if hasattr(sec, "get") else None
    if replay:
        schedule = _load_schedule_csv(replay)
        from burgers_lab.control import _verify_schedule
        l1, vn = _verify_schedule(problem, schedule)
        result_details = {"achieved_l1": l1, "achieved_v": vn,
                          "replayed_from": replay, "eps": eps, "M": problem.M,
                          "initial_l1": base_l1}
        verdict = bool(l1 < eps and vn < problem.M)
        coeffs = schedule.coeffs
        knots = schedule.knots
    else:
        result = optimize_control(problem,
                                  n_starts=_getval(sec, "n_starts", 4, int),
                                  maxiter=_getval(sec, "maxiter", 60, int),
                                  master_seed=seed)
        result_details = {"achieved_l1": result.achieved_l1,
                          "achieved_v": result.achieved_v,
                          "iterations": result.iterations,
                          "converged": result.converged,
                          "objective": result.objective_value,
                          "n_starts": result.n_starts,
                          "blowups": result.blowups,
                          "eps": eps, "M": problem.M, "initial_l1": base_l1}
        verdict = result.converged
        coeffs = result.schedule.coeffs
        knots = result.schedule.knots
    series = {"t": [float(t) for t in knots],
              "zeta1": [float(c) for c in coeffs[:, 0]],
              "zeta2": [float(c) for c in coeffs[:, 1]]}
    report = ExperimentReport("control", {"T": T, "eps": eps, "M": problem.M,
                                          "n_knots": problem.n_knots},
                              series, verdict, result_details, seed,
                              config.config_hash())
    return report, []


_RUNNERS = {
    "simulate": _run_simulate,
    "ensemble": _run_ensemble,
    "mixing": _run_mixing,
    "contraction": _run_contraction,
    "recurrence": _run_recurrence,
    "energy": _run_energy,
    "regularize": _run_regularize,
    "control": _run_control,
    "steady": _run_steady,
    "semigroup-norms": _run_semigroup,
}


# -- output writing -----------------------------------------------------------


def _write_outputs(report: ExperimentReport, out_dir: Path, seed: int, extra_files):
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{report.name}-{report.config_hash}-{seed}"
    doc = report.to_json_dict()
    doc["format_version"] = FORMAT_VERSION
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=1),
                         encoding="utf-8")
    csv_path = out_dir / f"{stem}.csv"
    cols = list(report.series.keys())
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(cols + ["config_hash", "master_seed", "format_version"])
        for row in report.series_rows():
            writer.writerow([row[c] for c in cols] +
                            [report.config_hash, seed, FORMAT_VERSION])
    png_path = out_dir / f"{stem}.png"
    render_report(report, png_path)
    files = [json_path, csv_path, png_path]
    for kind, obj, t in extra_files:
        p = out_dir / f"{stem}.state"
        save_snapshot(obj, p, time=t, config_hash=report.config_hash,
                      seed_lineage=(seed,))
        files.append(p)
    return files


def run(subcommand: str, config_path: str, seed: int, out_dir: str,
        workers: int | None = None, verbose: bool = False) -> int:
    """Execute one experiment; returns the process exit status."""
    try:
        cp = _read_config(config_path)
        config = _build_sim_config(cp)
        runner = _RUNNERS[subcommand]
        report, extra_files = runner(cp, config, seed, workers)
        files = _write_outputs(report, Path(out_dir), seed, extra_files)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        if verbose:
            raise
        return 1
    status = 0 if report.verdict else 2
    print(f"{report.name}: verdict={'PASS' if report.verdict else 'FAIL'} "
          f"(exit {status})")
    if verbose:
        for f in files:
            print(f"  wrote {f}")
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="burgers-lab",
        description="Stochastic Burgers laboratory: run one experiment and "
                    "write its JSON report, CSV series, and figure.")
    parser.add_argument("subcommand", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="INI config file")
    parser.add_argument("--seed", type=int, default=12345, help="master seed (u64)")
    parser.add_argument("--out", default="runs", help="output directory")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: BURGERS_LAB_WORKERS or CPU count)")
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    args = parser.parse_args(argv)
    workers = args.workers if args.workers else default_workers()
    return run(args.subcommand, args.config, args.seed, args.out,
               workers=workers, verbose=args.verbose)


if __name__ == "__main__":
    sys.exit(main())
