"""
Ensemble protocols: heating calibration, storage time, attenuation and
probe-power scans, ramp-down thermometry, feedback toggling and intensity
correlations.

Every atom has its own random stream keyed by (master_seed, point, atom),
so results do not depend on how atoms are spread over worker processes.
Each protocol is split into a simulation part and a pure analysis part;
the latter is what ``replay`` re-runs on archived records.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np

from . import __version__, analysis, model
from .config import ExperimentConfig
from .controller import Schedule
from .dynamics import make_rng, sample_initial, simulate_trajectory

__all__ = [
    "ExperimentConfig", "ExperimentResult", "NonBracketingError", "MixedConfigError",
    "simulate_ensemble", "calibrate_heating", "run_storage", "run_attenuation_scan",
    "run_power_scan", "run_thermometry", "run_toggle", "run_correlation", "merge_storage",
]


class NonBracketingError(RuntimeError):
    pass


class MixedConfigError(ValueError):
    pass


@dataclass
class ExperimentResult:
    """Outcome of one protocol.

    ``curves`` and ``fits`` map labels to analysis objects, ``records``
    maps labels to the per-atom TrajectoryRecords they came from and
    ``summary`` holds scalar diagnostics.
    """

    kind: str
    curves: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    records: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)


def provenance(cfg, **extra):
    out = {
        "config_hash": cfg.hash(),
        "ensemble_hash": cfg.hash(ensemble=True),
        "master_seed": cfg.master_seed,
        "atoms": [cfg.first_atom, cfg.first_atom + cfg.n_atoms],
        "code_version": __version__,
    }
    out.update(extra)
    return out


# ---------------------------------------------------------------------------
# ensemble simulation

def _simulate_atoms(cfg, point, atoms, schedule, duration_us, record, feedback):
    cavity = cfg.cavity_params
    drive = cfg.drive_params
    dyn = cfg.dynamics_params
    out = []
    for atom in atoms:
        seed = (cfg.master_seed, point, atom)
        rng = make_rng(seed)
        init = sample_initial(dyn.t_init, feedback.u_high, rng, cavity, dyn.escape_radius)
        out.append(simulate_trajectory(init, feedback, schedule, duration_us, drive, cavity, dyn,
                                       rng, record=record, rng_seed=seed))
    return out


def _worker(args):
    return _simulate_atoms(*args)


def simulate_ensemble(cfg, schedule, duration_us, point=0, record="none", jobs=1, feedback=None):
    """Simulate atoms ``first_atom .. first_atom + n_atoms - 1`` of scan point ``point``.

    Records come back in atom order whatever ``jobs`` is.
    """
    feedback = feedback or cfg.feedback_params
    atoms = list(range(cfg.first_atom, cfg.first_atom + cfg.n_atoms))
    if jobs <= 1 or len(atoms) < 2:
        return _simulate_atoms(cfg, point, atoms, schedule, duration_us, record, feedback)
    n_chunks = min(len(atoms), 4 * jobs)
    chunks = [c.tolist() for c in np.array_split(np.array(atoms), n_chunks) if c.size]
    args = [(cfg, point, c, schedule, duration_us, record, feedback) for c in chunks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_worker, args))
    return [rec for part in parts for rec in part]


def _storage_schedule(enabled):
    return Schedule.constant("feedback" if enabled else "high")


def escape_times_ms(records):
    return [None if r.escape_time is None else r.escape_time / 1000.0 for r in records]


# ---------------------------------------------------------------------------
# storage time

def analyze_storage(records, duration_ms, bin_ms):
    curve = analysis.survival_curve(escape_times_ms(records), bin_ms, duration_ms)
    return curve, analysis.fit_exponential(curve.t, curve.fraction)


def _storage_point(cfg, point, enabled, duration_ms, jobs, label):
    recs = simulate_ensemble(cfg, _storage_schedule(enabled), duration_ms * 1000.0, point=point,
                             jobs=jobs)
    curve, fit = analyze_storage(recs, duration_ms, cfg.storage.bin_ms)
    return {label: curve}, {label: fit}, {label: recs}


def run_storage(cfg, jobs=1, enabled=None, duration_ms=None, point=0):
    """Survival curve and exponential fit for one ensemble."""
    enabled = cfg.feedback.enabled if enabled is None else enabled
    duration_ms = duration_ms or cfg.storage.duration_ms
    label = "feedback_on" if enabled else "feedback_off"
    curves, fits, recs = _storage_point(cfg, point, enabled, duration_ms, jobs, label)
    n_esc = sum(r.escaped for r in recs[label])
    return ExperimentResult("storage", curves, fits, recs,
                            {"label": label, "n_escaped": n_esc},
                            provenance(cfg, duration_ms=duration_ms))


def merge_storage(results, cfg):
    """Combine partial storage runs of one ensemble (disjoint atom ranges)."""
    keys = {r.provenance["ensemble_hash"] for r in results}
    if len(keys) != 1:
        raise MixedConfigError("refusing to merge results from different configurations")
    label = results[0].summary["label"]
    ranges = sorted(tuple(r.provenance["atoms"]) for r in results)
    for (a0, a1), (b0, b1) in zip(ranges, ranges[1:]):
        if b0 < a1:
            raise MixedConfigError("atom ranges overlap")
    parts = sorted(results, key=lambda r: r.provenance["atoms"][0])
    recs = [rec for r in parts for rec in r.records[label]]
    duration_ms = parts[0].provenance["duration_ms"]
    curve, fit = analyze_storage(recs, duration_ms, cfg.storage.bin_ms)
    merged = ExperimentResult("storage", {label: curve}, {label: fit}, {label: recs},
                              {"label": label, "n_escaped": sum(r.escaped for r in recs)},
                              dict(parts[0].provenance))
    merged.provenance["atoms"] = [ranges[0][0], ranges[-1][1]]
    merged.provenance["config_hash"] = None
    return merged


def _fitted_tau(cfg, zeta, duration_ms, jobs):
    c = cfg.with_values(**{"dynamics.zeta_heat": float(zeta)})
    recs = simulate_ensemble(c, _storage_schedule(False), duration_ms * 1000.0, jobs=jobs)
    if not any(r.escaped for r in recs):
        return math.inf
    bin_ms = min(c.storage.bin_ms, duration_ms / 50.0)
    try:
        _, fit = analyze_storage(recs, duration_ms, bin_ms)
    except analysis.FitError:
        return math.inf
    return fit.tau


def calibrate_heating(cfg, jobs=1, target_ms=None, tolerance=None, log=None):
    """Heating factor zeta for which the no-feedback storage time hits the target.

    Bisection on log(zeta) with the same atom seeds at every trial, so the
    fitted storage time is a deterministic, nearly monotone function of
    zeta. Returns the result with ``summary["zeta_heat"]`` and the
    calibrated config in ``summary["config"]``.
    """
    cal = cfg.calibration
    target = target_ms or cal.target_ms
    tol = tolerance or cal.tolerance
    history = []

    def tau_of(z):
        tau = _fitted_tau(cfg, z, cal.duration_ms, jobs)
        history.append((z, tau))
        if log:
            log(f"zeta={z:.5g} tau={tau:.4g} ms")
        return tau

    lo, hi = math.log(cal.zeta_lo), math.log(cal.zeta_hi)
    tau_lo, tau_hi = tau_of(cal.zeta_lo), tau_of(cal.zeta_hi)
    if not tau_lo > target > tau_hi:
        raise NonBracketingError(
            f"target {target} ms not bracketed: tau({cal.zeta_lo})={tau_lo:.4g} ms, "
            f"tau({cal.zeta_hi})={tau_hi:.4g} ms")
    best = None
    for _ in range(cal.max_iter):
        mid = 0.5 * (lo + hi)
        tau = tau_of(math.exp(mid))
        if best is None or abs(tau - target) < abs(best[1] - target):
            best = (math.exp(mid), tau)
        if abs(tau / target - 1.0) <= tol:
            break
        if tau > target:
            lo = mid
        else:
            hi = mid
    zeta, tau = best
    zeta = float(f"{zeta:.6g}")
    calibrated = cfg.with_values(**{"dynamics.zeta_heat": zeta})
    return ExperimentResult(
        "calibrate", summary={"zeta_heat": zeta, "tau_ms": tau, "target_ms": target,
                              "history": history, "config": calibrated},
        provenance=provenance(cfg))


# ---------------------------------------------------------------------------
# scans

def run_attenuation_scan(cfg, jobs=1):
    """Feedback-on storage for each attenuation plus the no-feedback reference."""
    duration = cfg.scan.duration_ms
    res = ExperimentResult("scan-attenuation", provenance=provenance(cfg, duration_ms=duration))
    rows = []
    for i, att in enumerate(cfg.scan.attenuation):
        c = cfg.with_values(**{"drive.attenuation": float(att)})
        label = f"attenuation_{att:g}"
        curves, fits, recs = _storage_point(c, i, True, duration, jobs, label)
        res.curves.update(curves)
        res.fits.update(fits)
        res.records.update(recs)
        rows.append((att, fits[label]))
    curves, fits, recs = _storage_point(cfg, len(rows), False, duration, jobs, "feedback_off")
    res.curves.update(curves)
    res.fits.update(fits)
    res.records.update(recs)
    res.summary = _attenuation_summary(cfg, res.fits)
    return res


def _attenuation_summary(cfg, fits):
    atts = list(cfg.scan.attenuation)
    taus = [fits[f"attenuation_{a:g}"].tau for a in atts]
    ordered = [t for _, t in sorted(zip(atts, taus), key=lambda r: -r[0])]
    return {
        "attenuation": atts,
        "tau_ms": taus,
        "ordered": all(a > b for a, b in zip(ordered, ordered[1:])),
        "tau_off_ms": fits["feedback_off"].tau,
    }


def run_power_scan(cfg, jobs=1):
    """Storage time against empty-cavity photon number, feedback on and off.

    Both conditions of a power share atom seeds (common random numbers).
    """
    duration = cfg.scan.duration_ms
    res = ExperimentResult("scan-power", provenance=provenance(cfg, duration_ms=duration))
    for i, n in enumerate(cfg.scan.n_empty):
        c = cfg.with_values(**{"drive.n_empty": float(n)})
        for enabled in (True, False):
            label = f"n_{n:g}_{'on' if enabled else 'off'}"
            curves, fits, recs = _storage_point(c, i, enabled, duration, jobs, label)
            res.curves.update(curves)
            res.fits.update(fits)
            res.records.update(recs)
    res.summary = _power_summary(cfg, res.fits)
    return res


def _power_summary(cfg, fits):
    tau_on = [fits[f"n_{n:g}_on"].tau for n in cfg.scan.n_empty]
    tau_off = [fits[f"n_{n:g}_off"].tau for n in cfg.scan.n_empty]
    k = int(np.argmax(tau_on))
    return {
        "n_empty": list(cfg.scan.n_empty),
        "tau_on_ms": tau_on,
        "tau_off_ms": tau_off,
        "on_exceeds_off": all(a > b for a, b in zip(tau_on, tau_off)),
        "peak_n_empty": cfg.scan.n_empty[k],
        "interior_maximum": 0 < k < len(tau_on) - 1,
    }


# ---------------------------------------------------------------------------
# thermometry

def ramp_schedule(cfg, enabled):
    th = cfg.thermometry
    return Schedule.ramp(u_start=th.u_start_uk, u_end=th.u_end_uk, ramp_duration=th.ramp_ms * 1000.0,
                         hold=th.hold_ms * 1000.0, hold_level="feedback" if enabled else "high")


def analyze_thermometry(records, cfg, enabled):
    """Escape depths, reconstructed energies and the temperature fit.

    An atom's escape time is the start of its final unbound stretch.
    Atoms lost during the hold or still bound after the ramp are counted
    but not used.
    """
    th = cfg.thermometry
    sched = ramp_schedule(cfg, enabled)
    hold = th.hold_ms * 1000.0
    u_esc, e0 = [], []
    lost_in_hold = survived = 0
    for r in records:
        if r.escape_time is None:
            survived += 1
            continue
        t = r.unbound_time - hold
        if t < 0:
            lost_in_hold += 1
            continue
        if t > sched.ramp_duration:
            survived += 1
            continue
        u = analysis.escape_depth(t, sched)
        u_esc.append(u)
        e0.append(analysis.reconstruct_energy(u, th.u_start_uk))
    u_esc, e0 = np.array(u_esc), np.array(e0)
    # atoms below this energy cannot leave before the ramp ends
    e_min = analysis.reconstruct_energy(th.u_end_uk, th.u_start_uk)
    fit, status = None, "too few energies"
    if e0.size >= 10:
        try:
            fit = analysis.fit_truncated_boltzmann(e0, th.u_start_uk, e_min=e_min)
            status = "ok"
        except analysis.FitError as exc:
            status = str(exc)
    counts = {"n_used": int(e0.size), "n_lost_in_hold": lost_in_hold,
              "n_survived_ramp": survived, "e_min_uk": e_min, "fit_status": status}
    return u_esc, e0, fit, counts


def run_thermometry(cfg, jobs=1, conditions=(True, False)):
    """Hold, then ramp the trap down and infer the energy distribution."""
    th = cfg.thermometry
    duration = (th.hold_ms + th.ramp_ms + th.tail_ms) * 1000.0
    res = ExperimentResult("thermometry", provenance=provenance(cfg))
    for enabled in conditions:
        label = "feedback_on" if enabled else "feedback_off"
        recs = simulate_ensemble(cfg, ramp_schedule(cfg, enabled), duration, point=0 if enabled else 1,
                                 jobs=jobs)
        u_esc, e0, fit, counts = analyze_thermometry(recs, cfg, enabled)
        res.curves[label] = {"u_esc_uK": u_esc, "e0_uK": e0}
        if fit is not None:
            res.fits[label] = fit
        res.records[label] = recs
        res.summary[label] = counts
    if "feedback_on" in res.fits and "feedback_off" in res.fits:
        res.summary["ratio"] = res.fits["feedback_on"].temperature / res.fits["feedback_off"].temperature
    return res


# ---------------------------------------------------------------------------
# toggling

def empty_counts_per_bin(cfg):
    return model.empty_cavity_rate(cfg.drive_params, cfg.cavity_params) * 1e-6


def analyze_toggle(records, cfg):
    tg = cfg.toggle
    return analysis.toggle_average(records, phase=int(round(tg.phase_ms * 1000)),
                                   empty_counts_per_bin=empty_counts_per_bin(cfg),
                                   selection=tg.selection, block=tg.block_us)


def run_toggle(cfg, jobs=1):
    """Alternate feedback on / off every phase and average the transmission."""
    tg = cfg.toggle
    phase = tg.phase_ms * 1000.0
    duration = (2 * tg.cycles + 1) * phase
    recs = simulate_ensemble(cfg, Schedule.toggle(period=phase), duration, record="full", jobs=jobs)
    tog = analyze_toggle(recs, cfg)
    return ExperimentResult("toggle", {"toggle": tog}, {}, {"toggle": recs}, _toggle_summary(tog),
                            provenance(cfg))


def _toggle_summary(tog):
    return {"tau_c_ms": tog.tau_c, "off_slope_per_ms": tog.off_slope, "offset": tog.offset,
            "offset_sigma": tog.offset_sigma, "n_phases": tog.n_phases}


# ---------------------------------------------------------------------------
# intensity correlation

def correlation_conditions(cfg):
    """(label, schedule, feedback params) for each curve."""
    fb = cfg.feedback_params
    out = [("deep", Schedule.constant("high"), fb), ("shallow", Schedule.constant("low"), fb)]
    for t in cfg.correlation.t_int_us:
        c = cfg.with_values(**{"feedback.t_int_us": float(t)})
        out.append((f"feedback_{t:g}us", Schedule.constant("feedback"), c.feedback_params))
    return out


def analyze_correlation(records, cfg, t_int=None):
    co = cfg.correlation
    intervals = [iv for r in records
                 for iv in analysis.split_intervals(r.intensity_bins, co.interval_us)]
    curve = analysis.intensity_correlation(intervals, co.tau_max_us,
                                           empty_counts_per_bin=empty_counts_per_bin(cfg),
                                           selection=co.selection)
    lo, hi = co.bump_window_us
    loc, contrast = analysis.find_bump(curve, lo, hi)
    feats = {"bump_us": loc, "bump_contrast": contrast, "mean_R0": float(curve.R[0])}
    if t_int is not None:
        feats["square_width_us"] = analysis.square_feature_width(curve, t_int)
    return curve, feats


def run_correlation(cfg, jobs=1):
    """R(tau) in the deep and shallow trap without feedback and with feedback at each t_int."""
    duration = cfg.correlation.duration_ms * 1000.0
    res = ExperimentResult("correlation", provenance=provenance(cfg))
    for point, (label, sched, fb) in enumerate(correlation_conditions(cfg)):
        recs = simulate_ensemble(cfg, sched, duration, point=point, record="full", jobs=jobs,
                                 feedback=fb)
        t_int = fb.t_int if sched.feedback_used else None
        curve, feats = analyze_correlation(recs, cfg, t_int)
        res.curves[label] = curve
        res.records[label] = recs
        res.summary[label] = feats
    return res


# ---------------------------------------------------------------------------
# re-analysis of archived records

def replay(kind, cfg, records):
    """Re-run the analysis of protocol ``kind`` on archived ``records`` (label -> list)."""
    res = ExperimentResult(kind, records=records, provenance=provenance(cfg))
    if kind in ("storage", "scan-attenuation", "scan-power"):
        duration = cfg.storage.duration_ms if kind == "storage" else cfg.scan.duration_ms
        for label, recs in records.items():
            curve, fit = analyze_storage(recs, duration, cfg.storage.bin_ms)
            res.curves[label] = curve
            res.fits[label] = fit
        if kind == "storage":
            label = next(iter(records))
            res.summary = {"label": label, "n_escaped": sum(r.escaped for r in records[label])}
        elif kind == "scan-attenuation":
            res.summary = _attenuation_summary(cfg, res.fits)
        else:
            res.summary = _power_summary(cfg, res.fits)
    elif kind == "thermometry":
        for label, recs in records.items():
            u_esc, e0, fit, counts = analyze_thermometry(recs, cfg, label == "feedback_on")
            res.curves[label] = {"u_esc_uK": u_esc, "e0_uK": e0}
            if fit is not None:
                res.fits[label] = fit
            res.summary[label] = counts
        if "feedback_on" in res.fits and "feedback_off" in res.fits:
            res.summary["ratio"] = (res.fits["feedback_on"].temperature
                                    / res.fits["feedback_off"].temperature)
    elif kind == "toggle":
        res.curves["toggle"] = analyze_toggle(records["toggle"], cfg)
        res.summary = _toggle_summary(res.curves["toggle"])
    elif kind == "correlation":
        t_ints = {label: (fb.t_int if sched.feedback_used else None)
                  for label, sched, fb in correlation_conditions(cfg)}
        for label, recs in records.items():
            res.curves[label], res.summary[label] = analyze_correlation(recs, cfg, t_ints[label])
    else:
        raise ValueError(f"cannot replay {kind!r}")
    return res
