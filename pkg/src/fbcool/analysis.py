"""
Analysis of simulated (or measured) photon-count records.

Survival fitting, action-integral thermometry with the truncated
Boltzmann temperature fit, the binned intensity correlation R(tau) and
phase-averaged transmission for feedback toggling.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np
from scipy import integrate, optimize, special

from .controller import ramp_depth


class AnalysisError(ValueError):
    pass


class FitError(AnalysisError):
    """Degenerate input or a fit that does not converge."""


class SelectionError(AnalysisError):
    """No interval passed the transmission selection."""


class OutOfRampError(AnalysisError):
    pass


# ---------------------------------------------------------------------------
# storage time

@dataclass
class SurvivalCurve:
    t: np.ndarray
    fraction: np.ndarray
    stderr: np.ndarray
    n_atoms: int


@dataclass
class SurvivalFit:
    amplitude: float
    tau: float
    covariance: np.ndarray

    @property
    def sigma(self):
        return np.sqrt(np.diag(self.covariance))


def survival_curve(escape_times, bin_width, run_end):
    """Fraction of atoms still trapped at t = 0, bin_width, ... <= run_end.

    Atoms with ``None`` or ``inf`` escape time survived the whole run and
    are right-censored at ``run_end``.
    """
    times = np.array([np.inf if t is None else float(t) for t in escape_times])
    if times.size == 0:
        raise AnalysisError("no atoms")
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    t = np.arange(int(math.floor(run_end / bin_width + 1e-9)) + 1) * bin_width
    frac = (times[None, :] > t[:, None]).mean(axis=1)
    err = np.sqrt(frac * (1.0 - frac) / times.size)
    return SurvivalCurve(t, frac, err, int(times.size))


def _exp_model(t, amp, tau):
    return amp * np.exp(-t / tau)


def fit_exponential(t, p, max_iter=2000):
    """Least-squares fit of ``A exp(-t / tau)`` to a survival curve."""
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.unique(t).size < 3:
        raise FitError("need at least 3 distinct time points")
    if np.ptp(p) <= 0:
        raise FitError("survival curve is constant; no decay to fit")
    pos = p > 0
    if pos.sum() >= 2:
        slope, icpt = np.polyfit(t[pos], np.log(p[pos]), 1)
        tau0 = -1.0 / slope if slope < 0 else np.ptp(t)
        amp0 = min(math.exp(icpt), 1.0)
    else:
        tau0, amp0 = np.ptp(t) / 3.0, 1.0
    try:
        popt, pcov = optimize.curve_fit(_exp_model, t, p, p0=(amp0, tau0),
                                        bounds=([0.0, 1e-12 * np.ptp(t)], [np.inf, np.inf]),
                                        ftol=1e-14, xtol=1e-14, gtol=1e-14, max_nfev=max_iter)
    except (RuntimeError, optimize.OptimizeWarning) as exc:
        raise FitError(f"exponential fit did not converge: {exc}") from exc
    amp, tau = popt
    if not np.isfinite(tau) or tau > 1e6 * np.ptp(t):
        raise FitError("fitted storage time diverges")
    return SurvivalFit(float(amp), float(tau), pcov)


# ---------------------------------------------------------------------------
# action-integral thermometry

def action(energy, depth):
    """Radial action for ``energy`` above the bottom of V(x) = -depth exp(-x^2).

    Constant prefactors are dropped (the kernel is sqrt(E_total - V)), so
    only ratios and equalities of actions are meaningful.
    """
    if not 0.0 < energy <= depth:
        raise AnalysisError(f"action needs 0 < E <= U, got E={energy}, U={depth}")
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    if energy == depth:
        val, _ = integrate.quad(lambda x: math.exp(-0.5 * x * x), 0.0, np.inf, **opts)
        return 4.0 * math.sqrt(depth) * val
    x_max = math.sqrt(-math.log1p(-energy / depth))
    rest = depth - energy  # = depth * exp(-x_max^2)

    # sqrt(E_total - V) = sqrt(x_max - x) * smooth(x); the square-root edge
    # is handled by the algebraic weight
    def smooth(x):
        gap = x_max - x
        if gap <= 0.0:
            return math.sqrt(rest * 2.0 * x_max)
        return math.sqrt(rest * math.expm1(gap * (x_max + x)) / gap)

    val, _ = integrate.quad(smooth, 0.0, x_max, weight="alg", wvar=(0.0, 0.5), **opts)
    return 4.0 * val


def escape_depth(t_escape, schedule):
    """Trap depth at the moment of escape, ``t_escape`` µs after the ramp began."""
    if t_escape is None or not 0.0 <= t_escape <= schedule.ramp_duration:
        raise OutOfRampError(f"escape at {t_escape} µs is outside the ramp")
    return ramp_depth(t_escape, schedule)


def reconstruct_energy(u_esc, u_start, rtol=1e-10):
    """Initial energy of an atom that escaped at depth ``u_esc`` of a slow ramp from ``u_start``.

    Solves action(E0, u_start) = action(u_esc, u_esc) on the monotone
    branch E0 in (0, u_start].
    """
    if not 0.0 < u_esc <= u_start:
        raise AnalysisError(f"need 0 < u_esc <= u_start, got {u_esc}, {u_start}")
    if u_esc == u_start:
        return float(u_start)
    target = action(u_esc, u_esc)
    lo = u_start * 1e-14
    f_lo = action(lo, u_start) - target
    f_hi = action(u_start, u_start) - target
    if not f_lo < 0.0 < f_hi:
        raise AnalysisError("root not bracketed; action is not monotone")
    return optimize.brentq(lambda e: action(e, u_start) - target, lo, u_start,
                           xtol=u_start * 1e-15, rtol=rtol)


# ---------------------------------------------------------------------------
# truncated Boltzmann temperature

@dataclass
class TemperatureFit:
    temperature: float
    fit_uncertainty: float
    n_samples: int
    method: str = "mle"


def _trunc_moments(temp, u0, e_min=0.0):
    """Mean and variance of the density E^2 exp(-E/T) restricted to (e_min, u0]."""
    if e_min == 0.0:
        p3 = special.gammainc(3, u0 / temp)
        mean = 3.0 * temp * special.gammainc(4, u0 / temp) / p3
        second = 12.0 * temp * temp * special.gammainc(5, u0 / temp) / p3
        return mean, second - mean * mean
    # shift the exponent to e_min so that nothing underflows at small T
    opts = dict(epsabs=0.0, epsrel=1e-12, limit=200)
    m = [integrate.quad(lambda e, k=k: e ** k * math.exp(-(e - e_min) / temp), e_min, u0, **opts)[0]
         for k in (2, 3, 4)]
    mean = m[1] / m[0]
    return mean, m[2] / m[0] - mean * mean


def truncated_boltzmann_pdf(energy, temp, u0, e_min=0.0):
    energy = np.asarray(energy, dtype=float)
    norm = integrate.quad(lambda e: e * e * math.exp(-(e - e_min) / temp), e_min, u0)[0]
    pdf = energy ** 2 * np.exp(-(energy - e_min) / temp) / norm
    return np.where((energy > e_min) & (energy <= u0), pdf, 0.0)


def sample_truncated_boltzmann(temp, u0, size, rng):
    """Inverse-CDF draws from E^2 exp(-E/T) restricted to (0, u0]."""
    if not temp > 0 or not u0 > 0:
        raise ValueError("temperature and u0 must be positive")
    q = rng.random(size) * special.gammainc(3, u0 / temp)
    return np.minimum(temp * special.gammaincinv(3, q), u0)


def fit_truncated_boltzmann(energies, u0, method="mle", n_bins=12, e_min=0.0):
    """Temperature of a 3D harmonic-oscillator energy distribution truncated to (e_min, u0].

    ``mle`` solves the likelihood equation, which for this exponential
    family matches the truncated-model mean to the sample mean; the
    uncertainty is the inverse Fisher information. ``binned`` fits the
    histogram by weighted least squares. A positive ``e_min`` accounts
    for energies that could not be observed.
    """
    e = np.asarray(energies, dtype=float)
    if e.size < 10:
        raise AnalysisError("need at least 10 energies")
    if not 0.0 <= e_min < u0:
        raise AnalysisError("need 0 <= e_min < u0")
    if np.any(e <= 0) or np.any(e < e_min) or np.any(e > u0):
        raise AnalysisError("energies must lie in (0, u0] and not below e_min")
    n = e.size
    if method == "mle":
        target = e.mean()
        # infinite temperature leaves the E^2 weight alone
        limit = 0.75 * (u0 ** 4 - e_min ** 4) / (u0 ** 3 - e_min ** 3)
        if target >= limit * (1.0 - 1e-9):
            raise FitError("sample mean at or above the infinite-temperature limit; T diverges")

        def f(log_t):
            return _trunc_moments(math.exp(log_t), u0, e_min)[0] - target

        lo = math.log(max(target - e_min, 1e-12 * u0) / 3.0) - 3.0
        while f(lo) > 0:
            lo -= 3.0
            if lo < math.log(u0) - 60:
                raise FitError("temperature fit did not converge")
        hi = math.log(u0)
        while f(hi) < 0:
            hi += 2.0
            if hi > math.log(u0) + 40:
                raise FitError("temperature fit did not converge")
        temp = math.exp(optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-13))
        var = _trunc_moments(temp, u0, e_min)[1]
        sigma = temp * temp / math.sqrt(n * var)
        return TemperatureFit(temp, sigma, n, "mle")
    if method == "binned":
        counts, edges = np.histogram(e, bins=n_bins, range=(e_min, u0))
        centers = 0.5 * (edges[1:] + edges[:-1])
        width = edges[1] - edges[0]
        weights = np.sqrt(np.maximum(counts, 1.0))

        def model(x, temp):
            return n * width * truncated_boltzmann_pdf(x, temp, u0, e_min)

        try:
            popt, pcov = optimize.curve_fit(model, centers, counts, p0=(max(e.mean() / 3.0, 1e-3 * u0),),
                                            sigma=weights, absolute_sigma=True,
                                            bounds=(1e-6 * u0, 1e3 * u0))
        except RuntimeError as exc:
            raise FitError(f"binned temperature fit did not converge: {exc}") from exc
        if popt[0] >= 1e3 * u0 * (1 - 1e-6):
            raise FitError("binned temperature fit diverges")
        return TemperatureFit(float(popt[0]), float(np.sqrt(pcov[0, 0])), n, "binned")
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# intensity correlation

@dataclass
class CorrelationCurve:
    tau: np.ndarray  # µs
    R: np.ndarray
    n_intervals: int
    interval_duration: int = 2000  # bins of 1 µs
    selection: float = 0.8


def split_intervals(bins, interval_bins=2000):
    """Non-overlapping complete intervals of a 1 µs count series."""
    bins = np.asarray(bins)
    n = bins.size // interval_bins
    return [bins[i * interval_bins:(i + 1) * interval_bins] for i in range(n)]


def intensity_correlation(intervals, tau_max, empty_counts_per_bin=None, selection=0.8,
                          normalized=False):
    """Average of R(tau) = <I(t) I(t+tau)> over the selected intervals.

    Intervals are arrays of 1 µs counts of equal length. An interval is
    kept when its mean is below ``selection`` times the empty-cavity
    counts per bin (no selection if ``empty_counts_per_bin`` is None).
    ``normalized`` divides each interval's R by its squared mean.
    """
    intervals = [np.asarray(iv, dtype=float) for iv in intervals]
    if not intervals:
        raise SelectionError("no intervals")
    length = intervals[0].size
    if any(iv.size != length for iv in intervals):
        raise ValueError("intervals must have equal length")
    if not 0 <= tau_max < length:
        raise ValueError("tau_max must be smaller than the interval length")
    data = np.stack(intervals)
    if empty_counts_per_bin is not None:
        keep = data.mean(axis=1) < selection * empty_counts_per_bin
        data = data[keep]
    if data.shape[0] == 0:
        raise SelectionError("no interval passed the transmission selection")
    taus = np.arange(tau_max + 1)
    per = np.empty((data.shape[0], taus.size))
    for k in taus:
        per[:, k] = (data[:, :length - k] * data[:, k:]).sum(axis=1) / (length - k)
    if normalized:
        m = data.mean(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            per = per / (m * m)[:, None]
        per = per[np.isfinite(per).all(axis=1)]
        if per.shape[0] == 0:
            raise SelectionError("all selected intervals are dark")
    return CorrelationCurve(taus, per.mean(axis=0), int(data.shape[0]), length, selection)


def smooth(y, width):
    if width <= 1:
        return np.asarray(y, dtype=float)
    kernel = np.ones(width) / width
    return np.convolve(y, kernel, mode="same")


def find_bump(curve, lo, hi, width=9):
    """Location (µs) and contrast of the strongest local maximum of R in [lo, hi].

    Contrast is the rise of the smoothed R from its minimum at shorter
    lags (but >= lo) up to the peak, relative to the mean of R over
    [lo, hi]. Returns (nan, 0) when there is no interior maximum.
    """
    r = smooth(curve.R, width)
    sel = (curve.tau >= lo) & (curve.tau <= hi)
    idx = np.flatnonzero(sel)
    seg = r[idx]
    inner = [i for i in range(1 + width // 2, seg.size - 1 - width // 2)
             if seg[i] >= seg[i - 1] and seg[i] >= seg[i + 1]]
    if not inner:
        return math.nan, 0.0
    scale = seg.mean()
    best, best_c = None, -np.inf
    for i in inner:
        c = (seg[i] - seg[:i + 1].min()) / scale
        if c > best_c:
            best, best_c = i, c
    return float(curve.tau[idx[best]]), float(best_c)


def square_feature_width(curve, t_int, search=4.0, width=1):
    """Lag (µs) of the steepest fall of R(tau) for 1 <= tau <= search * t_int.

    The modulation imposed by window-synchronous switching decorrelates
    after one integration window, so the steepest drop sits at tau ~ t_int.
    The tau = 0 shot-noise point is excluded.
    """
    r = smooth(curve.R, width)
    hi = int(round(search * t_int))
    seg = r[1:hi + 2]
    drops = seg[:-1] - seg[1:]
    k = int(np.argmax(drops))
    return float(curve.tau[1 + k]) + 0.5


# ---------------------------------------------------------------------------
# feedback toggling

@dataclass
class ToggleResult:
    t: np.ndarray  # ms, block centres within a phase
    trans_on: np.ndarray
    trans_off: np.ndarray
    n_phases: int
    tau_c: float  # ms
    on_fit: tuple  # (offset, amplitude, tau_c)
    off_slope: float  # per ms
    offset: float  # on-phase end level minus off-phase start level
    offset_sigma: float  # standard error from the cycle-to-cycle scatter


def _bins_of(rec):
    return rec.intensity_bins if hasattr(rec, "intensity_bins") else np.asarray(rec)


def toggle_average(records, phase=5000, empty_counts_per_bin=1.0, selection=0.5, block=100,
                   edge=500):
    """Phase-aligned relative transmission for feedback on/off toggling.

    Records start with a feedback-on phase of ``phase`` µs followed by an
    off phase of the same length. A cycle is used only when the on phase,
    the off phase and the next on phase all have mean relative
    transmission below ``selection``. Curves are averaged in ``block`` µs
    blocks. ``offset`` compares the last ``edge`` µs of the on phase with
    the first ``edge`` µs of the off phase, cycle by cycle.
    """
    phase = int(phase)
    if phase % block:
        raise ValueError("phase must be a multiple of block")
    on_sum = np.zeros(phase)
    off_sum = np.zeros(phase)
    n = 0
    jumps = []
    for rec in records:
        rel = np.asarray(_bins_of(rec), dtype=float) / empty_counts_per_bin
        n_cycles = (rel.size - phase) // (2 * phase)
        for k in range(n_cycles):
            start = 2 * k * phase
            on = rel[start:start + phase]
            off = rel[start + phase:start + 2 * phase]
            nxt = rel[start + 2 * phase:start + 3 * phase]
            if on.mean() < selection and off.mean() < selection and nxt.mean() < selection:
                on_sum += on
                off_sum += off
                n += 1
                jumps.append(on[-edge:].mean() - off[:edge].mean())
    if n == 0:
        raise SelectionError("no toggle cycle passed the transmission selection")
    on_avg = (on_sum / n).reshape(-1, block).mean(axis=1)
    off_avg = (off_sum / n).reshape(-1, block).mean(axis=1)
    t = (np.arange(on_avg.size) + 0.5) * block / 1000.0

    def model(tt, c, a, tau):
        return c + a * np.exp(-tt / tau)

    span = t[-1]
    p0 = (on_avg[-1], on_avg[0] - on_avg[-1], span / 5.0)
    bounds = ([-np.inf, -np.inf, 1e-3 * block / 1000.0], [np.inf, np.inf, np.inf])
    try:
        with warnings.catch_warnings():
            # only the parameters are used, not their covariance
            warnings.simplefilter("ignore", optimize.OptimizeWarning)
            popt, _ = optimize.curve_fit(model, t, on_avg, p0=p0, bounds=bounds, max_nfev=20000,
                                         ftol=1e-14, xtol=1e-14, gtol=1e-14)
    except RuntimeError as exc:
        raise FitError(f"on-phase exponential fit did not converge: {exc}") from exc
    slope = float(np.polyfit(t, off_avg, 1)[0])
    jumps = np.asarray(jumps)
    offset = float(jumps.mean())
    offset_sigma = float(jumps.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return ToggleResult(t, on_avg, off_avg, n, float(popt[2]), tuple(float(v) for v in popt),
                        slope, offset, offset_sigma)
