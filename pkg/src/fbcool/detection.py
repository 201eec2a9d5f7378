"""
Photon counting: Poisson samples in 1 µs bins and integration-window sums.

The trajectory kernel draws its bins inline with the same Poisson sampler;
the functions here are the reference implementation and serve analysis of
stored records.
"""

from dataclasses import dataclass

import numpy as np


class MisalignedWindowError(ValueError):
    pass


@dataclass(frozen=True)
class WindowCounts:
    window_index: int
    counts: int
    window_duration: float = 13.0  # µs

    def __post_init__(self):
        if self.counts < 0:
            raise ValueError("counts must be >= 0")
        if not self.window_duration > 0:
            raise ValueError("window duration must be positive")


def sample_counts(mean_rate, duration, rng, size=None):
    """Poisson click count for ``mean_rate`` (1/s) over ``duration`` (s)."""
    if mean_rate < 0:
        raise ValueError("mean_rate must be >= 0")
    return rng.poisson(mean_rate * duration, size=size)


def sample_bins(rates, rng, bin_width=1e-6, dark_rate=0.0):
    """Independent Poisson counts for a series of per-bin mean rates (1/s)."""
    lam = (np.asarray(rates, dtype=float) + dark_rate) * bin_width
    if np.any(lam < 0):
        raise ValueError("rates must be >= 0")
    return rng.poisson(lam)


def bins_per_window(window_duration, bin_width=1.0):
    n = int(round(window_duration / bin_width))
    if n < 1 or abs(n * bin_width - window_duration) > 1e-9 * max(1.0, window_duration):
        raise MisalignedWindowError(
            f"window of {window_duration} is not a whole number of {bin_width} bins")
    return n


def accumulate_window(bins, window_index=0, window_duration=13.0, bin_width=1.0):
    """Sum the bins making up window ``window_index``.

    ``bins`` is either exactly one window's worth of bins or a longer
    series from which the indexed window is taken.
    """
    n = bins_per_window(window_duration, bin_width)
    bins = np.asarray(bins)
    if bins.size == n:
        chunk = bins
    else:
        chunk = bins[window_index * n:(window_index + 1) * n]
        if chunk.size != n:
            raise MisalignedWindowError("series ends before the requested window")
    return WindowCounts(window_index, int(chunk.sum()), window_duration)


def window_series(bins, window_duration=13.0, bin_width=1.0):
    """Counts of all complete consecutive windows in a bin series."""
    n = bins_per_window(window_duration, bin_width)
    bins = np.asarray(bins)
    m = bins.size // n
    return bins[:m * n].reshape(m, n).sum(axis=1)
