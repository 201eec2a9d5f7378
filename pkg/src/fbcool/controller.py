"""
Two-window feedback logic and trap-depth schedules.

All times are in µs and depths in µK.
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class TrapLevel(IntEnum):
    HIGH = 0
    LOW = 1
    RAMP = 2
    OFF = 3


# segment kinds understood by the trajectory kernel
SEG_FEEDBACK = 0
SEG_HIGH = 1
SEG_LOW = 2
SEG_OFF = 3
SEG_RAMP = 4

_LEVEL_KINDS = {"feedback": SEG_FEEDBACK, "high": SEG_HIGH, "low": SEG_LOW, "off": SEG_OFF}


@dataclass(frozen=True)
class FeedbackConfig:
    t_int: float = 13.0
    threshold: int = 3
    u_high: float = 950.0
    u_low: float = 400.0
    strict: bool = False  # compare with ">" instead of ">="

    def __post_init__(self):
        if not self.t_int > 0:
            raise ValueError("t_int must be positive")
        if int(self.threshold) != self.threshold or self.threshold < 1:
            raise ValueError("threshold must be an integer >= 1")
        if not self.u_high > self.u_low > 0:
            raise ValueError("depths must satisfy u_high > u_low > 0")

    @property
    def bins_per_window(self):
        """Integration window length in 1 µs bins."""
        n = int(round(self.t_int))
        if abs(n - self.t_int) > 1e-9 or n < 1:
            raise ValueError(f"t_int = {self.t_int} µs is not a whole number of 1 µs bins")
        return n


def decide(counts_earlier, counts_later, cfg):
    """Trap level for the next window given the last two window counts.

    LOW means the transmission fell by at least ``cfg.threshold`` clicks,
    i.e. the atom is judged to be moving towards the axis.
    """
    if counts_earlier < 0 or counts_later < 0:
        raise ValueError("counts must be non-negative")
    diff = counts_earlier - counts_later
    low = diff > cfg.threshold if cfg.strict else diff >= cfg.threshold
    return TrapLevel.LOW if low else TrapLevel.HIGH


class Controller:
    """Window-by-window emulation of the feedback logic.

    Holds only the previous window's count. ``on_window`` returns the level
    to apply during the next window.
    """

    def __init__(self, cfg, enabled=True):
        self.cfg = cfg
        self.enabled = enabled
        self._previous = None

    def reset(self):
        self._previous = None

    def on_window(self, counts, enabled=None):
        if enabled is None:
            enabled = self.enabled
        prev, self._previous = self._previous, counts
        if not enabled or prev is None:
            return TrapLevel.HIGH
        return decide(prev, counts, self.cfg)

    def replay(self, window_counts, enabled=True):
        """Levels in force during each window when fed ``window_counts`` in order."""
        self.reset()
        levels = [TrapLevel.HIGH]
        for c in window_counts[:-1]:
            levels.append(self.on_window(int(c), enabled))
        return np.asarray(levels, dtype=np.int8)


@dataclass(frozen=True)
class Schedule:
    """Time dependence of the trap.

    kind ``constant``: a fixed ``level`` (feedback, high, low or off).
    kind ``toggle``: feedback for ``period`` then high for ``period``, repeated.
    kind ``ramp``: ``hold`` µs at ``hold_level``, then a linear ramp from
    ``u_start`` to ``u_end`` over ``ramp_duration`` µs; the depth then
    stays at ``u_end``.
    """

    kind: str = "constant"
    level: str = "feedback"
    period: float = 5000.0
    u_start: float = 950.0
    u_end: float = 100.0
    ramp_duration: float = 4000.0
    hold: float = 0.0
    hold_level: str = "feedback"

    def __post_init__(self):
        if self.kind not in ("constant", "toggle", "ramp"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.level not in _LEVEL_KINDS or self.hold_level not in _LEVEL_KINDS:
            raise ValueError("levels must be one of feedback, high, low, off")
        if self.period <= 0:
            raise ValueError("toggle period must be positive")
        if self.ramp_duration <= 0:
            raise ValueError("ramp duration must be positive")
        if self.u_start < 0 or self.u_end < 0:
            raise ValueError("ramp depths must be >= 0")
        if self.hold < 0:
            raise ValueError("hold must be >= 0")

    @classmethod
    def constant(cls, level="feedback"):
        return cls(kind="constant", level=level)

    @classmethod
    def toggle(cls, period=5000.0):
        return cls(kind="toggle", period=period)

    @classmethod
    def ramp(cls, u_start=950.0, u_end=100.0, ramp_duration=4000.0, hold=0.0,
             hold_level="feedback"):
        return cls(kind="ramp", u_start=u_start, u_end=u_end,
                   ramp_duration=ramp_duration, hold=hold, hold_level=hold_level)

    @property
    def feedback_used(self):
        if self.kind == "constant":
            return self.level == "feedback"
        if self.kind == "toggle":
            return True
        return self.hold > 0 and self.hold_level == "feedback"

    def segments(self, dt):
        """Piecewise description consumed by the kernel.

        Returns ``(ends, kinds, u0, u1, period)`` with ``ends`` the cumulative
        step index at which each segment stops and ``period`` the repetition
        length in steps (0 for no repetition).
        """
        def steps(t):
            n = int(round(t / dt))
            if abs(n * dt - t) > 1e-6 * max(dt, 1.0):
                raise ValueError(f"time {t} µs is not a multiple of dt = {dt} µs")
            return n

        big = np.iinfo(np.int64).max // 4
        if self.kind == "constant":
            ends, kinds, u0, u1, period = [big], [_LEVEL_KINDS[self.level]], [0.0], [0.0], 0
        elif self.kind == "toggle":
            p = steps(self.period)
            ends, kinds, u0, u1, period = [p, 2 * p], [SEG_FEEDBACK, SEG_HIGH], [0.0, 0.0], [0.0, 0.0], 2 * p
        else:
            h = steps(self.hold)
            r = steps(self.ramp_duration)
            ends, kinds, u0, u1 = [], [], [], []
            if h > 0:
                ends.append(h)
                kinds.append(_LEVEL_KINDS[self.hold_level])
                u0.append(0.0)
                u1.append(0.0)
            ends += [h + r, big]
            kinds += [SEG_RAMP, SEG_RAMP]
            u0 += [self.u_start, self.u_end]
            u1 += [self.u_end, self.u_end]
            period = 0
        return (np.asarray(ends, dtype=np.int64), np.asarray(kinds, dtype=np.int64),
                np.asarray(u0, dtype=float), np.asarray(u1, dtype=float), int(period))


def ramp_depth(t, schedule):
    """Depth (µK) of a linear ramp ``t`` µs after the ramp started."""
    if t < 0:
        raise ValueError("t must be >= 0")
    frac = min(t / schedule.ramp_duration, 1.0)
    return schedule.u_start + (schedule.u_end - schedule.u_start) * frac
