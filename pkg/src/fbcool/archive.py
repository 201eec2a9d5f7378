"""
Line-delimited JSON archive of trajectory records.

One JSON object per line and per atom::

    {"label": "feedback_on", "seed": [master, point, atom],
     "escape_time_us": 1234.5 | null, "unbound_time_us": ... | null,
     "duration_us": 20000.0, "t_int_us": 13.0,
     "bins_rle": [[count, run_length], ...] | null,
     "windows": [...] | null, "trap_history": [...] | null}

``bins_rle`` is the run-length encoded 1 µs intensity series. Series are
omitted in ``summary`` mode or when they were not recorded.
"""

import json

import numpy as np

from .dynamics import TrajectoryRecord


def rle_encode(values):
    values = np.asarray(values)
    if values.size == 0:
        return []
    change = np.flatnonzero(np.diff(values)) + 1
    starts = np.concatenate(([0], change))
    lengths = np.diff(np.concatenate((starts, [values.size])))
    return [[int(values[s]), int(n)] for s, n in zip(starts, lengths)]


def rle_decode(pairs, dtype=np.int32):
    if not pairs:
        return np.zeros(0, dtype=dtype)
    vals, lens = zip(*pairs)
    return np.repeat(np.asarray(vals, dtype=dtype), lens)


def _series(arr):
    return None if arr is None else [int(v) for v in arr]


def record_to_json(label, rec, full=True):
    obj = {
        "label": label,
        "seed": [int(s) for s in rec.rng_seed],
        "escape_time_us": rec.escape_time,
        "unbound_time_us": rec.unbound_time,
        "duration_us": rec.duration,
        "t_int_us": rec.t_int,
        "bins_rle": None,
        "windows": None,
        "trap_history": None,
    }
    if full:
        if rec.intensity_bins is not None:
            obj["bins_rle"] = rle_encode(rec.intensity_bins)
        obj["windows"] = _series(rec.window_counts)
        obj["trap_history"] = _series(rec.trap_history)
    return json.dumps(obj, separators=(",", ":"))


def record_from_json(line):
    obj = json.loads(line)
    rec = TrajectoryRecord(
        escape_time=obj["escape_time_us"],
        unbound_time=obj["unbound_time_us"],
        duration=obj["duration_us"],
        intensity_bins=None if obj["bins_rle"] is None else rle_decode(obj["bins_rle"]),
        window_counts=None if obj["windows"] is None else np.asarray(obj["windows"], dtype=np.int32),
        trap_history=None if obj["trap_history"] is None else np.asarray(obj["trap_history"], dtype=np.int8),
        rng_seed=tuple(obj["seed"]),
        t_int=obj["t_int_us"],
    )
    return obj["label"], rec


def write_records(path, records, full=True):
    """Write ``records`` (label -> list of TrajectoryRecord) in label order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for label, recs in records.items():
            for rec in recs:
                fh.write(record_to_json(label, rec, full))
                fh.write("\n")


def read_records(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                label, rec = record_from_json(line)
                out.setdefault(label, []).append(rec)
    return out
