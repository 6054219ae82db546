"""Recording persistence, resampling, and analysis metrics.

A recording is a flat stream of per-sensor quaternion samples. On disk
it is a plain CSV with a fixed header:

    timestamp_us,sensor_id,seq,qw,qx,qy,qz,status

Quaternion components are serialized with 9 significant digits; frames
built through RecordingFrame.quantized round their components to that
grid first, so write followed by read reproduces frames exactly and a
rewrite of a read file is byte-identical.

Invariants enforced on both read and write: file timestamps never
decrease, per-sensor sequence numbers strictly increase, quaternions
are unit within 1e-6, status is an integer in 0..3. Row-local problems
raise ParseError, cross-row problems ValidationError; both carry the
1-based line number.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .quatmath import Quaternion, slerp
from .skeleton import (CalibrationRecord, JointSpec, Skeleton, animate_frame,
                       joint_angle)

HEADER = "timestamp_us,sensor_id,seq,qw,qx,qy,qz,status"

_UNIT_TOL = 1e-6


class RecordingError(ValueError):
    """Base for recording file problems."""


class ParseError(RecordingError):
    """A row (or the header) is malformed."""


class ValidationError(RecordingError):
    """Rows parse but violate a stream invariant."""


def _nine_digits(x: float) -> float:
    return float(f"{x:.9g}")


@dataclass(frozen=True)
class RecordingFrame:
    """One delivered sensor sample."""

    timestamp_us: int
    sensor_id: int
    seq: int
    qw: float
    qx: float
    qy: float
    qz: float
    status: int

    def __post_init__(self) -> None:
        norm = math.sqrt(self.qw ** 2 + self.qx ** 2 + self.qy ** 2 + self.qz ** 2)
        if abs(norm - 1.0) > _UNIT_TOL:
            raise ValueError(f"quaternion norm {norm:.9f} is not unit within {_UNIT_TOL}")
        if not 0 <= self.status <= 3:
            raise ValueError(f"status {self.status} outside 0..3")

    @staticmethod
    def quantized(timestamp_us: int, sensor_id: int, seq: int,
                  q: Quaternion, status: int = 3) -> "RecordingFrame":
        """Build a frame with components rounded to the serialized grid."""
        return RecordingFrame(timestamp_us, sensor_id, seq,
                              _nine_digits(q.w), _nine_digits(q.x),
                              _nine_digits(q.y), _nine_digits(q.z), status)

    def quaternion(self) -> Quaternion:
        return Quaternion(self.qw, self.qx, self.qy, self.qz)


def _check_stream(frames: Iterable[RecordingFrame], first_line: int = 0) -> None:
    # first_line > 0 means frames came from a file, lines first_line..;
    # 0 means an in-memory list, reported without line numbers.
    last_ts = None
    last_seq: dict[int, int] = {}
    for i, f in enumerate(frames):
        where = f"line {first_line + i}: " if first_line else ""
        if last_ts is not None and f.timestamp_us < last_ts:
            raise ValidationError(
                f"{where}timestamp {f.timestamp_us} decreases (previous {last_ts})")
        last_ts = f.timestamp_us
        prev = last_seq.get(f.sensor_id)
        if prev is not None and f.seq <= prev:
            raise ValidationError(
                f"{where}seq {f.seq} does not increase for sensor {f.sensor_id} "
                f"(previous {prev})")
        last_seq[f.sensor_id] = f.seq


def write_recording(frames: Sequence[RecordingFrame], path: str | Path) -> None:
    """Write frames as CSV. The stream invariants are checked first."""
    _check_stream(frames)
    with open(path, "w", newline="") as fh:
        fh.write(HEADER + "\n")
        for f in frames:
            fh.write(f"{f.timestamp_us},{f.sensor_id},{f.seq},"
                     f"{f.qw:.9g},{f.qx:.9g},{f.qy:.9g},{f.qz:.9g},{f.status}\n")


def read_recording(path: str | Path) -> list[RecordingFrame]:
    """Parse and validate a recording CSV."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != HEADER:
        raise ParseError(f"line 1: expected header {HEADER!r}")
    frames: list[RecordingFrame] = []
    for n, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 8:
            raise ParseError(f"line {n}: expected 8 fields, got {len(parts)}")
        try:
            frame = RecordingFrame(int(parts[0]), int(parts[1]), int(parts[2]),
                                   float(parts[3]), float(parts[4]),
                                   float(parts[5]), float(parts[6]), int(parts[7]))
        except ValueError as exc:
            raise ParseError(f"line {n}: {exc}") from exc
        frames.append(frame)
    _check_stream(frames, first_line=2)
    return frames


def slerp_resample(frames: Sequence[RecordingFrame], target_hz: float) -> list[RecordingFrame]:
    """Resample each sensor onto a uniform grid at target_hz.

    The grid spans that sensor's first to last timestamp; orientations
    interpolate along the shorter arc, the status column holds the value
    of the earlier bracketing frame, and sequence numbers are renumbered
    from 1. A sensor with fewer than two frames cannot bracket anything.
    """
    if target_hz <= 0:
        raise ValueError(f"target_hz must be positive, got {target_hz}")
    per_sensor: dict[int, list[RecordingFrame]] = {}
    for f in frames:
        per_sensor.setdefault(f.sensor_id, []).append(f)
    out: list[RecordingFrame] = []
    step = 1e6 / target_hz
    for sensor, fs in sorted(per_sensor.items()):
        if len(fs) < 2:
            raise ValidationError(f"sensor {sensor} has {len(fs)} frame(s); need at least 2")
        ts = [f.timestamp_us for f in fs]
        first, last = ts[0], ts[-1]
        i = 0
        k = 0
        while True:
            t = first + k * step
            if t > last + 1e-6:
                break
            while i + 1 < len(fs) and ts[i + 1] <= t:
                i += 1
            if i + 1 >= len(fs):
                q = fs[i].quaternion()
                status = fs[i].status
            else:
                dt = ts[i + 1] - ts[i]
                frac = 0.0 if dt == 0 else (t - ts[i]) / dt
                q = slerp(fs[i].quaternion(), fs[i + 1].quaternion(), min(frac, 1.0))
                status = fs[i].status
            k += 1
            out.append(RecordingFrame.quantized(int(round(t)), sensor, k, q, status))
    out.sort(key=lambda f: (f.timestamp_us, f.sensor_id))
    return out


@dataclass(frozen=True)
class AngleSeries:
    """Timestamped joint angle trace in degrees."""

    label: str
    points: list[tuple[int, float]]


def joint_angle_series(frames: Sequence[RecordingFrame], calib: CalibrationRecord,
                       skel: Skeleton, joint: JointSpec) -> AngleSeries:
    """Joint angle over time from a recording.

    Sensor streams are asynchronous, so the series is evaluated on the
    union of the two sensors' timestamps with latest-sample-hold; it
    starts once both sensors have delivered at least one sample.
    """
    sensors = (calib.placement.sensor_on(joint.parent_bone),
               calib.placement.sensor_on(joint.child_bone))
    streams: dict[int, list[RecordingFrame]] = {s: [] for s in sensors}
    for f in frames:
        if f.sensor_id in streams:
            streams[f.sensor_id].append(f)
    for s in sensors:
        if not streams[s]:
            raise ValueError(f"recording has no frames for sensor {s} ({joint.label!r})")
    times = {f.timestamp_us for s in sensors for f in streams[s]}
    start = max(streams[s][0].timestamp_us for s in sensors)
    grid = sorted(t for t in times if t >= start)
    stamps = {s: [f.timestamp_us for f in streams[s]] for s in sensors}
    points: list[tuple[int, float]] = []
    for t in grid:
        snapshot = {}
        for s in sensors:
            idx = bisect_right(stamps[s], t) - 1
            snapshot[s] = streams[s][idx].quaternion()
        pose = animate_frame(snapshot, calib, skel, timestamp_us=t)
        points.append((t, joint_angle(pose, joint)))
    return AngleSeries(joint.label, points)


def _interp(points: Sequence[tuple[int, float]], t: float) -> float:
    ts = [p[0] for p in points]
    i = bisect_right(ts, t) - 1
    if i < 0 or t > ts[-1]:
        raise ValueError(f"t={t} outside series range {ts[0]}..{ts[-1]}")
    if ts[i] == t or i + 1 >= len(points):
        return points[i][1]
    frac = (t - ts[i]) / (ts[i + 1] - ts[i])
    return points[i][1] + (points[i + 1][1] - points[i][1]) * frac


def _aligned(a: AngleSeries, b: AngleSeries) -> list[tuple[float, float]]:
    lo = max(a.points[0][0], b.points[0][0])
    hi = min(a.points[-1][0], b.points[-1][0])
    pairs = [(va, _interp(b.points, t)) for t, va in a.points if lo <= t <= hi]
    if lo > hi or not pairs:
        raise ValueError("series do not overlap in time")
    return pairs


def mae(a: AngleSeries, b: AngleSeries) -> float:
    """Mean absolute error of b against a, sampled at a's timestamps.

    b is linearly interpolated; only the overlapping time range counts.
    """
    pairs = _aligned(a, b)
    return math.fsum(abs(va - vb) for va, vb in pairs) / len(pairs)


def pearson(a: AngleSeries, b: AngleSeries) -> float:
    """Pearson correlation of the two series on a's timestamps."""
    pairs = _aligned(a, b)
    n = len(pairs)
    ma = math.fsum(va for va, _ in pairs) / n
    mb = math.fsum(vb for _, vb in pairs) / n
    cov = math.fsum((va - ma) * (vb - mb) for va, vb in pairs)
    var_a = math.fsum((va - ma) ** 2 for va, _ in pairs)
    var_b = math.fsum((vb - mb) ** 2 for _, vb in pairs)
    if var_a == 0.0 or var_b == 0.0:
        raise ValueError("correlation undefined: a series has zero variance")
    return cov / math.sqrt(var_a * var_b)


def rate_series(frames: Sequence[RecordingFrame], window_s: float = 1.0,
                end_us: int | None = None) -> dict[int, list[tuple[int, float]]]:
    """Per-sensor delivery rate over a sliding half-open window [t-w, t).

    Evaluated every 0.1 s from first timestamp + window up to end_us
    (default: that sensor's last timestamp).
    """
    if window_s <= 0:
        raise ValueError(f"window_s must be positive, got {window_s}")
    w = int(round(window_s * 1e6))
    per_sensor: dict[int, list[int]] = {}
    for f in frames:
        per_sensor.setdefault(f.sensor_id, []).append(f.timestamp_us)
    rates: dict[int, list[tuple[int, float]]] = {}
    for sensor, ts in sorted(per_sensor.items()):
        ts.sort()
        end = ts[-1] if end_us is None else end_us
        series: list[tuple[int, float]] = []
        t = ts[0] + w
        while t <= end:
            count = bisect_left(ts, t) - bisect_left(ts, t - w)
            series.append((t, count / window_s))
            t += 100_000
        rates[sensor] = series
    return rates
