"""Scenario execution: synthetic wearer, radio session, on-disk outputs.

A run writes one directory:

    recording.csv            delivered sensor frames
    session_trace.csv        every protocol transmission with its outcome
    radio_trace.csv          protocol traffic merged with interferer bursts
    metrics.json             session summary statistics
    ground_truth_<joint>.csv noise-free joint angles at 100 Hz
    session.json             sidecar needed to re-derive angles offline
                             (placement, calibration pose, frozen q_calib)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .motion import SyntheticBody, random_offsets
from .pipeline import ParseError, write_recording
from .protocol import SessionResult, ble_baseline_run, master_run, session_metrics
from .quatmath import Quaternion
from .radio import InterferenceField, build_field
from .scenario import Scenario
from .skeleton import (BoneId, CalibrationPose, CalibrationRecord, SensorPlacement,
                       Skeleton, calibrate)

GROUND_TRUTH_HZ = 100.0
SESSION_TRACE_HEADER = "time_us,duration_us,source,channel,kind,frame_type,sensor_id,outcome"
RADIO_TRACE_HEADER = "time_us,duration_us,source,channel,kind,outcome"


@dataclass
class RunArtifacts:
    scenario: Scenario
    body: SyntheticBody
    calibration: CalibrationRecord
    field: InterferenceField
    result: SessionResult
    metrics: dict


def build_body(sc: Scenario) -> tuple[SyntheticBody, CalibrationRecord]:
    """Synthetic wearer plus the imperfect calibration taken before the run."""
    skel = Skeleton.default()
    offsets = random_offsets(sc.placement, sc.seed)
    body = SyntheticBody(sc.trajectory, skel, sc.placement, sc.noise, offsets)
    calib = calibrate(body.calibration_snapshot(), CalibrationPose.NEUTRAL,
                      sc.placement)
    return body, calib


def execute(sc: Scenario) -> RunArtifacts:
    """Run the radio session without touching the filesystem."""
    body, calib = build_body(sc)
    duration_us = sc.duration_s * 1e6
    # Margin so bursts fully cover transmissions arbitrated near the end.
    field = build_field(sc.interferers, duration_us + 100_000.0)

    def sampler(sensor: int, t_us: float) -> Quaternion:
        return body.reading(sensor, t_us / 1e6)

    if sc.protocol_kind == "cw":
        result = master_run(sc.roster, sc.duration_s, sampler, field, sc.seed,
                            timing=sc.timing, policy=sc.policy,
                            p_floor=sc.p_floor, initial_channel=sc.initial_channel)
    else:
        result = ble_baseline_run(sc.roster, sc.duration_s, sampler, field,
                                  sc.seed, p_floor=sc.p_floor)
    return RunArtifacts(sc, body, calib, field, result, session_metrics(result))


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_cell(c) for c in row) + "\n")


def _session_trace_rows(result: SessionResult):
    for r in result.trace:
        yield (r.time_us, r.duration_us, r.source, r.channel, r.kind,
               r.frame_type, r.sensor_id, r.outcome)


def _radio_trace_rows(result: SessionResult, field: InterferenceField):
    rows = [(r.time_us, r.duration_us, r.source, r.channel, r.kind, r.outcome)
            for r in result.trace]
    for tx in field.all_bursts():
        if tx.start_us > result.duration_us:
            continue
        rows.append((tx.start_us, tx.duration_us, tx.source,
                     tx.channel, tx.source.split(":")[0], "busy"))
    rows.sort(key=lambda r: (r[0], r[2]))
    return rows


def _write_ground_truth(body: SyntheticBody, sc: Scenario, out_dir: Path) -> list[Path]:
    step = int(round(1e6 / GROUND_TRUTH_HZ))
    last = int(sc.duration_s * 1e6 // step)
    paths = []
    for label in sorted(sc.trajectory.joints):
        rows = []
        for k in range(last + 1):
            t_us = k * step
            rows.append((t_us, body.truth_joint_angle(label, t_us / 1e6)))
        path = out_dir / f"ground_truth_{label.replace(' ', '_')}.csv"
        _write_csv(path, "time_us,angle_deg", rows)
        paths.append(path)
    return paths


def _nine(x: float) -> float:
    return float(f"{x:.9g}")


def _write_session(sc: Scenario, calib: CalibrationRecord, path: Path) -> None:
    data = {
        "calibration_pose": calib.pose.value,
        "duration_s": sc.duration_s,
        "joints": sorted(sc.trajectory.joints),
        "motion_preset": sc.motion_preset,
        "placement": {"name": sc.placement.name,
                      "sensors": {str(s): b.value
                                  for s, b in sorted(sc.placement.bones.items())}},
        "protocol": sc.protocol_kind,
        "q_calib": {str(s): [_nine(q.w), _nine(q.x), _nine(q.y), _nine(q.z)]
                    for s, q in sorted(calib.q_calib.items())},
        "seed": sc.seed,
    }
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def load_session(path: str | Path) -> tuple[CalibrationRecord, dict]:
    """Rebuild the calibration record from a session.json sidecar."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        placement = SensorPlacement(
            data["placement"]["name"],
            {int(k): BoneId(v) for k, v in data["placement"]["sensors"].items()})
        pose = CalibrationPose(data["calibration_pose"])
        q_calib = {int(k): Quaternion(*map(float, v))
                   for k, v in data["q_calib"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"session file {path}: {exc}") from None
    return CalibrationRecord(pose, placement, q_calib), data


def run_scenario(sc: Scenario, out_dir: str | Path) -> RunArtifacts:
    """Execute a scenario and write the full output directory."""
    art = execute(sc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_recording(art.result.frames, out / "recording.csv")
    _write_csv(out / "session_trace.csv", SESSION_TRACE_HEADER,
               _session_trace_rows(art.result))
    _write_csv(out / "radio_trace.csv", RADIO_TRACE_HEADER,
               _radio_trace_rows(art.result, art.field))
    (out / "metrics.json").write_text(
        json.dumps(art.metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_ground_truth(art.body, sc, out)
    _write_session(sc, art.calibration, out / "session.json")
    return art
