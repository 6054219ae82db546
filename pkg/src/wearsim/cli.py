"""Command line front end.

Exit codes are stable so scripts can branch on failure class:

    0  success
    2  configuration problem (bad scenario, unknown joint, bad flag combo)
    3  I/O or parse failure (missing file, malformed CSV/JSON/YAML)
    4  validation failure (inconsistent recording, disjoint series)
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .pipeline import (HEADER, AngleSeries, ParseError, ValidationError,
                       joint_angle_series, mae, pearson, rate_series,
                       read_recording)
from .protocol import ConfigError
from .runner import _write_csv, execute, load_session, run_scenario
from .scenario import load_scenario
from .skeleton import JOINTS, Skeleton

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_VALIDATION = 4

ANGLE_HEADER = "time_us,angle_deg"


def _slug(label: str) -> str:
    return label.replace(" ", "_")


def cmd_simulate(args: argparse.Namespace) -> int:
    sc = load_scenario(args.scenario, seed=args.seed)
    art = run_scenario(sc, args.out)
    m = art.metrics
    print(f"wrote {args.out} (recording.csv, session_trace.csv, radio_trace.csv, "
          f"metrics.json, session.json, ground truth)")
    print(f"protocol {m['protocol']}  seed {sc.seed}  duration {m['duration_s']:g} s  "
          f"frames {len(art.result.frames)}  hops {m['hop_count']}  "
          f"resyncs {m['resync_count']}")
    for sid, st in sorted(m["per_sensor"].items(), key=lambda kv: int(kv[0])):
        print(f"  sensor {sid}: {st['recorded']} frames  "
              f"mean {st['mean_rate_hz']:.2f} Hz  "
              f"min-window {st['min_window_rate_hz']:.1f} Hz  "
              f"pdr {st['pdr']:.3f}  host-dropped {st['host_dropped']}")
    return EXIT_OK


def _require_joint(label: str) -> None:
    if label not in JOINTS:
        raise ConfigError(f"unknown joint {label!r}; known joints: "
                          f"{', '.join(sorted(JOINTS))}")


def cmd_analyze(args: argparse.Namespace) -> int:
    rec_path = Path(args.recording)
    frames = read_recording(rec_path)
    session_path = Path(args.session) if args.session else rec_path.with_name("session.json")
    if not session_path.exists():
        raise ConfigError(f"no session sidecar at {session_path}; pass --session")
    calib, meta = load_session(session_path)

    if args.joints:
        labels = [s.strip() for s in args.joints.split(",") if s.strip()]
    else:
        labels = list(meta.get("joints", []))
    if not labels:
        raise ConfigError("nothing to analyze: the session lists no joints; pass --joints")
    for label in labels:
        _require_joint(label)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    skel = Skeleton.default()
    summary: dict = {"joints": {}, "rates": {}}
    for label in labels:
        series = joint_angle_series(frames, calib, skel, JOINTS[label])
        _write_csv(out / f"angles_{_slug(label)}.csv", ANGLE_HEADER, series.points)
        values = [v for _, v in series.points]
        lo, hi = min(values), max(values)
        mean = math.fsum(values) / len(values)
        summary["joints"][label] = {
            "count": len(values), "min_deg": lo, "max_deg": hi, "mean_deg": mean,
            "range_deg": hi - lo, "zero_range": hi - lo <= 1e-9,
        }
        flag = "  [zero range]" if hi - lo <= 1e-9 else ""
        print(f"{label}: n={len(values)}  min {lo:.3f}  max {hi:.3f}  "
              f"mean {mean:.3f} deg{flag}")

    end_us = int(meta["duration_s"] * 1e6) if "duration_s" in meta else None
    rate_rows = []
    for sensor, pts in sorted(rate_series(frames, 1.0, end_us=end_us).items()):
        rate_rows.extend((sensor, t, hz) for t, hz in pts)
        stats = {"windows": len(pts)}
        if pts:
            vals = [hz for _, hz in pts]
            stats.update(min_hz=min(vals), max_hz=max(vals),
                         mean_hz=math.fsum(vals) / len(vals))
            print(f"sensor {sensor}: rate mean {stats['mean_hz']:.2f} Hz  "
                  f"min {stats['min_hz']:.1f}  max {stats['max_hz']:.1f}")
        summary["rates"][str(sensor)] = stats
    _write_csv(out / "rates.csv", "sensor_id,time_us,rate_hz", rate_rows)
    (out / "analysis.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def _angle_series_from(path: Path, joint: str | None,
                       session: str | None) -> AngleSeries:
    """An angle series from either a recording or a two-column export."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first == HEADER:
        frames = read_recording(path)
        session_path = Path(session) if session else path.with_name("session.json")
        if not session_path.exists():
            raise ConfigError(f"recording {path} needs a session sidecar "
                              f"(none at {session_path}); pass --session-a/--session-b")
        calib, meta = load_session(session_path)
        label = joint
        if label is None:
            joints = meta.get("joints", [])
            if len(joints) != 1:
                raise ConfigError(f"recording {path} covers joints {joints}; pick one "
                                  f"with --joint")
            label = joints[0]
        _require_joint(label)
        return joint_angle_series(frames, calib, Skeleton.default(), JOINTS[label])
    if first == ANGLE_HEADER:
        points: list[tuple[int, float]] = []
        with open(path, encoding="utf-8") as fh:
            fh.readline()
            for n, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                cells = line.split(",")
                try:
                    if len(cells) != 2:
                        raise ValueError(f"expected 2 columns, got {len(cells)}")
                    points.append((int(cells[0]), float(cells[1])))
                except ValueError as exc:
                    raise ParseError(f"{path} line {n}: {exc}") from None
        if not points:
            raise ValidationError(f"{path} contains no angle rows")
        return AngleSeries(path.stem, points)
    raise ParseError(f"{path}: unrecognized header {first!r}")


def cmd_compare(args: argparse.Namespace) -> int:
    series_a = _angle_series_from(Path(args.a), args.joint, args.session_a)
    series_b = _angle_series_from(Path(args.b), args.joint, args.session_b)
    err = mae(series_a, series_b)
    corr = pearson(series_a, series_b)
    print(f"mae_deg {err:.6g}")
    print(f"pearson {corr:.6g}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report = {"a": str(args.a), "b": str(args.b), "joint": args.joint,
                  "mae_deg": err, "pearson": corr}
        (out / "comparison.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_protocol_bench(args: argparse.Namespace) -> int:
    protocols = [p.strip() for p in args.protocols.split(",") if p.strip()]
    if not protocols:
        raise ConfigError("--protocols lists no protocols")
    for proto in protocols:
        if proto not in ("cw", "ble-baseline"):
            raise ConfigError(f"unknown protocol {proto!r}; choose cw or ble-baseline")
    if args.seeds < 1:
        raise ConfigError(f"--seeds must be >= 1, got {args.seeds}")

    base = load_scenario(args.scenario, seed=args.seed)
    if "ble-baseline" in protocols and len(base.roster) > 5:
        raise ConfigError(f"ble-baseline supports at most 5 sensors; scenario "
                          f"places {len(base.roster)}")

    rows = []
    per_run: dict[str, dict] = {p: {} for p in protocols}
    for i in range(args.seeds):
        seed = base.seed + i
        for proto in protocols:
            sc = replace(load_scenario(args.scenario, seed=seed), protocol_kind=proto)
            m = execute(sc).metrics
            per_run[proto][str(seed)] = {
                "hop_count": m["hop_count"], "resync_count": m["resync_count"],
                "per_sensor": m["per_sensor"],
            }
            for sid, st in sorted(m["per_sensor"].items(), key=lambda kv: int(kv[0])):
                rows.append((proto, seed, sid, st["recorded"], st["pdr"],
                             st["mean_rate_hz"], st["min_window_rate_hz"],
                             st["host_dropped"]))

    report: dict = {"scenario": str(args.scenario), "base_seed": base.seed,
                    "seeds": args.seeds, "protocols": protocols,
                    "per_run": per_run,
                    "hop_count_total": {p: sum(r["hop_count"]
                                               for r in per_run[p].values())
                                        for p in protocols}}
    if "cw" in protocols and "ble-baseline" in protocols:
        dominate = starved = solid = 0
        for i in range(args.seeds):
            key = str(base.seed + i)
            cw = per_run["cw"][key]["per_sensor"]
            ble = per_run["ble-baseline"][key]["per_sensor"]
            if all(cw[k]["mean_rate_hz"] > ble[k]["mean_rate_hz"] for k in cw):
                dominate += 1
            if any(ble[k]["min_window_rate_hz"] < 10.0 for k in ble):
                starved += 1
            if all(cw[k]["min_window_rate_hz"] >= 40.0 for k in cw):
                solid += 1
        report["ordering"] = {
            "cw_mean_dominates_fraction": dominate / args.seeds,
            "ble_min_window_below_10_fraction": starved / args.seeds,
            "cw_min_window_at_least_40_fraction": solid / args.seeds,
        }
        print(f"cw mean rate beats ble-baseline on every sensor in "
              f"{dominate}/{args.seeds} seeds")
        print(f"ble-baseline min window < 10 Hz somewhere in {starved}/{args.seeds} seeds")
        print(f"cw min window >= 40 Hz everywhere in {solid}/{args.seeds} seeds")
    for proto in protocols:
        print(f"{proto}: total hops {report['hop_count_total'][proto]}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "bench.csv",
               "protocol,seed,sensor_id,recorded,pdr,mean_rate_hz,"
               "min_window_rate_hz,host_dropped", rows)
    (out / "bench.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {out / 'bench.json'}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wearsim",
        description="Deterministic simulator for a multi-sensor wearable "
                    "motion-capture system and its 2.4 GHz link")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    sim = sub.add_parser("simulate", help="run a scenario, write recording + traces")
    sim.add_argument("--scenario", required=True, help="scenario YAML file")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, default=None,
                     help="override the scenario's session seed")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze",
                         help="joint angles and delivery rates from a recording")
    ana.add_argument("--recording", required=True, help="recording.csv path")
    ana.add_argument("--session", default=None,
                     help="session.json sidecar (default: next to the recording)")
    ana.add_argument("--joints", default=None,
                     help="comma-separated joint labels (default: session's joints)")
    ana.add_argument("--out", required=True, help="output directory")
    ana.set_defaults(func=cmd_analyze)

    cmp_ = sub.add_parser("compare",
                          help="MAE and Pearson correlation of two angle series")
    cmp_.add_argument("a", help="recording.csv or a time_us,angle_deg csv")
    cmp_.add_argument("b", help="recording.csv or a time_us,angle_deg csv")
    cmp_.add_argument("--joint", default=None,
                      help="joint label, needed when an input is a recording "
                           "covering several joints")
    cmp_.add_argument("--session-a", default=None, help="sidecar for input a")
    cmp_.add_argument("--session-b", default=None, help="sidecar for input b")
    cmp_.add_argument("--out", default=None, help="optional report directory")
    cmp_.set_defaults(func=cmd_compare)

    bench = sub.add_parser("protocol-bench",
                           help="run a scenario across seeds and protocols")
    bench.add_argument("--scenario", required=True, help="scenario YAML file")
    bench.add_argument("--out", required=True, help="output directory")
    bench.add_argument("--protocols", default="cw,ble-baseline",
                       help="comma-separated subset of: cw, ble-baseline")
    bench.add_argument("--seeds", type=int, default=5, help="number of seeds to run")
    bench.add_argument("--seed", type=int, default=None,
                       help="base seed (default: the scenario's)")
    bench.set_defaults(func=cmd_protocol_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (yaml.YAMLError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
