"""Recording persistence, resampling, and analysis metrics."""

import math
import random

import pytest

from wearsim import pipeline as pl
from wearsim import quatmath as qm
from wearsim import skeleton as sk
from wearsim.pipeline import ParseError, RecordingFrame, ValidationError
from wearsim.quatmath import Quaternion


def frame(ts, sensor, seq, q, status=3):
    return RecordingFrame.quantized(ts, sensor, seq, q, status)


def rot(deg, axis=(0, 1, 0)):
    return qm.from_axis_angle(axis, deg)


class TestRecordingFrame:
    def test_quantized_is_representable_in_nine_digits(self):
        q = qm.from_axis_angle((1, 2, 3), 37.123)
        f = frame(0, 1, 1, q)
        for c in (f.qw, f.qx, f.qy, f.qz):
            assert float(f"{c:.9g}") == c

    def test_unit_enforced(self):
        with pytest.raises(ValueError):
            RecordingFrame(0, 1, 1, 0.9, 0.0, 0.0, 0.0, 3)

    def test_status_range(self):
        with pytest.raises(ValueError):
            RecordingFrame(0, 1, 1, 1.0, 0.0, 0.0, 0.0, 4)
        with pytest.raises(ValueError):
            RecordingFrame(0, 1, 1, 1.0, 0.0, 0.0, 0.0, -1)


class TestRoundTrip:
    def test_empty(self, tmp_path):
        path = tmp_path / "r.csv"
        pl.write_recording([], path)
        assert path.read_text() == "timestamp_us,sensor_id,seq,qw,qx,qy,qz,status\n"
        assert pl.read_recording(path) == []

    def test_single_frame(self, tmp_path):
        path = tmp_path / "r.csv"
        f = RecordingFrame(0, 1, 0, 1.0, 0.0, 0.0, 0.0, 3)
        pl.write_recording([f], path)
        assert pl.read_recording(path) == [f]

    def test_random_frames_exact(self, tmp_path):
        rng = random.Random(4000)
        frames = []
        for sensor in (1, 2, 3):
            ts, seq = 0, 0
            for _ in range(200):
                ts += rng.randint(1, 30000)
                seq += rng.randint(1, 3)
                axis = (rng.gauss(0, 1), rng.gauss(0, 1), rng.gauss(0, 1))
                frames.append(frame(ts, sensor, seq, rot(rng.uniform(0, 360), axis),
                                    status=rng.randint(0, 3)))
        frames.sort(key=lambda f: (f.timestamp_us, f.sensor_id))
        path = tmp_path / "r.csv"
        pl.write_recording(frames, path)
        assert pl.read_recording(path) == frames

    def test_file_rewrite_is_byte_identical(self, tmp_path):
        f = [frame(10, 1, 1, rot(33.0)), frame(20, 1, 2, rot(34.0))]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        pl.write_recording(f, p1)
        pl.write_recording(pl.read_recording(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestReadErrors:
    def write(self, tmp_path, text):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        return p

    def test_bad_header(self, tmp_path):
        p = self.write(tmp_path, "time,stuff\n")
        with pytest.raises(ParseError, match="line 1"):
            pl.read_recording(p)

    def test_short_row(self, tmp_path):
        p = self.write(tmp_path,
                       "timestamp_us,sensor_id,seq,qw,qx,qy,qz,status\n"
                       "0,1,1,1,0,0\n")
        with pytest.raises(ParseError, match="line 2"):
            pl.read_recording(p)

    def test_non_numeric(self, tmp_path):
        p = self.write(tmp_path,
                       "timestamp_us,sensor_id,seq,qw,qx,qy,qz,status\n"
                       "0,1,1,1,0,0,0,3\n"
                       "10,1,2,abc,0,0,0,3\n")
        with pytest.raises(ParseError, match="line 3"):
            pl.read_recording(p)

    def test_non_unit(self, tmp_path):
        p = self.write(tmp_path,
                       "timestamp_us,sensor_id,seq,qw,qx,qy,qz,status\n"
                       "0,1,1,0.5,0,0,0,3\n")
        with pytest.raises(ParseError, match="line 2"):
            pl.read_recording(p)

    def test_seq_regression(self, tmp_path):
        p = self.write(tmp_path,
                       "timestamp_us,sensor_id,seq,qw,qx,qy,qz,status\n"
                       "0,1,5,1,0,0,0,3\n"
                       "10,1,5,1,0,0,0,3\n")
        with pytest.raises(ValidationError, match="line 3.*sensor 1"):
            pl.read_recording(p)

    def test_timestamp_regression(self, tmp_path):
        p = self.write(tmp_path,
                       "timestamp_us,sensor_id,seq,qw,qx,qy,qz,status\n"
                       "100,1,1,1,0,0,0,3\n"
                       "90,1,2,1,0,0,0,3\n")
        with pytest.raises(ValidationError, match="line 3"):
            pl.read_recording(p)

    def test_write_validates_too(self, tmp_path):
        frames = [frame(0, 1, 2, rot(10.0)), frame(10, 1, 1, rot(11.0))]
        with pytest.raises(ValidationError, match="sensor 1"):
            pl.write_recording(frames, tmp_path / "x.csv")


class TestSlerpResample:
    def test_identity_at_native_rate(self):
        frames = [frame(i * 10000, 1, i + 1, rot(float(i))) for i in range(20)]
        out = pl.slerp_resample(frames, 100.0)
        assert len(out) == len(frames)
        for a, b in zip(out, frames):
            assert a.timestamp_us == b.timestamp_us
            assert abs(a.qw - b.qw) <= 1e-9 and abs(a.qx - b.qx) <= 1e-9
            assert abs(a.qy - b.qy) <= 1e-9 and abs(a.qz - b.qz) <= 1e-9

    def test_midpoint(self):
        frames = [frame(0, 1, 1, Quaternion.identity()),
                  frame(10000, 1, 2, rot(90.0, (0, 0, 1)))]
        out = pl.slerp_resample(frames, 200.0)
        mid = [f for f in out if f.timestamp_us == 5000][0]
        assert qm.shortest_angle_deg(mid.quaternion(), rot(45.0, (0, 0, 1))) <= 1e-6

    def test_seq_renumbered_and_status_held(self):
        frames = [frame(0, 1, 7, Quaternion.identity(), status=2),
                  frame(10000, 1, 9, rot(90.0), status=1)]
        out = pl.slerp_resample(frames, 300.0)
        assert [f.seq for f in out] == list(range(1, len(out) + 1))
        assert all(f.status == 2 for f in out if f.timestamp_us < 10000)
        assert out[-1].status == 1

    def test_monotone_bracket(self):
        # Angles of resampled frames stay between bracketing input angles.
        frames = [frame(i * 20000, 1, i + 1, rot(10.0 * i)) for i in range(10)]
        out = pl.slerp_resample(frames, 500.0)
        for f in out:
            lo = 10.0 * (f.timestamp_us // 20000)
            hi = min(lo + 10.0, 90.0)
            a = qm.shortest_angle_deg(f.quaternion(), Quaternion.identity())
            assert lo - 1e-6 <= a <= hi + 1e-6

    def test_too_few_frames(self):
        with pytest.raises(ValidationError, match="sensor 4"):
            pl.slerp_resample([frame(0, 4, 1, Quaternion.identity())], 100.0)


class TestJointAngleSeries:
    def setup_method(self):
        self.skel = sk.Skeleton.default()
        self.placement = sk.placement_preset("p5-upper")
        snapshot = {i: Quaternion.identity() for i in self.placement.bones}
        self.calib = sk.calibrate(snapshot, sk.CalibrationPose.NEUTRAL, self.placement)
        self.joint = sk.JOINTS["right elbow"]

    def test_constant_recording_is_zero(self):
        frames = []
        for i in range(5):
            frames.append(frame(i * 1000, 3, i + 1, Quaternion.identity()))
            frames.append(frame(i * 1000 + 100, 5, i + 1, Quaternion.identity()))
        series = pl.joint_angle_series(frames, self.calib, self.skel, self.joint)
        assert all(a == 0.0 for _, a in series.points)
        assert series.label == "right elbow"

    def test_constant_ninety(self):
        frames = []
        for i in range(5):
            frames.append(frame(i * 1000, 3, i + 1, Quaternion.identity()))
            frames.append(frame(i * 1000 + 100, 5, i + 1, rot(90.0)))
        series = pl.joint_angle_series(frames, self.calib, self.skel, self.joint)
        for _, a in series.points:
            assert abs(a - 90.0) <= 1e-6

    def test_latest_sample_hold(self):
        frames = [
            frame(0, 3, 1, Quaternion.identity()),
            frame(50, 5, 1, rot(10.0)),
            frame(100, 3, 2, Quaternion.identity()),
            frame(150, 5, 2, rot(20.0)),
        ]
        series = pl.joint_angle_series(frames, self.calib, self.skel, self.joint)
        # Grid starts when both sensors have a sample.
        assert [t for t, _ in series.points] == [50, 100, 150]
        assert [round(a, 6) for _, a in series.points] == [10.0, 10.0, 20.0]

    def test_missing_sensor(self):
        frames = [frame(0, 3, 1, Quaternion.identity())]
        with pytest.raises(ValueError, match="5"):
            pl.joint_angle_series(frames, self.calib, self.skel, self.joint)


def series(pts, label="x"):
    return pl.AngleSeries(label, [(int(t), float(a)) for t, a in pts])


class TestMae:
    def test_self_zero(self):
        a = series([(0, 1.0), (100, 2.0), (200, 3.0)])
        assert pl.mae(a, a) == 0.0

    def test_constant_shift(self):
        a = series([(t * 100, math.sin(t / 5.0) * 30) for t in range(50)])
        b = series([(t, v + 5.0) for t, v in a.points])
        assert pl.mae(a, b) == pytest.approx(5.0, abs=1e-9)

    def test_interpolates_b(self):
        a = series([(100, 0.0)])
        b = series([(0, 0.0), (200, 10.0)])
        assert pl.mae(a, b) == pytest.approx(5.0)

    def test_no_overlap(self):
        a = series([(0, 1.0), (10, 1.0)])
        b = series([(100, 1.0), (110, 1.0)])
        with pytest.raises(ValueError, match="overlap"):
            pl.mae(a, b)


class TestPearson:
    def test_affine_is_one(self):
        rng = random.Random(71)
        a = series([(t * 1000, rng.uniform(0, 90)) for t in range(100)])
        b = series([(t, 2.0 * v + 3.0) for t, v in a.points])
        assert abs(pl.pearson(a, b) - 1.0) < 1e-12

    def test_negation_is_minus_one(self):
        a = series([(0, 1.0), (10, 2.0), (20, 4.0)])
        b = series([(t, -v) for t, v in a.points])
        assert abs(pl.pearson(a, b) + 1.0) < 1e-12

    def test_zero_variance(self):
        a = series([(0, 5.0), (10, 5.0)])
        b = series([(0, 1.0), (10, 2.0)])
        with pytest.raises(ValueError, match="variance"):
            pl.pearson(a, b)

    def test_affine_invariance_property(self):
        rng = random.Random(72)
        a = series([(t * 500, rng.gauss(45, 20)) for t in range(200)])
        b = series([(t + 137, rng.gauss(45, 20)) for t, _ in a.points])
        base = pl.pearson(a, b)
        for scale, shift in ((2.0, 0.0), (0.5, -10.0), (7.0, 100.0)):
            bb = pl.AngleSeries("x", [(t, scale * v + shift) for t, v in b.points])
            assert abs(pl.pearson(a, bb) - base) < 1e-12


class TestRateSeries:
    def test_uniform_fifty_hz(self):
        frames = [frame(i * 20000, 1, i + 1, Quaternion.identity()) for i in range(500)]
        rates = pl.rate_series(frames, window_s=1.0)
        assert set(rates) == {1}
        assert all(v == 50.0 for _, v in rates[1])

    def test_gap_reports_zero(self):
        ts = [i * 20000 for i in range(100)]
        ts += [i * 20000 + 3_000_000 for i in range(100, 200)]
        frames = [frame(t, 1, i + 1, Quaternion.identity()) for i, t in enumerate(ts)]
        rates = pl.rate_series(frames, window_s=1.0)
        vals = [v for _, v in rates[1]]
        assert min(vals) == 0.0
        assert max(vals) == 50.0

    def test_window_is_half_open(self):
        # Samples at 0 and exactly at the window edge t=1s: window [0,1s)
        # evaluated at t=1s contains only the first.
        frames = [frame(0, 1, 1, Quaternion.identity()),
                  frame(1_000_000, 1, 2, Quaternion.identity())]
        rates = pl.rate_series(frames, window_s=1.0)
        t0, v0 = rates[1][0]
        assert t0 == 1_000_000
        assert v0 == 1.0
