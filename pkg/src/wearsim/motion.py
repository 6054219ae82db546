"""Ground-truth motion synthesis and the synthetic IMU.

A trajectory assigns each tracked joint a hinge-angle function of time
about a fixed axis; forward kinematics turns that into world
orientations for every bone. The synthetic IMU then reports

    reading = noise * drift * bone_world(t) * mounting_offset

where the perturbation angle is a truncated Gaussian whose sigma
interpolates between the static and dynamic figures with the bone's
instantaneous angular speed.

All bones rest at the identity world orientation: sensors get a heading
reset at power-on while lying parallel in their storage box, so the
calibration pose is the shared zero of every sensor frame. Fixed
mounting differences live entirely in the per-sensor offsets, which the
calibration step cancels.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, replace
from typing import Mapping, Protocol

from . import randomness
from .quatmath import Quaternion, from_axis_angle, hamilton_product, shortest_angle_deg
from .skeleton import JOINTS, BoneId, SensorPlacement, Skeleton, placement_preset

# Step for numeric differentiation of bone orientation (seconds).
_SPEED_H = 5e-4


def fold_deg(deg: float) -> float:
    """Fold an arbitrary angle into [0, 180], the range of measured angles."""
    a = abs(deg) % 360.0
    return 360.0 - a if a > 180.0 else a


class AngleFn(Protocol):
    def angle(self, t: float) -> float: ...


@dataclass(frozen=True)
class Constant:
    deg: float

    def angle(self, t: float) -> float:
        return self.deg


@dataclass(frozen=True)
class Sinusoid:
    center_deg: float
    amplitude_deg: float
    period_s: float
    phase_rad: float = 0.0

    def __post_init__(self) -> None:
        if self.period_s <= 0.0:
            raise ValueError("sinusoid period must be positive")

    def angle(self, t: float) -> float:
        return self.center_deg + self.amplitude_deg * math.sin(
            2.0 * math.pi * t / self.period_s + self.phase_rad)


@dataclass(frozen=True)
class Piecewise:
    """Linear interpolation through (time, angle) knots; clamped outside."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ValueError("piecewise trajectory needs at least two points")
        times = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("piecewise times must be strictly increasing")

    def angle(self, t: float) -> float:
        pts = self.points
        if t <= pts[0][0]:
            return pts[0][1]
        if t >= pts[-1][0]:
            return pts[-1][1]
        i = bisect.bisect_right([p[0] for p in pts], t)
        (t0, a0), (t1, a1) = pts[i - 1], pts[i]
        return a0 + (a1 - a0) * (t - t0) / (t1 - t0)


@dataclass(frozen=True)
class JointTrack:
    fn: AngleFn
    axis: tuple[float, float, float]


@dataclass(frozen=True)
class TrajectorySpec:
    """Hinge-angle programs for a set of joints over a session."""

    joints: Mapping[str, JointTrack]
    duration_s: float

    def __post_init__(self) -> None:
        unknown = sorted(set(self.joints) - set(JOINTS))
        if unknown:
            raise ValueError(f"unknown joint labels in trajectory: {unknown}")
        if self.duration_s <= 0.0:
            raise ValueError("trajectory duration must be positive")

    def with_duration(self, duration_s: float) -> "TrajectorySpec":
        return replace(self, duration_s=duration_s)


@dataclass(frozen=True)
class NoiseModel:
    """Orientation error envelope of the simulated IMU."""

    static_sigma_deg: float = 0.3
    dynamic_sigma_deg: float = 1.2
    static_max_deg: float = 2.0
    dynamic_max_deg: float = 3.5
    drift_deg_per_min: float = 0.0
    seed: int = 0
    # Angular speed at which sigma reaches the dynamic figure.
    omega_ref_deg_s: float = 90.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.static_sigma_deg <= self.static_max_deg:
            raise ValueError("require 0 <= static sigma <= static max")
        if not 0.0 <= self.dynamic_sigma_deg <= self.dynamic_max_deg:
            raise ValueError("require 0 <= dynamic sigma <= dynamic max")
        if self.omega_ref_deg_s <= 0.0:
            raise ValueError("omega_ref_deg_s must be positive")

    @staticmethod
    def zero() -> "NoiseModel":
        return NoiseModel(0.0, 0.0, 0.0, 0.0, 0.0)


def _speed_fraction(noise: NoiseModel, omega_deg_s: float) -> float:
    return min(omega_deg_s / noise.omega_ref_deg_s, 1.0)


def effective_sigma(noise: NoiseModel, omega_deg_s: float) -> float:
    f = _speed_fraction(noise, omega_deg_s)
    return noise.static_sigma_deg + (noise.dynamic_sigma_deg - noise.static_sigma_deg) * f


def effective_cap(noise: NoiseModel, omega_deg_s: float) -> float:
    f = _speed_fraction(noise, omega_deg_s)
    return noise.static_max_deg + (noise.dynamic_max_deg - noise.static_max_deg) * f


def _check_t(spec: TrajectorySpec, t: float) -> None:
    if not 0.0 <= t <= spec.duration_s:
        raise ValueError(f"t={t} outside trajectory [0, {spec.duration_s}]")


def ground_truth(spec: TrajectorySpec, skel: Skeleton, t: float) -> dict[BoneId, Quaternion]:
    """World orientation of every bone at time t (zero noise)."""
    _check_t(spec, t)
    tracks = {JOINTS[label].child_bone: tr for label, tr in spec.joints.items()}
    world: dict[BoneId, Quaternion] = {}
    for bone in BoneId:
        parent = skel.parent[bone]
        q = Quaternion.identity() if parent is None else world[parent]
        tr = tracks.get(bone)
        if tr is not None:
            q = hamilton_product(q, from_axis_angle(tr.axis, tr.fn.angle(t)))
        world[bone] = q
    return world


def random_offsets(placement: SensorPlacement, seed: int) -> dict[int, Quaternion]:
    """Arbitrary fixed mounting rotation per sensor."""
    offsets = {}
    for sensor in sorted(placement.bones):
        rng = randomness.stream(seed, randomness.OFFSETS, sensor)
        w, x, y, z = rng.normal(size=4)
        offsets[sensor] = Quaternion(w, x, y, z)
    return offsets


class SyntheticBody:
    """Stateful sensor simulator for one session.

    Noisy readings consume per-sensor random streams, so each sensor's
    readings must be requested in chronological order for reproducible
    sequences; different sensors are independent.
    """

    def __init__(self, spec: TrajectorySpec, skel: Skeleton,
                 placement: SensorPlacement, noise: NoiseModel,
                 offsets: Mapping[int, Quaternion] | None = None) -> None:
        self.spec = spec
        self.skel = skel
        self.placement = placement
        self.noise = noise
        self._offsets = dict(offsets) if offsets else {}
        self._tracks = {JOINTS[label].child_bone: tr for label, tr in spec.joints.items()}
        self._chain: dict[BoneId, tuple[BoneId, ...]] = {}
        for bone in BoneId:
            chain = []
            cur: BoneId | None = bone
            while cur is not None:
                chain.append(cur)
                cur = skel.parent[cur]
            self._chain[bone] = tuple(reversed(chain))
        self._noisy = noise.static_sigma_deg > 0.0 or noise.dynamic_sigma_deg > 0.0
        self._drifting = noise.drift_deg_per_min != 0.0
        self._noise_rng = {s: randomness.stream(noise.seed, randomness.NOISE, s)
                           for s in sorted(placement.bones)}
        if self._drifting:
            self._drift_axis = {
                s: randomness.unit_vector(randomness.stream(noise.seed, randomness.DRIFT_AXIS, s))
                for s in sorted(placement.bones)}

    def bone_world(self, bone: BoneId, t: float) -> Quaternion:
        _check_t(self.spec, t)
        q = Quaternion.identity()
        for b in self._chain[bone]:
            tr = self._tracks.get(b)
            if tr is not None:
                q = hamilton_product(q, from_axis_angle(tr.axis, tr.fn.angle(t)))
        return q

    def angular_speed(self, bone: BoneId, t: float) -> float:
        """Instantaneous rotation speed in deg/s by central difference."""
        lo = max(0.0, t - _SPEED_H)
        hi = min(self.spec.duration_s, t + _SPEED_H)
        if hi <= lo:
            return 0.0
        return shortest_angle_deg(self.bone_world(bone, lo),
                                  self.bone_world(bone, hi)) / (hi - lo)

    def truth_joint_angle(self, label: str, t: float) -> float:
        """Ground-truth angle between a joint's bones at time t."""
        joint = JOINTS[label]
        return shortest_angle_deg(self.bone_world(joint.parent_bone, t),
                                  self.bone_world(joint.child_bone, t))

    def _perturbation(self, sensor: int, sigma: float, cap: float) -> Quaternion:
        rng = self._noise_rng[sensor]
        angle = abs(float(rng.normal(0.0, sigma)))
        while angle > cap:
            angle = abs(float(rng.normal(0.0, sigma)))
        return from_axis_angle(randomness.unit_vector(rng), angle)

    def calibration_snapshot(self) -> dict[int, Quaternion]:
        """Sensor orientations while the wearer holds the calibration pose.

        The pose is held before the session clock starts, so bones sit at
        their rest (identity) world orientation; static-grade noise still
        applies, which is what makes per-session calibration imperfect.
        """
        snap = {}
        for sensor in sorted(self.placement.bones):
            q = self._offsets.get(sensor, Quaternion.identity())
            if self._noisy:
                p = self._perturbation(sensor, self.noise.static_sigma_deg,
                                       self.noise.static_max_deg)
                q = hamilton_product(p, q)
            snap[sensor] = q
        return snap

    def reading(self, sensor: int, t: float) -> Quaternion:
        """Instantaneous orientation reported by one sensor."""
        bone = self.placement.bones[sensor]
        q = self.bone_world(bone, t)
        off = self._offsets.get(sensor)
        if off is not None:
            q = hamilton_product(q, off)
        if self._drifting:
            drift_deg = self.noise.drift_deg_per_min * t / 60.0
            q = hamilton_product(from_axis_angle(self._drift_axis[sensor], drift_deg), q)
        if self._noisy:
            omega = self.angular_speed(bone, t)
            p = self._perturbation(sensor, effective_sigma(self.noise, omega),
                                   effective_cap(self.noise, omega))
            q = hamilton_product(p, q)
        return q


def _artificial_joint(angle_deg: float | None = None, dwell_s: float = 5.0):
    # Two-segment bench rig: one sensor per segment, hinge fixed at the
    # target angle for the whole dwell.
    if angle_deg is None:
        raise ValueError("artificial-joint preset requires angle_deg")
    placement = SensorPlacement("artificial-joint",
                                {1: BoneId.ARM_R, 2: BoneId.FOREARM_R})
    spec = TrajectorySpec(
        joints={"right elbow": JointTrack(Constant(float(angle_deg)), (0.0, 1.0, 0.0))},
        duration_s=float(dwell_s))
    return spec, placement


def _flexion_cycles(start: float, reps: int, peak: float = 90.0):
    # Bend up in 1.2 s, hold the quick stop 0.8 s, lower in 1.2 s, rest.
    pts = []
    t = start
    for _ in range(reps):
        pts += [(t, 0.0), (t + 1.2, peak), (t + 2.0, peak), (t + 3.2, 0.0)]
        t += 4.0
    return Piecewise(tuple(pts))


def _elbow_flexion():
    spec = TrajectorySpec(
        joints={"right elbow": JointTrack(_flexion_cycles(0.0, 2), (1.0, 0.0, 0.0)),
                "left elbow": JointTrack(_flexion_cycles(8.0, 2), (1.0, 0.0, 0.0))},
        duration_s=16.0)
    return spec, placement_preset("p5-upper")


def _half_jacks(sensors: int = 10, duration_s: float = 10.0):
    if sensors not in (10, 12):
        raise ValueError("half-jacks preset supports sensors=10 or 12")
    swing = lambda center, amp: Sinusoid(center, amp, 1.0, phase_rad=-math.pi / 2.0)
    spec = TrajectorySpec(
        joints={"left shoulder": JointTrack(swing(45.0, 45.0), (0.0, 0.0, 1.0)),
                "right shoulder": JointTrack(swing(45.0, 45.0), (0.0, 0.0, 1.0)),
                "left hip": JointTrack(swing(20.0, 20.0), (0.0, 0.0, 1.0)),
                "right hip": JointTrack(swing(20.0, 20.0), (0.0, 0.0, 1.0))},
        duration_s=float(duration_s))
    return spec, placement_preset(f"p{sensors}")


def _arm_raise(duration_s: float = 10.0):
    if duration_s < 2.0:
        raise ValueError("arm-raise needs at least one 2 s cycle")
    left_pts, right_pts = [], []
    k = 0.0
    while k + 2.0 <= duration_s + 1e-9:
        left_pts += [(k, 0.0), (k + 0.5, 90.0), (k + 1.0, 0.0)]
        right_pts += [(k + 1.0, 0.0), (k + 1.5, 90.0), (k + 2.0, 0.0)]
        k += 2.0
    spec = TrajectorySpec(
        joints={"left shoulder": JointTrack(Piecewise(tuple(left_pts)), (1.0, 0.0, 0.0)),
                "right shoulder": JointTrack(Piecewise(tuple(right_pts)), (1.0, 0.0, 0.0))},
        duration_s=float(duration_s))
    return spec, placement_preset("p5-upper")


_PRESETS = {
    "artificial-joint": _artificial_joint,
    "elbow-flexion": _elbow_flexion,
    "half-jacks": _half_jacks,
    "arm-raise": _arm_raise,
}


def preset_scenario(name: str, **params) -> tuple[TrajectorySpec, SensorPlacement]:
    """Named experiment motion: trajectory plus its sensor placement."""
    if name not in _PRESETS:
        raise ValueError(f"unknown motion preset {name!r}; choose from {sorted(_PRESETS)}")
    try:
        return _PRESETS[name](**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for preset {name!r}: {exc}") from None
