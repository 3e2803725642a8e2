"""Ground-truth bronchoscope trajectories through a skeleton.

A drive slides the camera along the concatenated centerlines of a planned
root-to-target path at constant speed, pointing at a look-ahead point so
headings blend smoothly through junctions. Jitters (lateral offset, heading,
roll, insertion telemetry) are seeded and scale to zero cleanly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, make_pose, rotation_about_axis
from .skeleton import AirwaySkeleton, SkeletonError


@dataclass(frozen=True)
class SimParams:
    speed_mm_s: float = 20.0
    frame_rate_hz: float = 30.0
    lateral_jitter_mm: float = 0.0
    heading_jitter_deg: float = 0.0
    roll_jitter_deg: float = 0.0
    insertion_noise_mm: float = 0.0
    lookahead_mm: float = 15.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.frame_rate_hz <= 0.0 or self.speed_mm_s <= 0.0:
            raise ValueError("frame_rate_hz and speed_mm_s must be positive")
        for name in ("lateral_jitter_mm", "heading_jitter_deg", "roll_jitter_deg",
                     "insertion_noise_mm"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class TrajectoryFrame:
    t: float
    true_pose: Pose
    insertion_mm: float


def plan_path(skel: AirwaySkeleton, target_airway_id: int) -> list[int]:
    """Unique root-to-target airway id chain."""
    if target_airway_id not in skel.airways:
        raise SkeletonError(f"unknown target airway {target_airway_id}")
    chain = []
    cur: int | None = target_airway_id
    while cur is not None:
        chain.append(cur)
        cur = skel.airways[cur].parent_id
    return chain[::-1]


class _PathCurve:
    """Arc-length lookup on the concatenated centerline of a path."""

    def __init__(self, skel: AirwaySkeleton, path: list[int]):
        if path[0] != skel.root_id:
            raise SkeletonError(f"path must start at the root airway {skel.root_id}")
        pts = [skel.airways[path[0]].centerline]
        for aid in path[1:]:
            pts.append(skel.airways[aid].centerline[1:])  # first point == parent's last
        self.points = np.vstack(pts)
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        self.cum = np.concatenate(([0.0], np.cumsum(seg)))
        self.length = float(self.cum[-1])

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum, s, side="right") - 1)
        i = min(i, len(self.points) - 2)
        seg_len = self.cum[i + 1] - self.cum[i]
        frac = 0.0 if seg_len == 0.0 else (s - self.cum[i]) / seg_len
        return self.points[i] + frac * (self.points[i + 1] - self.points[i])

    def tangent_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum, s, side="right") - 1)
        i = min(i, len(self.points) - 2)
        d = self.points[i + 1] - self.points[i]
        return d / np.linalg.norm(d)


def simulate(skel: AirwaySkeleton, path: list[int],
             params: SimParams = SimParams()) -> list[TrajectoryFrame]:
    """Drive the camera along the path; deterministic for a fixed seed."""
    curve = _PathCurve(skel, path)
    rng = np.random.default_rng(params.seed)
    n_frames = int(math.ceil(curve.length / params.speed_mm_s * params.frame_rate_hz))
    frames: list[TrajectoryFrame] = []
    for i in range(n_frames):
        t = i / params.frame_rate_hz
        s = min(params.speed_mm_s * t, curve.length)
        pos = curve.point_at(s)
        ahead = curve.point_at(min(s + params.lookahead_mm, curve.length))
        heading = ahead - pos
        norm = np.linalg.norm(heading)
        heading = curve.tangent_at(s) if norm < 1e-9 else heading / norm

        tangent = curve.tangent_at(s)
        if params.lateral_jitter_mm > 0.0:
            raw = rng.normal(0.0, params.lateral_jitter_mm, 3)
            pos = pos + raw - tangent * (raw @ tangent)
        if params.heading_jitter_deg > 0.0:
            ax1 = np.cross(tangent, heading + np.array([0.013, 0.017, 0.019]))
            ax1 /= np.linalg.norm(ax1)
            ax2 = np.cross(heading, ax1)
            for ax in (ax1, ax2):
                heading = rotation_about_axis(
                    ax, math.radians(rng.normal(0.0, params.heading_jitter_deg))) @ heading
            heading /= np.linalg.norm(heading)
        roll = rng.normal(0.0, params.roll_jitter_deg) if params.roll_jitter_deg > 0.0 else 0.0

        insertion = s
        if params.insertion_noise_mm > 0.0:
            insertion = max(0.0, s + rng.normal(0.0, params.insertion_noise_mm))
        frames.append(TrajectoryFrame(t=t, true_pose=make_pose(pos, heading, roll),
                                      insertion_mm=insertion))
    return frames
