"""Perception oracle standing in for the CNN.

observe_truth turns the true pose into per-airway observations (visibility
booleans, camera-frame tip position, direction angles); corrupt degrades a
frame with a parameterized noise model emulating network error modes
(misses, hallucinated bifurcations, id confusion, position/angle/roll
noise). Both are deterministic given their seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (CameraModel, Pose, _visible_mask, angles_to_dir, dir_to_angles,
                       to_camera_frame, visible_airways)
from .skeleton import AirwaySkeleton

MODE_BIFURCATION = "bifurcation"
MODE_DIRECT = "direct"
N_SLOTS = 4   # fixed observation capacity in bifurcation mode

_TIP_Z_FLOOR = 1e-3     # mm; perturbed tips stay in front of the camera
_ANGLE_CLAMP = 89.9     # deg; perturbed angles stay forward-representable


@dataclass
class AirwayObservation:
    """One observed airway. slot is 0..3 in bifurcation mode, airway id in direct mode.

    true_airway_id is simulation bookkeeping (None for padding and
    hallucinations); it never reaches the localizers.
    """

    slot: int
    is_vis: bool
    has_vis_child: bool = False
    tip_cam: np.ndarray = field(default_factory=lambda: np.zeros(3))
    alpha_deg: float = 0.0
    beta_deg: float = 0.0
    true_airway_id: int | None = None

    def __post_init__(self) -> None:
        self.tip_cam = np.asarray(self.tip_cam, dtype=float).reshape(3)

    def dir_cam(self) -> np.ndarray:
        return angles_to_dir(self.alpha_deg, self.beta_deg)

    @property
    def tip_distance(self) -> float:
        return float(np.linalg.norm(self.tip_cam))


@dataclass
class ObservationFrame:
    t: float
    insertion_mm: float
    mode: str
    observations: list[AirwayObservation]

    def visible(self) -> list[AirwayObservation]:
        return [o for o in self.observations if o.is_vis]


@dataclass(frozen=True)
class NoiseModel:
    """Perception-noise parameters; defaults follow the training-time magnitudes."""

    sigma_pos_mm: float = 2.0
    sigma_ang_deg: float = 11.0
    sigma_roll_deg: float = 14.0
    p_miss: float = 0.0
    p_hallucinate: float = 0.0
    p_id_confusion: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p_miss", "p_hallucinate", "p_id_confusion"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("sigma_pos_mm", "sigma_ang_deg", "sigma_roll_deg"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def is_identity(self) -> bool:
        return (self.sigma_pos_mm == 0.0 and self.sigma_ang_deg == 0.0
                and self.sigma_roll_deg == 0.0 and self.p_miss == 0.0
                and self.p_hallucinate == 0.0 and self.p_id_confusion == 0.0)


def _slot_order_key(obs: AirwayObservation) -> tuple:
    # nearest tip first, ties by off-axis angle, then stable id
    off_axis = math.degrees(math.atan2(math.hypot(obs.tip_cam[0], obs.tip_cam[1]),
                                       obs.tip_cam[2]))
    return (not obs.is_vis, obs.tip_distance, off_axis,
            obs.true_airway_id if obs.true_airway_id is not None else 1 << 30)


def observe_truth(pose: Pose, camera: CameraModel, skel: AirwaySkeleton,
                  mode: str = MODE_BIFURCATION, t: float = 0.0,
                  insertion_mm: float = 0.0) -> ObservationFrame:
    """Ground-truth observation frame for the given pose.

    Each visible airway contributes its camera-frame distal endpoint (the
    bifurcation point when it has children) and the angles of its tangent:
    the distal tangent when its bifurcation is visible (parent presentation),
    the proximal tangent otherwise (branch-opening presentation). Airways
    whose tip or tangent points backward in camera frame cannot be
    angle-parameterized and are not emitted.

    Bifurcation mode keeps the 4 nearest airways, padded with is_vis=False
    rows; direct mode emits one row per skeleton airway.
    """
    if mode not in (MODE_BIFURCATION, MODE_DIRECT):
        raise ValueError(f"unknown observation mode {mode!r}")
    vis_ids, has_child = visible_airways(pose, camera, skel)

    rows: list[AirwayObservation] = []
    for aid in sorted(vis_ids):
        a = skel.airways[aid]
        tip = to_camera_frame(pose, a.distal_point)
        if tip[2] <= 0.0:
            continue
        hvc = has_child.get(aid, False)
        tangent_ct = a.distal_tangent if hvc else a.proximal_tangent
        d = pose.rotation.T @ tangent_ct
        if d[2] <= 0.0:
            continue
        alpha, beta = dir_to_angles(d)
        rows.append(AirwayObservation(slot=0, is_vis=True, has_vis_child=hvc,
                                      tip_cam=tip, alpha_deg=alpha, beta_deg=beta,
                                      true_airway_id=aid))

    if mode == MODE_BIFURCATION:
        rows.sort(key=_slot_order_key)
        rows = rows[:N_SLOTS]
        while len(rows) < N_SLOTS:
            rows.append(AirwayObservation(slot=0, is_vis=False))
        for i, r in enumerate(rows):
            r.slot = i
        return ObservationFrame(t=t, insertion_mm=insertion_mm,
                                mode=MODE_BIFURCATION, observations=rows)

    by_id = {r.true_airway_id: r for r in rows}
    out = []
    for aid in sorted(skel.airways):
        if aid in by_id:
            r = by_id[aid]
            r.slot = aid
            out.append(r)
        else:
            out.append(AirwayObservation(slot=aid, is_vis=False))
    return ObservationFrame(t=t, insertion_mm=insertion_mm, mode=MODE_DIRECT,
                            observations=out)


# ---------------------------------------------------------------------------
# Corruption
# ---------------------------------------------------------------------------

def _rotz(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _perturb(obs: AirwayObservation, noise: NoiseModel,
             rng: np.random.Generator) -> AirwayObservation:
    tip = obs.tip_cam
    if noise.sigma_pos_mm > 0.0:
        tip = tip + rng.normal(0.0, noise.sigma_pos_mm, 3)
        tip[2] = max(tip[2], _TIP_Z_FLOOR)
    alpha, beta = obs.alpha_deg, obs.beta_deg
    if noise.sigma_ang_deg > 0.0:
        alpha = float(np.clip(alpha + rng.normal(0.0, noise.sigma_ang_deg),
                              -_ANGLE_CLAMP, _ANGLE_CLAMP))
        beta = float(np.clip(beta + rng.normal(0.0, noise.sigma_ang_deg),
                             -_ANGLE_CLAMP, _ANGLE_CLAMP))
    return replace(obs, tip_cam=tip, alpha_deg=alpha, beta_deg=beta)


def _apply_frame_roll(obs: AirwayObservation, roll_deg: float) -> AirwayObservation:
    rot = _rotz(roll_deg)
    d = rot @ obs.dir_cam()
    if d[2] <= 0.0:   # extreme roll pushed the direction backward; keep forward
        d[2] = 1e-6
        d /= np.linalg.norm(d)
    alpha, beta = dir_to_angles(d)
    return replace(obs, tip_cam=rot @ obs.tip_cam, alpha_deg=alpha, beta_deg=beta)


def _sample_tip_in_cone(rng: np.random.Generator, camera: CameraModel) -> np.ndarray:
    off = math.radians(rng.uniform(0.0, camera.fov_deg / 2.0))
    azim = rng.uniform(0.0, 2.0 * math.pi)
    dist = rng.uniform(5.0, camera.max_vis_dist_mm)
    d = np.array([math.sin(off) * math.cos(azim),
                  math.sin(off) * math.sin(azim),
                  math.cos(off)])
    return dist * d


def _hallucinated_group(rng: np.random.Generator,
                        camera: CameraModel) -> list[AirwayObservation]:
    """A consistent-looking spurious bifurcation: parent + two children."""
    parent_tip = _sample_tip_in_cone(rng, camera)
    rows = [AirwayObservation(slot=0, is_vis=True, has_vis_child=True,
                              tip_cam=parent_tip,
                              alpha_deg=rng.uniform(-40.0, 40.0),
                              beta_deg=rng.uniform(-40.0, 40.0),
                              true_airway_id=None)]
    for _ in range(2):
        tip = None
        for _attempt in range(8):
            d = angles_to_dir(rng.uniform(-45.0, 45.0), rng.uniform(-45.0, 45.0))
            cand = parent_tip + rng.uniform(3.0, 10.0) * d
            if _visible_mask(cand[None, :], _IDENTITY_POSE, camera)[0]:
                tip = cand
                break
        if tip is None:
            tip = parent_tip.copy()
        rows.append(AirwayObservation(slot=0, is_vis=True, has_vis_child=False,
                                      tip_cam=tip,
                                      alpha_deg=rng.uniform(-40.0, 40.0),
                                      beta_deg=rng.uniform(-40.0, 40.0),
                                      true_airway_id=None))
    return rows


_IDENTITY_POSE = Pose(np.zeros(3), np.eye(3))


def corrupt(frame: ObservationFrame, noise: NoiseModel,
            rng: np.random.Generator | None = None,
            camera: CameraModel | None = None,
            skel: AirwaySkeleton | None = None) -> ObservationFrame:
    """Degrade a ground-truth frame per the noise model.

    Deterministic for a fixed seed; pass one Generator per sequence to get a
    reproducible stream across frames. The skeleton is only needed for
    direct-mode id confusion and hallucination (sibling lookup).
    """
    if noise.is_identity:
        return frame
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    if camera is None:
        camera = CameraModel()

    frame_roll = rng.normal(0.0, noise.sigma_roll_deg) if noise.sigma_roll_deg > 0.0 else 0.0

    if frame.mode == MODE_BIFURCATION:
        rows: list[AirwayObservation] = []
        for obs in frame.observations:
            if not obs.is_vis:
                continue
            if noise.p_miss > 0.0 and rng.random() < noise.p_miss:
                continue
            obs = _perturb(obs, noise, rng)
            if frame_roll != 0.0:
                obs = _apply_frame_roll(obs, frame_roll)
            rows.append(obs)
        if noise.p_hallucinate > 0.0 and rng.random() < noise.p_hallucinate:
            rows.extend(_hallucinated_group(rng, camera))
        rows.sort(key=_slot_order_key)
        rows = rows[:N_SLOTS]
        while len(rows) < N_SLOTS:
            rows.append(AirwayObservation(slot=0, is_vis=False))
        for i, r in enumerate(rows):
            r.slot = i
        return ObservationFrame(t=frame.t, insertion_mm=frame.insertion_mm,
                                mode=frame.mode, observations=rows)

    # direct mode: one row per skeleton airway, keyed by claimed airway id
    by_id: dict[int, AirwayObservation] = {}
    all_ids = [o.slot for o in frame.observations]
    for obs in frame.observations:
        if not obs.is_vis:
            continue
        if noise.p_miss > 0.0 and rng.random() < noise.p_miss:
            continue
        out = _perturb(obs, noise, rng)
        if frame_roll != 0.0:
            out = _apply_frame_roll(out, frame_roll)
        claimed = out.slot
        if (noise.p_id_confusion > 0.0 and skel is not None
                and rng.random() < noise.p_id_confusion):
            a = skel.airways.get(out.true_airway_id if out.true_airway_id is not None else claimed)
            if a is not None and a.parent_id is not None:
                siblings = [c for c in skel.airways[a.parent_id].children_ids if c != a.id]
                if siblings:
                    claimed = int(siblings[rng.integers(0, len(siblings))])
        # on collision the nearer claim wins (the other airway reads as missed)
        if claimed not in by_id or out.tip_distance < by_id[claimed].tip_distance:
            by_id[claimed] = replace(out, slot=claimed)

    if (noise.p_hallucinate > 0.0 and skel is not None
            and rng.random() < noise.p_hallucinate):
        parents = [aid for aid in sorted(skel.airways)
                   if len(skel.airways[aid].children_ids) >= 2 and aid not in by_id]
        if parents:
            pid = int(parents[rng.integers(0, len(parents))])
            group = _hallucinated_group(rng, camera)
            by_id[pid] = replace(group[0], slot=pid)
            for child_obs, cid in zip(group[1:], skel.airways[pid].children_ids[:2]):
                if cid not in by_id:
                    by_id[cid] = replace(child_obs, slot=int(cid))

    out_rows = []
    for aid in all_ids:
        if aid in by_id:
            out_rows.append(by_id[aid])
        else:
            out_rows.append(AirwayObservation(slot=aid, is_vis=False))
    return ObservationFrame(t=frame.t, insertion_mm=frame.insertion_mm,
                            mode=frame.mode, observations=out_rows)
