"""6-DOF camera poses and the geometry kernels of the localizer.

Conventions: a pose is a position (mm, CT frame) plus a right-handed
orthonormal frame whose columns are p_x, p_y, p_z with p_z the viewing
direction. Airway directions seen by the camera are parameterized as the two
XYZ Euler angles (alpha about X, then beta about Y, zero Z) that rotate +z
onto the direction; both live in (-90, 90) deg for forward-pointing
directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .skeleton import AirwaySkeleton

_Z = np.array([0.0, 0.0, 1.0])


class BackwardDirectionError(ValueError):
    """Direction points away from the camera (z <= 0); not angle-representable."""


# optimal_roll search grids (radians): +-15 deg at 0.25 deg around each anchor,
# 5 deg coarse global sweep, then 0.05 deg fine pass feeding the golden polish
_ROLL_LOCAL_SPAN = np.deg2rad(np.arange(-15.0, 15.01, 0.25))
_ROLL_COARSE = np.linspace(-math.pi, math.pi, 73)
_ROLL_FINE_STEP = np.deg2rad(0.05)
_ROLL_FINE_SPAN = np.deg2rad(np.arange(-0.25, 0.2501, 0.05))


class RollIndeterminateError(ValueError):
    """All child directions are parallel to the parent axis; roll is free."""


@dataclass
class Pose:
    """Camera location and orientation in the CT frame."""

    position: np.ndarray   # (3,) mm
    rotation: np.ndarray   # (3, 3), columns p_x, p_y, p_z

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)

    def validate(self, tol: float = 1e-9) -> None:
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > tol:
            raise ValueError(f"rotation not orthonormal (max deviation {err:.3g})")
        if np.linalg.det(self.rotation) < 0.0:
            raise ValueError("rotation is left-handed")

    @property
    def p_x(self) -> np.ndarray:
        return self.rotation[:, 0]

    @property
    def p_y(self) -> np.ndarray:
        return self.rotation[:, 1]

    @property
    def p_z(self) -> np.ndarray:
        return self.rotation[:, 2]

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.rotation.copy())


@dataclass(frozen=True)
class CameraModel:
    """Visibility model: full cone angle and maximum visible distance."""

    fov_deg: float = 60.0
    max_vis_dist_mm: float = 30.0

    def __post_init__(self) -> None:
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError(f"fov_deg must be in (0, 180), got {self.fov_deg}")
        if self.max_vis_dist_mm <= 0.0:
            raise ValueError("max_vis_dist_mm must be positive")


@dataclass
class TrackingError:
    e_p: float   # mm
    e_d: float   # deg, angle between pointing vectors
    e_r: float   # deg, roll offset after pointing correction


# ---------------------------------------------------------------------------
# Frames and angles
# ---------------------------------------------------------------------------

def to_camera_frame(pose: Pose, point_ct: np.ndarray) -> np.ndarray:
    """Rigid transform of a CT point into the camera frame (z = viewing axis)."""
    return pose.rotation.T @ (np.asarray(point_ct, dtype=float) - pose.position)


def to_ct_frame(pose: Pose, point_cam: np.ndarray) -> np.ndarray:
    return pose.rotation @ np.asarray(point_cam, dtype=float) + pose.position


def dir_to_angles(dir_cam: np.ndarray) -> tuple[float, float]:
    """(alpha, beta) in degrees for a forward-pointing camera-frame unit vector.

    Rotating +z by alpha about X, then beta about Y reproduces the direction:
    d = (sin(beta) cos(alpha), -sin(alpha), cos(beta) cos(alpha)).
    """
    d = np.asarray(dir_cam, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise ValueError("direction must be unit-norm")
    if d[2] <= 0.0:
        raise BackwardDirectionError(f"direction has non-positive z component ({d[2]:.3g})")
    alpha = -math.degrees(math.asin(max(-1.0, min(1.0, d[1]))))
    beta = math.degrees(math.atan2(d[0], d[2]))
    return alpha, beta


def angles_to_dir(alpha_deg: float, beta_deg: float) -> np.ndarray:
    """Inverse of dir_to_angles."""
    a = math.radians(alpha_deg)
    b = math.radians(beta_deg)
    return np.array([math.sin(b) * math.cos(a), -math.sin(a), math.cos(b) * math.cos(a)])


def rotation_about_axis(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + math.sin(angle_rad) * k + (1.0 - math.cos(angle_rad)) * (k @ k)


def _any_perpendicular(v: np.ndarray) -> np.ndarray:
    ref = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    p = ref - v * (ref @ v)
    return p / np.linalg.norm(p)


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def align_rotation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal (geodesic) rotation taking unit vector a onto unit vector b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    k = _cross3(a, b)
    c = float(a @ b)
    if c < -1.0 + 1e-12:
        return rotation_about_axis(_any_perpendicular(a), math.pi)
    kx = np.array([[0.0, -k[2], k[1]],
                   [k[2], 0.0, -k[0]],
                   [-k[1], k[0], 0.0]])
    return np.eye(3) + kx + kx @ kx / (1.0 + c)


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in degrees between two vectors, numerically stable near 0 and 180."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cx = _cross3(a, b)
    return math.degrees(math.atan2(math.sqrt(float(cx @ cx)), float(a @ b)))


def zero_roll_frame(pointing: np.ndarray) -> np.ndarray:
    """Canonical frame for a pointing direction: minimal rotation of +z onto it."""
    return align_rotation(_Z, np.asarray(pointing, dtype=float))


def make_pose(position: np.ndarray, pointing: np.ndarray, roll_deg: float = 0.0) -> Pose:
    """Pose from position, unit pointing direction and roll about it."""
    pointing = np.asarray(pointing, dtype=float)
    pointing = pointing / np.linalg.norm(pointing)
    base = zero_roll_frame(pointing)
    if roll_deg != 0.0:
        base = rotation_about_axis(pointing, math.radians(roll_deg)) @ base
    return Pose(np.asarray(position, dtype=float).copy(), base)


def pose_roll(pose: Pose) -> float:
    """Roll in degrees of a pose relative to the canonical zero-roll frame."""
    d = pose.p_z
    u = zero_roll_frame(d)[:, 0]
    x = pose.p_x
    return math.degrees(math.atan2(float(_cross3(u, x) @ d), float(u @ x)))


def wrap_angle_deg(angle: float) -> float:
    """Wrap to (-180, 180]."""
    a = (angle + 180.0) % 360.0 - 180.0
    return 180.0 if a == -180.0 else a


# ---------------------------------------------------------------------------
# Visibility
# ---------------------------------------------------------------------------

def _visible_mask(points: np.ndarray, pose: Pose, camera: CameraModel) -> np.ndarray:
    d = points - pose.position
    dist2 = np.einsum("ij,ij->i", d, d)
    proj = d @ pose.p_z
    cos_half = math.cos(math.radians(camera.fov_deg / 2.0))
    # both sides of the cone test are non-negative where proj > 0, so compare squares
    return ((dist2 <= camera.max_vis_dist_mm ** 2) & (proj > 0.0)
            & (proj * proj >= cos_half ** 2 * dist2))


def is_visible(pose: Pose, camera: CameraModel, centerline: np.ndarray) -> bool:
    """True iff some centerline point is within range, in front, and inside the cone."""
    return bool(_visible_mask(np.atleast_2d(np.asarray(centerline, dtype=float)),
                              pose, camera).any())


def visible_airways(pose: Pose, camera: CameraModel,
                    skel: AirwaySkeleton) -> tuple[set[int], dict[int, bool]]:
    """Visible airway ids plus hasVisChild (bifurcation point visible) per visible airway."""
    idx = skel.index()
    mask = _visible_mask(idx.points, pose, camera)
    counts = np.bincount(idx.point_owner[mask], minlength=idx.n_airways)
    vis_rows = np.nonzero(counts > 0)[0]
    vis_ids = {idx.airway_ids[r] for r in vis_rows}

    has_vis_child: dict[int, bool] = {aid: False for aid in vis_ids}
    if len(idx.bif_points):
        bif_mask = _visible_mask(idx.bif_points, pose, camera)
        for row, visible in enumerate(bif_mask):
            pid = int(idx.bif_parent_ids[row])
            if visible and pid in has_vis_child:
                has_vis_child[pid] = True
    return vis_ids, has_vis_child


# ---------------------------------------------------------------------------
# Tracking errors
# ---------------------------------------------------------------------------

def tracking_errors(true_pose: Pose, est_pose: Pose) -> TrackingError:
    """Position, pointing-direction, and roll error between two poses.

    Roll error is measured between the p_x axes after the estimated frame is
    rotated by the minimal rotation aligning its p_z with the true p_z.
    """
    e_p = float(np.linalg.norm(true_pose.position - est_pose.position))
    e_d = angle_between(true_pose.p_z, est_pose.p_z)
    corr = align_rotation(est_pose.p_z, true_pose.p_z)
    e_r = angle_between(true_pose.p_x, corr @ est_pose.p_x)
    return TrackingError(e_p=e_p, e_d=e_d, e_r=e_r)


# ---------------------------------------------------------------------------
# Roll resolution and pose back-out
# ---------------------------------------------------------------------------

def _cross_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cross product without numpy.cross overhead."""
    out = np.empty_like(b)
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def _roll_objective_coeffs(axis: np.ndarray, obs_dirs: np.ndarray, ct_dirs: np.ndarray,
                           weights: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # cos(angle_i(theta)) = A_i + B_i cos(theta) + C_i sin(theta)
    an_obs = obs_dirs @ axis
    an_ct = ct_dirs @ axis
    rho = obs_dirs - np.outer(an_obs, axis)
    tau = ct_dirs - np.outer(an_ct, axis)
    A = an_obs * an_ct
    B = (rho * tau).sum(axis=1)
    C = (_cross_rows(np.broadcast_to(axis, rho.shape), rho) * tau).sum(axis=1)
    return A, B, C


def optimal_roll(parent_dir: np.ndarray, obs_child_dirs: list[np.ndarray] | np.ndarray,
                 ct_child_dirs: list[np.ndarray] | np.ndarray,
                 weights: list[float] | np.ndarray | None = None) -> float:
    """Roll about the parent axis minimizing the weighted mean angular offset.

    Observed child directions must already live in a frame where the parent
    axis coincides with parent_dir (i.e. after parent alignment). Solved in
    closed form on the plane perpendicular to the axis (weighted 2-D
    Procrustes), then polished on the true angular objective; accurate to
    within 0.01 deg of a dense grid search. Returns degrees.
    """
    axis = np.asarray(parent_dir, dtype=float)
    axis = axis / np.linalg.norm(axis)
    obs = np.atleast_2d(np.asarray(obs_child_dirs, dtype=float))
    ct = np.atleast_2d(np.asarray(ct_child_dirs, dtype=float))
    if len(obs) != len(ct) or len(obs) == 0:
        raise ValueError("need equal, non-empty obs/ct direction lists")
    w = np.ones(len(obs)) if weights is None else np.asarray(weights, dtype=float)

    A, B, C = _roll_objective_coeffs(axis, obs, ct, w)
    sin_term = float(w @ C)
    cos_term = float(w @ B)
    if math.hypot(sin_term, cos_term) < 1e-12:
        raise RollIndeterminateError("child directions are parallel to the parent axis")
    theta0 = math.atan2(sin_term, cos_term)

    coeffs = list(zip(A.tolist(), B.tolist(), C.tolist(), w.tolist()))

    def f_scalar(theta: float) -> float:
        ct_, st_ = math.cos(theta), math.sin(theta)
        total = 0.0
        for ai, bi, ci, wi in coeffs:
            v = ai + bi * ct_ + ci * st_
            total += wi * math.acos(1.0 if v > 1.0 else (-1.0 if v < -1.0 else v))
        return total

    # exact alignment: the objective is non-negative, so this is the minimum
    if f_scalar(theta0) < 1e-12:
        return math.degrees(theta0)

    def f_grid(thetas: np.ndarray) -> np.ndarray:
        cosang = A[:, None] + B[:, None] * np.cos(thetas)[None, :] \
            + C[:, None] * np.sin(thetas)[None, :]
        return w @ np.arccos(np.clip(cosang, -1.0, 1.0))

    # coarse global sweep guards against the closed form landing in the wrong
    # basin; a fine grid around both anchors, then a golden-section polish
    # (robust to the |.|-shaped near-noiseless minimum)
    cand = np.concatenate(([theta0], theta0 + _ROLL_LOCAL_SPAN, _ROLL_COARSE))
    vals = f_grid(cand)
    best = float(cand[int(np.argmin(vals))])
    cand2 = best + _ROLL_FINE_SPAN
    vals2 = f_grid(cand2)
    best = float(cand2[int(np.argmin(vals2))])

    lo, hi = best - _ROLL_FINE_STEP, best + _ROLL_FINE_STEP
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = f_scalar(c), f_scalar(d)
    while hi - lo > 1e-7:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = f_scalar(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = f_scalar(d)
    theta = 0.5 * (lo + hi)
    if f_scalar(theta0) <= f_scalar(theta):
        theta = theta0
    return math.degrees(theta)


def backout_pose(bif_point: np.ndarray, bif_parent_dir: np.ndarray,
                 ct_child_dirs: np.ndarray, parent_tip_cam: np.ndarray,
                 parent_dir_cam: np.ndarray, obs_child_dirs_cam: np.ndarray,
                 weights: np.ndarray | None = None) -> tuple[Pose, float, np.ndarray]:
    """Recover the camera pose from a matched bifurcation.

    The rotation is the minimal rotation taking the observed parent direction
    onto the CT parent direction, composed with the optimal roll over the
    assigned children; the position places the observed parent tip on the CT
    bifurcation point. Returns (pose, roll_deg_about_parent, rotated observed
    child dirs in CT frame) so callers can score the residual fit.
    """
    obs = np.atleast_2d(np.asarray(obs_child_dirs_cam, dtype=float))
    if len(obs) < 2:
        raise ValueError("back-out needs at least two assigned children")
    r_align = align_rotation(np.asarray(parent_dir_cam, dtype=float),
                             np.asarray(bif_parent_dir, dtype=float))
    obs_aligned = obs @ r_align.T
    roll_deg = optimal_roll(bif_parent_dir, obs_aligned, ct_child_dirs, weights)
    rotation = rotation_about_axis(bif_parent_dir, math.radians(roll_deg)) @ r_align
    position = np.asarray(bif_point, dtype=float) - rotation @ np.asarray(parent_tip_cam, dtype=float)
    fitted = obs @ rotation.T
    return Pose(position, rotation), roll_deg, fitted
