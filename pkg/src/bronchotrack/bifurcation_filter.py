"""Particle filter assigning generic airway observations to CT bifurcations.

Each frame with a visible bifurcation is matched against the skeleton:
candidate junctions are ranked by an insertion/adjacency/position prior,
the best child assignments of the top candidates are scored by how well the
observed child directions fit after parent alignment and optimal roll, and
the argmax posterior wins. The 6-DOF pose is backed out from the winning
match. Between bifurcation sightings the estimate dead-reckons along the
current airway using the insertion telemetry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, permutations

import numpy as np

from .geometry import (Pose, RollIndeterminateError, _cross_rows, align_rotation,
                       backout_pose, make_pose, pose_roll, wrap_angle_deg)
from .perception import MODE_BIFURCATION, AirwayObservation, ObservationFrame
from .skeleton import AirwaySkeleton


def gaussian_pdf(x: float | np.ndarray, sigma: float) -> float | np.ndarray:
    """Zero-mean 1-D Gaussian density."""
    return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))


def log_gaussian_pdf(x: float | np.ndarray, sigma: float) -> float | np.ndarray:
    """Log density; stays finite where the density itself underflows."""
    return -0.5 * (x / sigma) ** 2 - math.log(sigma * math.sqrt(2.0 * math.pi))


def mvn_pdf(diff: np.ndarray, cov: np.ndarray) -> float:
    """Zero-mean multivariate Gaussian density of a 3-vector."""
    diff = np.asarray(diff, dtype=float)
    inv = np.linalg.inv(cov)
    det = np.linalg.det(cov)
    norm = 1.0 / math.sqrt((2.0 * math.pi) ** len(diff) * det)
    return float(norm * math.exp(-0.5 * diff @ inv @ diff))


def log_mvn_pdf(diff: np.ndarray, cov: np.ndarray) -> float:
    diff = np.asarray(diff, dtype=float)
    inv = np.linalg.inv(cov)
    det = float(np.linalg.det(cov))
    return float(-0.5 * diff @ inv @ diff
                 - 0.5 * math.log((2.0 * math.pi) ** len(diff) * det))


def prob_fit(obs_child_dirs: np.ndarray, ct_child_dirs: np.ndarray,
             sigma_fit_rad: float) -> float:
    """Mean Gaussian density of the child-direction angle offsets.

    Observed directions must already be rotated into the CT frame by the
    candidate's parent alignment and roll. Unnormalized; argmax use only.
    """
    obs = np.atleast_2d(np.asarray(obs_child_dirs, dtype=float))
    ct = np.atleast_2d(np.asarray(ct_child_dirs, dtype=float))
    if len(obs) == 0 or len(obs) != len(ct):
        raise ValueError("need equal, non-empty direction lists")
    cosang = np.clip((obs * ct).sum(axis=1), -1.0, 1.0)
    angles = np.arccos(cosang)
    return float(np.mean(gaussian_pdf(angles, sigma_fit_rad)))


def log_prob_fit(obs_child_dirs: np.ndarray, ct_child_dirs: np.ndarray,
                 sigma_fit_rad: float) -> float:
    """log(prob_fit) via logsumexp; finite even where the mean underflows."""
    obs = np.atleast_2d(np.asarray(obs_child_dirs, dtype=float))
    ct = np.atleast_2d(np.asarray(ct_child_dirs, dtype=float))
    cosang = np.clip((obs * ct).sum(axis=1), -1.0, 1.0)
    logs = log_gaussian_pdf(np.arccos(cosang), sigma_fit_rad)
    m = float(np.max(logs))
    return m + math.log(float(np.exp(logs - m).sum())) - math.log(len(logs))


@dataclass
class FilterParams:
    """Variances and search width of the bifurcation filter.

    Defaults are hand-tuned starting points; every knob is config-exposed and
    sweepable through the harness.
    """

    sigma_fit_rad: float = 0.2
    sigma_ins_mm: float = 10.0
    cov_x: np.ndarray = field(default_factory=lambda: 100.0 * np.eye(3))  # mm^2
    sigma_roll_deg: float = 30.0
    n_candidates: int = 3
    gen_weights: dict[int, float] = field(default_factory=lambda: {1: 1.0, 2: 0.1, 3: 0.01})
    gen_weight_floor: float = 1e-6
    # dead-reckoning heading model: the camera is assumed to point at the
    # believed path this far ahead (the scope follows the lumen)
    heading_lookahead_mm: float = 15.0

    def __post_init__(self) -> None:
        self.cov_x = np.asarray(self.cov_x, dtype=float)
        if self.cov_x.shape == ():
            self.cov_x = float(self.cov_x) * np.eye(3)
        if self.sigma_fit_rad <= 0 or self.sigma_ins_mm <= 0 or self.sigma_roll_deg <= 0:
            raise ValueError("all sigmas must be positive")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if not np.allclose(self.cov_x, self.cov_x.T) or np.any(np.linalg.eigvalsh(self.cov_x) <= 0):
            raise ValueError("cov_x must be symmetric positive definite")


@dataclass
class FilterState:
    """Belief carried between frames (single MAP state, no multi-hypothesis)."""

    est_pose: Pose
    prev_visible: set[int]
    prev_roll_deg: float
    prev_insertion_mm: float
    current_airway: int
    current_arc_mm: float = 0.0
    has_fix: bool = False    # becomes True after the first bifurcation update

    @classmethod
    def initial(cls, skel: AirwaySkeleton) -> "FilterState":
        """Bootstrap at the trachea entrance, before any airway has been seen."""
        root = skel.root
        pose = make_pose(root.proximal_point, root.proximal_tangent, 0.0)
        return cls(est_pose=pose, prev_visible=set(), prev_roll_deg=0.0,
                   prev_insertion_mm=0.0, current_airway=skel.root_id,
                   current_arc_mm=0.0, has_fix=False)

    def copy(self) -> "FilterState":
        return FilterState(est_pose=self.est_pose.copy(),
                           prev_visible=set(self.prev_visible),
                           prev_roll_deg=self.prev_roll_deg,
                           prev_insertion_mm=self.prev_insertion_mm,
                           current_airway=self.current_airway,
                           current_arc_mm=self.current_arc_mm,
                           has_fix=self.has_fix)


@dataclass
class PriorProbs:
    prob_ins: float
    prob_airways: float
    prob_x: float
    prob_roll: float

    @property
    def prob_bif(self) -> float:
        return self.prob_ins * self.prob_airways * self.prob_x


@dataclass
class CandidateReport:
    bif_parent_id: int
    prob_ins: float
    prob_airways: float
    prob_x: float
    prob_roll: float
    prob_fit: float
    posterior: float
    roll_deg: float
    assignment: dict[int, int]          # obs slot -> airway id
    implied_position: np.ndarray | None

    def to_dict(self) -> dict:
        return {
            "bif": self.bif_parent_id,
            "prob_ins": self.prob_ins,
            "prob_airways": self.prob_airways,
            "prob_x": self.prob_x,
            "prob_roll": self.prob_roll,
            "prob_fit": self.prob_fit,
            "posterior": self.posterior,
            "roll_deg": self.roll_deg,
            "assignment": {str(k): v for k, v in self.assignment.items()},
            "implied_position": (None if self.implied_position is None
                                 else [float(v) for v in self.implied_position]),
        }


@dataclass
class StepDiagnostics:
    mode: str                              # "update" | "dead_reckon"
    z_hat_bif: float | None = None
    candidates: list[CandidateReport] = field(default_factory=list)
    chosen_bif: int | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "z_hat_bif": self.z_hat_bif,
            "chosen_bif": self.chosen_bif,
            "note": self.note,
            "candidates": [c.to_dict() for c in self.candidates],
        }


def _prob_airways_numerators(state: FilterState, skel: AirwaySkeleton,
                             params: FilterParams) -> np.ndarray:
    """Unnormalized adjacency weight per bifurcation from the previous visible set."""
    idx = skel.index()
    n_bifs = len(idx.bifurcations)
    if not state.has_fix or not state.prev_visible:
        return np.ones(n_bifs)
    w = idx.gen_weight_matrix(params.gen_weights, params.gen_weight_floor)
    rows = [idx.id_to_row[a] for a in sorted(state.prev_visible) if a in idx.id_to_row]
    return w[rows].sum(axis=0)


def bifurcation_prior(state: FilterState, skel: AirwaySkeleton, params: FilterParams,
                      insertion_mm: float, z_hat_bif: float, bif_parent_id: int,
                      implied_position: np.ndarray | None,
                      implied_roll_deg: float | None) -> PriorProbs:
    """Prior probability components for one candidate bifurcation.

    prob_ins gauges insertion + observed depth against the candidate's path
    length from the trachea; prob_airways is the adjacency weight normalized
    across all bifurcations; prob_x and prob_roll compare the implied pose to
    the previous state. Before the first fix, the latter three are uniform.
    """
    idx = skel.index()
    row = idx.bif_row_of_parent[bif_parent_id]
    p_ins = float(gaussian_pdf(insertion_mm + z_hat_bif - idx.bif_z[row], params.sigma_ins_mm))

    nums = _prob_airways_numerators(state, skel, params)
    if not state.has_fix or not state.prev_visible:
        p_air = 1.0 / len(nums)
    else:
        p_air = float(nums[row] / nums.sum())

    if state.has_fix and implied_position is not None:
        p_x = mvn_pdf(state.est_pose.position - implied_position, params.cov_x)
    else:
        p_x = 1.0
    if state.has_fix and implied_roll_deg is not None:
        p_roll = float(gaussian_pdf(wrap_angle_deg(state.prev_roll_deg - implied_roll_deg),
                                    params.sigma_roll_deg))
    else:
        p_roll = 1.0
    return PriorProbs(prob_ins=p_ins, prob_airways=p_air, prob_x=p_x, prob_roll=p_roll)


def _alignment_implied_positions(idx, parent_dir_cam: np.ndarray,
                                 parent_tip_cam: np.ndarray) -> np.ndarray:
    """Implied camera positions for every bifurcation, parent alignment only.

    Roll moves the implied position on a cone around the parent axis; the
    zero-roll point is close enough for prior ranking (stage 1) and is
    replaced by the fully backed-out position for the top candidates.
    """
    a = parent_dir_cam
    b = idx.bif_parent_dirs                      # (B, 3)
    k = _cross_rows(np.broadcast_to(a, b.shape), b)
    c = b @ a
    t = parent_tip_cam
    kxt = _cross_rows(k, np.broadcast_to(t, k.shape))
    kxkxt = _cross_rows(k, kxt)
    safe = c > -1.0 + 1e-9
    denom = np.where(safe, 1.0 + c, 1.0)
    rotated = t + kxt + kxkxt / denom[:, None]
    if not np.all(safe):
        for i in np.nonzero(~safe)[0]:
            rotated[i] = align_rotation(a, b[i]) @ t
    return idx.bif_points - rotated


def _child_matchings(n_obs: int, ct_children: list[int]) -> list[list[tuple[int, int]]]:
    """All full matchings of the smaller side: (obs index, ct child index) pairs."""
    n_ct = len(ct_children)
    k = min(n_obs, n_ct)
    out = []
    for obs_sel in combinations(range(n_obs), k):
        for ct_sel in permutations(range(n_ct), k):
            out.append(list(zip(obs_sel, ct_sel)))
    return out


def _select_parent_slot(frame: ObservationFrame) -> AirwayObservation | None:
    hvc = [o for o in frame.observations if o.is_vis and o.has_vis_child]
    if not hvc:
        return None
    return min(hvc, key=lambda o: o.tip_distance)


def filter_step(state: FilterState, frame: ObservationFrame, skel: AirwaySkeleton,
                params: FilterParams) -> tuple[FilterState, Pose, dict[int, int], StepDiagnostics]:
    """One filter tick: bifurcation update when possible, else dead reckoning.

    Returns (new state, pose estimate, observation-slot assignment,
    diagnostics). The assignment maps observation slots to airway ids and is
    empty on dead-reckoning frames.
    """
    if frame.mode != MODE_BIFURCATION:
        raise ValueError(f"filter_step requires a bifurcation-mode frame, got {frame.mode!r}")
    idx = skel.index()
    if not idx.bifurcations:
        raise ValueError("skeleton has no bifurcations")

    parent_obs = _select_parent_slot(frame)
    child_obs = ([] if parent_obs is None else
                 [o for o in frame.observations if o.is_vis and o.slot != parent_obs.slot])
    if parent_obs is None or len(child_obs) < 2:
        return _dead_reckon(state, frame, skel, params)

    parent_dir_cam = parent_obs.dir_cam()
    parent_tip_cam = parent_obs.tip_cam
    z_hat = float(parent_tip_cam[2])
    i_t = frame.insertion_mm

    # stage 1: cheap prior over every bifurcation (log space, so an extreme
    # sigma cannot flush every candidate to a tie)
    log_ins = log_gaussian_pdf(i_t + z_hat - idx.bif_z, params.sigma_ins_mm)
    nums = _prob_airways_numerators(state, skel, params)
    log_air = np.log(nums / nums.sum())
    implied = _alignment_implied_positions(idx, parent_dir_cam, parent_tip_cam)
    if state.has_fix:
        diff = state.est_pose.position[None, :] - implied
        inv = np.linalg.inv(params.cov_x)
        det = float(np.linalg.det(params.cov_x))
        log_x = (-0.5 * np.einsum("ij,jk,ik->i", diff, inv, diff)
                 - 0.5 * math.log((2.0 * math.pi) ** 3 * det))
    else:
        log_x = np.zeros(len(idx.bifurcations))
    log_prior = log_ins + log_air + log_x
    top = np.argsort(log_prior)[::-1][:params.n_candidates]

    # stage 2: permute child assignments, resolve roll, score posteriors;
    # selection runs on log posteriors, reports carry the raw densities
    air = nums / nums.sum()
    obs_dirs_cam = np.array([o.dir_cam() for o in child_obs])
    best: CandidateReport | None = None
    best_log_post = -math.inf
    best_pose: Pose | None = None
    best_state_children: list[int] = []
    diagnostics = StepDiagnostics(mode="update", z_hat_bif=z_hat)

    for row in top:
        bif = idx.bifurcations[int(row)]
        cand_best: CandidateReport | None = None
        cand_log_post = -math.inf
        cand_pose: Pose | None = None
        cand_children: list[int] = []
        for matching in _child_matchings(len(child_obs), bif.child_airway_ids):
            obs_sel = np.array([m[0] for m in matching])
            ct_sel = np.array([m[1] for m in matching])
            try:
                pose, roll_deg, fitted = backout_pose(
                    bif.point, bif.parent_dir, bif.child_dirs[ct_sel],
                    parent_tip_cam, parent_dir_cam, obs_dirs_cam[obs_sel])
            except RollIndeterminateError:
                continue
            implied_roll = pose_roll(pose)
            log_fit = log_prob_fit(fitted, bif.child_dirs[ct_sel], params.sigma_fit_rad)
            if state.has_fix:
                log_x_ref = log_mvn_pdf(state.est_pose.position - pose.position,
                                        params.cov_x)
                log_roll = float(log_gaussian_pdf(
                    wrap_angle_deg(state.prev_roll_deg - implied_roll),
                    params.sigma_roll_deg))
            else:
                log_x_ref = 0.0
                log_roll = 0.0
            log_post = (log_fit + float(log_ins[row]) + float(np.log(air[row]))
                        + log_x_ref + log_roll)
            if cand_best is None or log_post > cand_log_post:
                assignment = {parent_obs.slot: bif.parent_airway_id}
                for oi, ci in matching:
                    assignment[child_obs[oi].slot] = bif.child_airway_ids[ci]
                d_fit = prob_fit(fitted, bif.child_dirs[ct_sel], params.sigma_fit_rad)
                d_ins = float(gaussian_pdf(i_t + z_hat - idx.bif_z[row],
                                           params.sigma_ins_mm))
                d_air = float(air[row])
                d_x = math.exp(log_x_ref) if state.has_fix else 1.0
                d_roll = math.exp(log_roll) if state.has_fix else 1.0
                cand_best = CandidateReport(
                    bif_parent_id=bif.parent_airway_id, prob_ins=d_ins,
                    prob_airways=d_air, prob_x=d_x, prob_roll=d_roll,
                    prob_fit=d_fit, posterior=d_fit * d_ins * d_air * d_x * d_roll,
                    roll_deg=roll_deg, assignment=assignment,
                    implied_position=pose.position)
                cand_log_post = log_post
                cand_pose = pose
                cand_children = [bif.child_airway_ids[ci] for _, ci in matching]
        if cand_best is None:
            continue
        diagnostics.candidates.append(cand_best)
        if best is None or cand_log_post > best_log_post:
            best = cand_best
            best_log_post = cand_log_post
            best_pose = cand_pose
            best_state_children = cand_children

    if best is None or best_pose is None:
        diagnostics.mode = "dead_reckon"
        diagnostics.note = "no candidate admitted a roll solution"
        return _dead_reckon(state, frame, skel, params)

    diagnostics.chosen_bif = best.bif_parent_id
    parent_airway = skel.airways[best.bif_parent_id]
    arc = float(np.clip((best_pose.position - parent_airway.proximal_point)
                        @ parent_airway.proximal_tangent, 0.0, parent_airway.length))
    new_state = FilterState(
        est_pose=best_pose.copy(),
        prev_visible={best.bif_parent_id, *best_state_children},
        prev_roll_deg=pose_roll(best_pose),
        prev_insertion_mm=frame.insertion_mm,
        current_airway=best.bif_parent_id,
        current_arc_mm=arc,
        has_fix=True,
    )
    return new_state, best_pose, dict(best.assignment), diagnostics


def _assigned_child(state: FilterState, skel: AirwaySkeleton, airway_id: int,
                    pz: np.ndarray) -> int | None:
    """Previously assigned child of an airway best aligned with the pointing axis."""
    assigned = [c for c in skel.airways[airway_id].children_ids if c in state.prev_visible]
    if not assigned:
        return None
    return max(assigned, key=lambda c: float(skel.airways[c].proximal_tangent @ pz))


def _point_on_airway(airway, arc: float) -> np.ndarray:
    arc = min(max(arc, 0.0), airway.length)
    return airway.proximal_point + arc * airway.distal_tangent


def _believed_heading(state: FilterState, skel: AirwaySkeleton, current: int, arc: float,
                      lookahead_mm: float, pz: np.ndarray) -> np.ndarray:
    """Heading toward the believed path's look-ahead point (lumen-following model)."""
    here = _point_on_airway(skel.airways[current], arc)
    aid, ahead = current, arc + lookahead_mm
    while ahead > skel.airways[aid].length:
        child = _assigned_child(state, skel, aid, pz)
        if child is None:
            ahead = skel.airways[aid].length   # clamp at the believed path's end
            break
        ahead -= skel.airways[aid].length
        aid = child
    target = _point_on_airway(skel.airways[aid], ahead)
    heading = target - here
    norm = float(np.linalg.norm(heading))
    if norm < 1e-9:
        return skel.airways[current].distal_tangent
    return heading / norm


def _dead_reckon(state: FilterState, frame: ObservationFrame, skel: AirwaySkeleton,
                 params: FilterParams) -> tuple[FilterState, Pose, dict[int, int], StepDiagnostics]:
    """Advance along the current airway by the insertion delta.

    Crossing the distal end hands off to a previously assigned child (the one
    best aligned with the current pointing axis); without a prior assignment
    the advance clamps at the end. Retraction clamps at the proximal end. The
    orientation follows the believed lumen with the same look-ahead blend a
    forward drive exhibits, keeping the previous roll about the new axis.
    """
    delta = frame.insertion_mm - state.prev_insertion_mm
    arc = state.current_arc_mm
    position = state.est_pose.position.copy()
    current = state.current_airway
    note = ""

    remaining = delta
    while True:
        airway = skel.airways[current]
        if remaining >= 0.0:
            step = min(remaining, airway.length - arc)
        else:
            step = max(remaining, -arc)
        position = position + step * airway.distal_tangent
        arc += step
        remaining -= step
        if remaining > 1e-12 and arc >= airway.length - 1e-12:
            child = _assigned_child(state, skel, current, state.est_pose.p_z)
            if child is None:
                note = "clamped at airway end (no prior child assignment)"
                break
            current = child
            arc = 0.0
        else:
            break

    heading = _believed_heading(state, skel, current, arc,
                                params.heading_lookahead_mm, state.est_pose.p_z)
    pose = make_pose(position, heading, state.prev_roll_deg)
    new_state = FilterState(est_pose=pose, prev_visible=set(state.prev_visible),
                            prev_roll_deg=state.prev_roll_deg,
                            prev_insertion_mm=frame.insertion_mm,
                            current_airway=current, current_arc_mm=arc,
                            has_fix=state.has_fix)
    diag = StepDiagnostics(mode="dead_reckon", note=note)
    return new_state, pose, {}, diag
