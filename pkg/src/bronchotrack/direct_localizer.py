"""Stateless localizer for observations that arrive already classified.

Each direct-mode frame labels airways with skeleton ids; no filter and no
state, so a bad frame cannot poison the next one. A pose is backed out only
when a flagged parent's claimed children are consistent with the skeleton.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, RollIndeterminateError, backout_pose
from .perception import MODE_DIRECT, ObservationFrame
from .skeleton import AirwaySkeleton


@dataclass
class DirectDiagnostics:
    visible_ids: list[int] = field(default_factory=list)
    ignored_ids: list[int] = field(default_factory=list)      # ids not in the skeleton
    inconsistent_ids: list[int] = field(default_factory=list)  # flagged parents that failed the check
    chosen_parent: int | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "visible_ids": self.visible_ids,
            "ignored_ids": self.ignored_ids,
            "inconsistent_ids": self.inconsistent_ids,
            "chosen_parent": self.chosen_parent,
            "note": self.note,
        }


def direct_step(frame: ObservationFrame,
                skel: AirwaySkeleton) -> tuple[Pose | None, dict[int, int], DirectDiagnostics]:
    """Back out a pose from a direct-mode frame, or report why not.

    A parent qualifies when it is visible, its bifurcation is flagged
    visible, and at least two of its skeleton children are also marked
    visible in the frame. Among several qualifying parents the nearest
    observed tip wins. The returned assignment maps the airway ids used in
    the back-out to themselves; with no estimate it carries the raw
    visibility classification.
    """
    if frame.mode != MODE_DIRECT:
        raise ValueError(f"direct_step requires a direct-mode frame, got {frame.mode!r}")
    diag = DirectDiagnostics()

    rows = {}
    for obs in frame.observations:
        if obs.slot not in skel.airways:
            if obs.is_vis:
                diag.ignored_ids.append(obs.slot)
            continue
        rows[obs.slot] = obs
    visible = {aid: o for aid, o in rows.items() if o.is_vis}
    diag.visible_ids = sorted(visible)

    candidates = []
    for aid, obs in visible.items():
        if not obs.has_vis_child:
            continue
        children = [c for c in skel.airways[aid].children_ids if c in visible]
        if len(children) >= 2:
            candidates.append((obs.tip_distance, aid, children))
        else:
            diag.inconsistent_ids.append(aid)
    if not candidates:
        diag.note = "no skeleton-consistent bifurcation in frame"
        return None, {aid: aid for aid in diag.visible_ids}, diag

    _, parent_id, child_ids = min(candidates)
    bif = skel.bifurcation_of(parent_id)
    ct_rows = [bif.child_airway_ids.index(c) for c in child_ids]
    obs_dirs = np.array([visible[c].dir_cam() for c in child_ids])
    try:
        pose, _roll, _fitted = backout_pose(
            bif.point, bif.parent_dir, bif.child_dirs[ct_rows],
            visible[parent_id].tip_cam, visible[parent_id].dir_cam(), obs_dirs)
    except RollIndeterminateError:
        diag.note = "roll indeterminate for the consistent bifurcation"
        return None, {aid: aid for aid in diag.visible_ids}, diag

    diag.chosen_parent = parent_id
    assignment = {parent_id: parent_id}
    assignment.update({c: c for c in child_ids})
    return pose, assignment, diag
