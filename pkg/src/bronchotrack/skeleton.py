"""Airway-tree skeletons: centerline segments joined at bifurcations.

A lung is represented as a tree of airways. Each airway is a centerline
polyline in the CT frame (mm); its first point sits on the parent's distal
endpoint and its last point is either a terminal tip or a bifurcation where
two or more children attach. The trachea is generation 0, the main bronchi
generation 1.

Besides loading/saving the versioned JSON format, this module generates
synthetic lungs for simulation and answers the two tree queries the
localizer needs: path length from the trachea to a bifurcation, and the
hop distance between an airway and a bifurcation.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SKELETON_SCHEMA_VERSION = 1

# Synthetic centerlines are resampled at this spacing so point-based
# visibility tests stay within 0.5 mm of the continuous segment.
MAX_SAMPLE_SPACING_MM = 1.0


class SkeletonError(ValueError):
    """A skeleton file or structure violates the tree invariants."""


def _polyline_length(points: np.ndarray) -> float:
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise SkeletonError("zero-length direction vector")
    return v / n


@dataclass
class Airway:
    """One centerline segment of the airway tree."""

    id: int
    parent_id: int | None
    children_ids: list[int]
    generation: int
    centerline: np.ndarray  # (n, 3) mm, CT frame; n >= 2
    length: float = field(init=False)

    def __post_init__(self) -> None:
        self.centerline = np.asarray(self.centerline, dtype=float)
        if self.centerline.ndim != 2 or self.centerline.shape[1] != 3 or len(self.centerline) < 2:
            raise SkeletonError(f"airway {self.id}: centerline must be an (n>=2, 3) array")
        self.length = _polyline_length(self.centerline)

    @property
    def proximal_point(self) -> np.ndarray:
        return self.centerline[0]

    @property
    def distal_point(self) -> np.ndarray:
        return self.centerline[-1]

    @property
    def proximal_tangent(self) -> np.ndarray:
        return _unit(self.centerline[1] - self.centerline[0])

    @property
    def distal_tangent(self) -> np.ndarray:
        return _unit(self.centerline[-1] - self.centerline[-2])


@dataclass
class Bifurcation:
    """Junction at an airway's distal endpoint where >= 2 children attach.

    parent_dir is the parent tangent entering the junction; child_dirs are
    the children's tangents leaving it, in children_ids order.
    """

    parent_airway_id: int
    child_airway_ids: list[int]
    point: np.ndarray        # (3,) mm
    parent_dir: np.ndarray   # unit
    child_dirs: np.ndarray   # (k, 3), unit rows


@dataclass
class AirwaySkeleton:
    """Immutable-after-build airway tree keyed by airway id."""

    airways: dict[int, Airway]
    root_id: int
    name: str = "unnamed"

    def __post_init__(self) -> None:
        self._index: SkeletonIndex | None = None

    def airway(self, airway_id: int) -> Airway:
        try:
            return self.airways[airway_id]
        except KeyError:
            raise SkeletonError(f"unknown airway id {airway_id}") from None

    @property
    def root(self) -> Airway:
        return self.airways[self.root_id]

    def bifurcations(self) -> list[Bifurcation]:
        """All junctions, ordered by parent airway id."""
        out = []
        for aid in sorted(self.airways):
            a = self.airways[aid]
            if len(a.children_ids) >= 2:
                child_dirs = np.array([self.airways[c].proximal_tangent for c in a.children_ids])
                out.append(Bifurcation(aid, list(a.children_ids), a.distal_point.copy(),
                                       a.distal_tangent, child_dirs))
        return out

    def bifurcation_of(self, parent_airway_id: int) -> Bifurcation:
        a = self.airway(parent_airway_id)
        if len(a.children_ids) < 2:
            raise SkeletonError(f"airway {parent_airway_id} has no bifurcation")
        child_dirs = np.array([self.airways[c].proximal_tangent for c in a.children_ids])
        return Bifurcation(parent_airway_id, list(a.children_ids), a.distal_point.copy(),
                           a.distal_tangent, child_dirs)

    def validate(self) -> None:
        """Check all tree invariants; raise SkeletonError naming the offender."""
        roots = [a.id for a in self.airways.values() if a.parent_id is None]
        if len(roots) != 1:
            raise SkeletonError(f"expected exactly one root airway, found {sorted(roots)}")
        if roots[0] != self.root_id:
            raise SkeletonError(f"root_id {self.root_id} does not match parentless airway {roots[0]}")
        if self.root.generation != 0:
            raise SkeletonError(f"root airway {self.root_id} must have generation 0")

        for a in self.airways.values():
            if a.parent_id is not None:
                if a.parent_id not in self.airways:
                    raise SkeletonError(f"airway {a.id} references missing parent {a.parent_id}")
                parent = self.airways[a.parent_id]
                if a.id not in parent.children_ids:
                    raise SkeletonError(f"airway {a.id} missing from children of parent {a.parent_id}")
                if a.generation != parent.generation + 1:
                    raise SkeletonError(
                        f"airway {a.id}: generation {a.generation} != parent generation "
                        f"{parent.generation} + 1")
                gap = np.linalg.norm(a.proximal_point - parent.distal_point)
                if gap > 1e-6:
                    raise SkeletonError(
                        f"airway {a.id}: proximal point is {gap:.3g} mm from parent's distal point")
            for c in a.children_ids:
                if c not in self.airways:
                    raise SkeletonError(f"airway {a.id} lists missing child {c}")
                if self.airways[c].parent_id != a.id:
                    raise SkeletonError(f"airway {c} does not point back to parent {a.id}")
            arc = _polyline_length(a.centerline)
            if abs(arc - a.length) > 1e-9:
                raise SkeletonError(f"airway {a.id}: stored length inconsistent with centerline")

        # connectivity + acyclicity: a walk from the root must visit every airway once
        seen: set[int] = set()
        stack = [self.root_id]
        while stack:
            aid = stack.pop()
            if aid in seen:
                raise SkeletonError(f"cycle detected at airway {aid}")
            seen.add(aid)
            stack.extend(self.airways[aid].children_ids)
        if seen != set(self.airways):
            orphans = sorted(set(self.airways) - seen)
            raise SkeletonError(f"airways unreachable from root: {orphans}")

    def index(self) -> "SkeletonIndex":
        if self._index is None:
            self._index = SkeletonIndex(self)
        return self._index


class SkeletonIndex:
    """Precomputed flat arrays for the per-frame geometry kernels.

    Built lazily once per skeleton (skeletons are immutable after load), and
    shared read-only by concurrent evaluation workers.
    """

    def __init__(self, skel: AirwaySkeleton):
        self.skel = skel
        self.airway_ids = sorted(skel.airways)
        self.id_to_row = {aid: i for i, aid in enumerate(self.airway_ids)}

        pts = []
        owner = []
        for i, aid in enumerate(self.airway_ids):
            cl = skel.airways[aid].centerline
            pts.append(cl)
            owner.append(np.full(len(cl), i, dtype=np.intp))
        self.points = np.vstack(pts)                  # (N, 3)
        self.point_owner = np.concatenate(owner)      # (N,)
        self.n_airways = len(self.airway_ids)

        self.generations = np.array([skel.airways[a].generation for a in self.airway_ids])
        self.distal_points = np.array([skel.airways[a].distal_point for a in self.airway_ids])
        self.proximal_tangents = np.array([skel.airways[a].proximal_tangent for a in self.airway_ids])
        self.distal_tangents = np.array([skel.airways[a].distal_tangent for a in self.airway_ids])

        self.bifurcations = skel.bifurcations()
        self.bif_parent_ids = np.array([b.parent_airway_id for b in self.bifurcations], dtype=int)
        if self.bifurcations:
            self.bif_points = np.array([b.point for b in self.bifurcations])
            self.bif_parent_dirs = np.array([b.parent_dir for b in self.bifurcations])
        else:
            self.bif_points = np.zeros((0, 3))
            self.bif_parent_dirs = np.zeros((0, 3))
        self.bif_row_of_parent = {b.parent_airway_id: i for i, b in enumerate(self.bifurcations)}
        self.bif_z = np.array([path_length_from_trachea(skel, b) for b in self.bifurcations])

        self._edge_dist = self._all_pairs_edge_distance()
        # hop distance airway -> bifurcation: 1 + min over {parent} u children
        rows = []
        for b in self.bifurcations:
            cols = [self.id_to_row[b.parent_airway_id]] + [self.id_to_row[c] for c in b.child_airway_ids]
            rows.append(1 + self._edge_dist[:, cols].min(axis=1))
        self.airway_bif_hops = (np.stack(rows, axis=1) if rows
                                else np.zeros((self.n_airways, 0), dtype=int))

    def _all_pairs_edge_distance(self) -> np.ndarray:
        n = self.n_airways
        adj: list[list[int]] = [[] for _ in range(n)]
        for aid in self.airway_ids:
            a = self.skel.airways[aid]
            if a.parent_id is not None:
                i, j = self.id_to_row[aid], self.id_to_row[a.parent_id]
                adj[i].append(j)
                adj[j].append(i)
        dist = np.full((n, n), -1, dtype=int)
        for src in range(n):
            dist[src, src] = 0
            q = deque([src])
            while q:
                u = q.popleft()
                for v in adj[u]:
                    if dist[src, v] < 0:
                        dist[src, v] = dist[src, u] + 1
                        q.append(v)
        return dist

    def edge_distance(self, airway_a: int, airway_b: int) -> int:
        return int(self._edge_dist[self.id_to_row[airway_a], self.id_to_row[airway_b]])

    def gen_weight_matrix(self, gen_weights: dict[int, float], floor: float) -> np.ndarray:
        """(n_airways, n_bifurcations) prior-weight table from hop distances."""
        w = np.full(self.airway_bif_hops.shape, floor, dtype=float)
        for d, val in gen_weights.items():
            w[self.airway_bif_hops == d] = val
        return w

    def nearest_airway(self, point: np.ndarray) -> int:
        """Airway id whose centerline sample lies closest to the point."""
        d2 = ((self.points - point) ** 2).sum(axis=1)
        return self.airway_ids[int(self.point_owner[int(np.argmin(d2))])]


# ---------------------------------------------------------------------------
# Tree queries
# ---------------------------------------------------------------------------

def path_length_from_trachea(skel: AirwaySkeleton, bif: Bifurcation) -> float:
    """Centerline arc length from the trachea's proximal point to the junction."""
    aid = bif.parent_airway_id
    if aid not in skel.airways or len(skel.airways[aid].children_ids) < 2:
        raise SkeletonError(f"unknown bifurcation (parent airway {aid})")
    total = 0.0
    cur: int | None = aid
    while cur is not None:
        a = skel.airways[cur]
        total += a.length
        cur = a.parent_id
    return total


def generation_distance(skel: AirwaySkeleton, airway_id: int, bif: Bifurcation) -> int:
    """Hop count between an airway and a bifurcation.

    The junction is treated as a virtual node inserted between the parent and
    its children, so the bifurcation's own parent and each direct child are
    both at distance 1.
    """
    if airway_id not in skel.airways:
        raise SkeletonError(f"unknown airway id {airway_id}")
    idx = skel.index()
    if bif.parent_airway_id not in idx.bif_row_of_parent:
        raise SkeletonError(f"unknown bifurcation (parent airway {bif.parent_airway_id})")
    return int(idx.airway_bif_hops[idx.id_to_row[airway_id],
                                   idx.bif_row_of_parent[bif.parent_airway_id]])


# ---------------------------------------------------------------------------
# JSON format
# ---------------------------------------------------------------------------

def skeleton_to_dict(skel: AirwaySkeleton) -> dict:
    return {
        "version": SKELETON_SCHEMA_VERSION,
        "name": skel.name,
        "airways": [
            {
                "id": a.id,
                "parent_id": a.parent_id,
                "children": list(a.children_ids),
                "generation": a.generation,
                "centerline": a.centerline.tolist(),
            }
            for a in (skel.airways[aid] for aid in sorted(skel.airways))
        ],
    }


def skeleton_from_dict(doc: dict) -> AirwaySkeleton:
    if not isinstance(doc, dict) or "airways" not in doc:
        raise SkeletonError("skeleton document missing 'airways'")
    version = doc.get("version")
    if version != SKELETON_SCHEMA_VERSION:
        raise SkeletonError(f"unsupported skeleton version {version!r}")
    airways: dict[int, Airway] = {}
    for entry in doc["airways"]:
        try:
            aw = Airway(
                id=int(entry["id"]),
                parent_id=None if entry.get("parent_id") is None else int(entry["parent_id"]),
                children_ids=[int(c) for c in entry.get("children", [])],
                generation=int(entry["generation"]),
                centerline=np.asarray(entry["centerline"], dtype=float),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SkeletonError(f"malformed airway entry {entry.get('id', '?')}: {exc}") from exc
        if aw.id in airways:
            raise SkeletonError(f"duplicate airway id {aw.id}")
        airways[aw.id] = aw
    roots = [a.id for a in airways.values() if a.parent_id is None]
    if len(roots) != 1:
        raise SkeletonError(f"expected exactly one root airway, found {sorted(roots)}")
    skel = AirwaySkeleton(airways=airways, root_id=roots[0], name=str(doc.get("name", "unnamed")))
    skel.validate()
    return skel


def load_skeleton(path: str | Path) -> AirwaySkeleton:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SkeletonError(f"cannot parse skeleton file {path}: {exc}") from exc
    return skeleton_from_dict(doc)


def save_skeleton(skel: AirwaySkeleton, path: str | Path) -> None:
    Path(path).write_text(json.dumps(skeleton_to_dict(skel)) + "\n")


# ---------------------------------------------------------------------------
# Synthetic lungs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BranchingParams:
    """Geometry knobs for synthetic lungs (straight-segment binary trees)."""

    trachea_length_mm: float = 100.0
    length_decay: float = 0.75
    length_jitter: float = 0.10           # +- fraction, seeded
    half_angle_min_deg: float = 25.0
    half_angle_max_deg: float = 40.0
    plane_rotation_deg: float = 80.0      # bifurcation-plane twist per generation
    sample_spacing_mm: float = MAX_SAMPLE_SPACING_MM


def _rotation_about(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + math.sin(angle_rad) * k + (1.0 - math.cos(angle_rad)) * (k @ k)


def _sample_segment(start: np.ndarray, direction: np.ndarray, length: float,
                    spacing: float) -> np.ndarray:
    n = max(2, int(math.ceil(length / spacing)) + 1)
    ts = np.linspace(0.0, length, n)
    return start[None, :] + ts[:, None] * direction[None, :]


def synth_lung(generations: int, seed: int,
               params: BranchingParams = BranchingParams()) -> AirwaySkeleton:
    """Deterministic lung-like binary tree down to the given generation.

    The trachea (generation 0) grows along +z from the origin; every non-leaf
    airway bifurcates into two children whose half-angles are drawn from the
    configured range and whose bifurcation plane twists by plane_rotation_deg
    each generation. Same seed, same bytes.
    """
    if not 1 <= generations <= 8:
        raise ValueError(f"generations must be in [1, 8], got {generations}")
    rng = np.random.default_rng(seed)

    airways: dict[int, Airway] = {}
    next_id = 0

    def add_airway(parent_id: int | None, generation: int, start: np.ndarray,
                   direction: np.ndarray, length: float) -> int:
        nonlocal next_id
        aid = next_id
        next_id += 1
        cl = _sample_segment(start, direction, length, params.sample_spacing_mm)
        airways[aid] = Airway(id=aid, parent_id=parent_id, children_ids=[],
                              generation=generation, centerline=cl)
        if parent_id is not None:
            airways[parent_id].children_ids.append(aid)
        return aid

    root_dir = np.array([0.0, 0.0, 1.0])
    root_id = add_airway(None, 0, np.zeros(3), root_dir, params.trachea_length_mm)

    # (airway id, direction, bifurcation-plane normal)
    frontier = [(root_id, root_dir, np.array([0.0, 1.0, 0.0]))]
    for gen in range(1, generations + 1):
        base_len = params.trachea_length_mm * params.length_decay ** gen
        new_frontier = []
        for aid, direction, normal in frontier:
            start = airways[aid].distal_point
            for sign in (+1.0, -1.0):
                half = math.radians(rng.uniform(params.half_angle_min_deg,
                                                params.half_angle_max_deg))
                child_dir = _rotation_about(normal, sign * half) @ direction
                child_dir /= np.linalg.norm(child_dir)
                length = base_len * (1.0 + params.length_jitter * rng.uniform(-1.0, 1.0))
                cid = add_airway(aid, gen, start, child_dir, length)
                child_normal = _rotation_about(child_dir, math.radians(params.plane_rotation_deg)) @ normal
                child_normal -= child_dir * (child_normal @ child_dir)  # keep normal orthogonal
                child_normal /= np.linalg.norm(child_normal)
                new_frontier.append((cid, child_dir, child_normal))
        frontier = new_frontier

    skel = AirwaySkeleton(airways=airways, root_id=root_id,
                          name=f"synth-g{generations}-s{seed}")
    skel.validate()
    return skel
