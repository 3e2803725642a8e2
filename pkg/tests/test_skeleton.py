from __future__ import annotations

import json
from collections import deque

import numpy as np
import pytest

from bronchotrack.skeleton import (Airway, AirwaySkeleton, SkeletonError, generation_distance,
                                   load_skeleton, path_length_from_trachea, save_skeleton,
                                   skeleton_from_dict, skeleton_to_dict, synth_lung)

from conftest import make_y_skeleton


def test_y_fixture_has_one_bifurcation(y_skel):
    bifs = y_skel.bifurcations()
    assert len(bifs) == 1
    assert bifs[0].parent_airway_id == 0
    assert sorted(bifs[0].child_airway_ids) == [1, 2]
    assert np.allclose(bifs[0].point, [0.0, 0.0, 100.0])


def test_airway_length_matches_polyline(y_skel):
    for a in y_skel.airways.values():
        arc = np.linalg.norm(np.diff(a.centerline, axis=0), axis=1).sum()
        assert abs(arc - a.length) < 1e-9


def test_generation_mismatch_rejected_naming_child():
    doc = skeleton_to_dict(make_y_skeleton())
    for entry in doc["airways"]:
        if entry["id"] == 1:
            entry["generation"] = 0
    with pytest.raises(SkeletonError, match="airway 1"):
        skeleton_from_dict(doc)


def test_orphan_rejected():
    doc = skeleton_to_dict(make_y_skeleton())
    doc["airways"].append({"id": 9, "parent_id": 7, "children": [], "generation": 1,
                           "centerline": [[0, 0, 0], [0, 0, 1]]})
    with pytest.raises(SkeletonError, match="9"):
        skeleton_from_dict(doc)


def test_cycle_rejected():
    doc = skeleton_to_dict(make_y_skeleton())
    for entry in doc["airways"]:
        if entry["id"] == 0:
            entry["parent_id"] = 1   # 0 <-> 1 cycle, and no root remains
    with pytest.raises(SkeletonError):
        skeleton_from_dict(doc)


def test_disconnected_proximal_point_rejected():
    doc = skeleton_to_dict(make_y_skeleton())
    for entry in doc["airways"]:
        if entry["id"] == 2:
            entry["centerline"] = [[5.0, 5.0, 5.0], [5.0, 5.0, 45.0]]
    with pytest.raises(SkeletonError, match="airway 2"):
        skeleton_from_dict(doc)


def test_parse_error_is_descriptive(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(SkeletonError, match="cannot parse"):
        load_skeleton(p)


def test_save_load_round_trip_bit_for_bit(tmp_path, lung5):
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    save_skeleton(lung5, p1)
    reloaded = load_skeleton(p1)
    save_skeleton(reloaded, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert set(reloaded.airways) == set(lung5.airways)
    for aid in lung5.airways:
        assert np.array_equal(reloaded.airways[aid].centerline, lung5.airways[aid].centerline)


def test_synth_lung_structure_forced():
    skel = synth_lung(1, seed=0)
    assert len(skel.airways) == 3
    assert len(skel.bifurcations()) == 1
    assert skel.root.generation == 0
    assert all(skel.airways[c].generation == 1 for c in skel.root.children_ids)


def test_synth_lung_full_binary_count():
    # full binary tree down to generation 5: 2^6 - 1 airways
    skel = synth_lung(5, seed=7)
    assert len(skel.airways) == 63
    assert len(skel.bifurcations()) == 31


def test_synth_lung_deterministic():
    a = json.dumps(skeleton_to_dict(synth_lung(4, seed=11)))
    b = json.dumps(skeleton_to_dict(synth_lung(4, seed=11)))
    assert a == b
    c = json.dumps(skeleton_to_dict(synth_lung(4, seed=12)))
    assert a != c


def test_synth_lung_generations_out_of_range():
    with pytest.raises(ValueError):
        synth_lung(0, seed=0)
    with pytest.raises(ValueError):
        synth_lung(9, seed=0)


def test_synth_lung_sampling_spacing(lung5):
    for a in lung5.airways.values():
        steps = np.linalg.norm(np.diff(a.centerline, axis=0), axis=1)
        assert steps.max() <= 1.0 + 1e-9


def test_path_length_single_segment(y_skel):
    bif = y_skel.bifurcations()[0]
    assert abs(path_length_from_trachea(y_skel, bif) - 100.0) < 1e-9


def test_path_length_additivity():
    skel = make_y_skeleton(trachea_len=100.0, child_len=40.0)
    # extend child 1 with two grandchildren to create a 2nd-generation bifurcation
    doc = skeleton_to_dict(skel)
    a1 = next(e for e in doc["airways"] if e["id"] == 1)
    tip = np.array(a1["centerline"][-1])
    d = tip - np.array(a1["centerline"][0])
    d = d / np.linalg.norm(d)
    for gid, sign in ((3, 1.0), (4, -1.0)):
        side = np.cross(d, [0.0, 1.0, 0.0])
        gdir = d + 0.6 * sign * side
        gdir /= np.linalg.norm(gdir)
        pts = [tip.tolist(), (tip + 10.0 * gdir).tolist()]
        doc["airways"].append({"id": gid, "parent_id": 1, "children": [],
                               "generation": 2, "centerline": pts})
    a1["children"] = [3, 4]
    skel2 = skeleton_from_dict(doc)
    bif = skel2.bifurcation_of(1)
    assert abs(path_length_from_trachea(skel2, bif) - 140.0) < 1e-9


def test_path_length_matches_ancestor_walk(lung5):
    # independent oracle: explicit walk up the ancestor chain
    deepest = max(lung5.bifurcations(),
                  key=lambda b: lung5.airways[b.parent_airway_id].generation)
    expected = 0.0
    cur = deepest.parent_airway_id
    while cur is not None:
        a = lung5.airways[cur]
        expected += np.linalg.norm(np.diff(a.centerline, axis=0), axis=1).sum()
        cur = a.parent_id
    assert abs(path_length_from_trachea(lung5, deepest) - expected) < 1e-9


def test_path_length_unknown_bifurcation(y_skel, lung5):
    foreign = lung5.bifurcation_of(2)
    with pytest.raises(SkeletonError):
        path_length_from_trachea(y_skel, foreign)


def test_path_length_increasing_along_chains(lung5):
    for bif in lung5.bifurcations():
        parent = lung5.airways[bif.parent_airway_id]
        if parent.parent_id is not None and len(lung5.airways[parent.parent_id].children_ids) >= 2:
            upstream = lung5.bifurcation_of(parent.parent_id)
            assert (path_length_from_trachea(lung5, bif)
                    > path_length_from_trachea(lung5, upstream))


# ---------------------------------------------------------------------------
# generation_distance: BFS oracle on the tree with a virtual junction node
# ---------------------------------------------------------------------------

def _bfs_hops_oracle(skel, airway_id: int, bif) -> int:
    """Edge distance from the airway to a junction node spliced between the
    bifurcation's parent and its children."""
    adj: dict[object, list[object]] = {aid: [] for aid in skel.airways}
    for a in skel.airways.values():
        if a.parent_id is not None:
            adj[a.id].append(a.parent_id)
            adj[a.parent_id].append(a.id)
    junction = ("bif", bif.parent_airway_id)
    adj[junction] = [bif.parent_airway_id, *bif.child_airway_ids]
    for neighbor in adj[junction]:
        adj[neighbor].append(junction)
    dist = {airway_id: 0}
    q = deque([airway_id])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist[junction]


def test_generation_distance_anchors(lung4):
    bif = lung4.bifurcation_of(0)
    assert generation_distance(lung4, 0, bif) == 1                 # the parent itself
    child = bif.child_airway_ids[0]
    assert generation_distance(lung4, child, bif) == 1             # a direct child
    grandchild = lung4.airways[child].children_ids[0]
    assert generation_distance(lung4, grandchild, bif) == 2        # grandchild of parent


def test_generation_distance_matches_bfs_oracle(lung4):
    rng = np.random.default_rng(5)
    bifs = lung4.bifurcations()
    ids = sorted(lung4.airways)
    for _ in range(200):
        aid = ids[rng.integers(0, len(ids))]
        bif = bifs[rng.integers(0, len(bifs))]
        assert generation_distance(lung4, aid, bif) == _bfs_hops_oracle(lung4, aid, bif)


def test_generation_distance_unknown_ids(lung4, y_skel):
    bif = lung4.bifurcation_of(0)
    with pytest.raises(SkeletonError):
        generation_distance(lung4, 999, bif)
    with pytest.raises(SkeletonError):
        generation_distance(y_skel, 0, lung4.bifurcation_of(2))


def test_generation_distance_triangle_inequality(lung4):
    # |d(a, b) - d(a', b)| <= edge distance between a and a' for all pairs
    idx = lung4.index()
    bifs = lung4.bifurcations()
    ids = sorted(lung4.airways)
    for bif in bifs[:5]:
        d = {aid: generation_distance(lung4, aid, bif) for aid in ids}
        for a in ids:
            for b in ids:
                assert abs(d[a] - d[b]) <= idx.edge_distance(a, b)


def test_tree_properties(lung5):
    n_edges = sum(1 for a in lung5.airways.values() if a.parent_id is not None)
    assert len(lung5.airways) == n_edges + 1
    seen = []
    stack = [lung5.root_id]
    while stack:
        aid = stack.pop()
        seen.append(aid)
        stack.extend(lung5.airways[aid].children_ids)
    assert sorted(seen) == sorted(lung5.airways)
    assert len(seen) == len(set(seen))
