from __future__ import annotations

import math

import numpy as np
import pytest

from bronchotrack.geometry import is_visible
from bronchotrack.simulator import SimParams, _PathCurve, plan_path, simulate
from bronchotrack.skeleton import SkeletonError


def test_plan_path_root(y_skel):
    assert plan_path(y_skel, 0) == [0]


def test_plan_path_child_of_root(y_skel):
    assert plan_path(y_skel, 1) == [0, 1]


def test_plan_path_leaf_has_all_generations(lung5):
    leaf = max(aid for aid, a in lung5.airways.items() if not a.children_ids)
    path = plan_path(lung5, leaf)
    assert len(path) == 6
    assert [lung5.airways[a].generation for a in path] == list(range(6))
    for parent, child in zip(path, path[1:]):
        assert lung5.airways[child].parent_id == parent


def test_plan_path_unknown_target(y_skel):
    with pytest.raises(SkeletonError):
        plan_path(y_skel, 404)


def test_simulate_zero_jitter_straight(y_skel):
    params = SimParams(speed_mm_s=10.0, frame_rate_hz=10.0)
    frames = simulate(y_skel, [0], params)
    assert len(frames) == math.ceil(100.0 / 10.0 * 10.0)
    for f in frames:
        # exactly on the trachea centerline: x = y = 0
        assert abs(f.true_pose.position[0]) < 1e-12
        assert abs(f.true_pose.position[1]) < 1e-12
        assert abs(f.insertion_mm - 10.0 * f.t) < 1e-9
    ins = [f.insertion_mm for f in frames]
    assert all(b > a for a, b in zip(ins, ins[1:]))


def test_simulate_deterministic(lung5):
    params = SimParams(speed_mm_s=25.0, lateral_jitter_mm=0.5, heading_jitter_deg=2.0,
                       roll_jitter_deg=5.0, insertion_noise_mm=1.0, seed=42)
    path = plan_path(lung5, 62)
    a = simulate(lung5, path, params)
    b = simulate(lung5, path, params)
    assert len(a) == len(b)
    for fa, fb in zip(a, b):
        assert fa.t == fb.t
        assert np.array_equal(fa.true_pose.position, fb.true_pose.position)
        assert np.array_equal(fa.true_pose.rotation, fb.true_pose.rotation)
        assert fa.insertion_mm == fb.insertion_mm


def test_simulate_insertion_equals_arc_length(lung5):
    path = plan_path(lung5, 62)
    params = SimParams(speed_mm_s=20.0)
    frames = simulate(lung5, path, params)
    curve = _PathCurve(lung5, path)
    last = frames[-1]
    assert abs(last.insertion_mm - min(params.speed_mm_s * last.t, curve.length)) < 1e-6


def test_simulate_path_must_start_at_root(lung5):
    with pytest.raises(SkeletonError):
        simulate(lung5, [1, 3], SimParams())


def test_simulate_bifurcations_seen_before_crossing(lung5, camera):
    """Zero-jitter drive: every on-path bifurcation is visible in some frame
    before the camera passes it."""
    leaf = max(aid for aid, a in lung5.airways.items() if not a.children_ids)
    path = plan_path(lung5, leaf)
    frames = simulate(lung5, path, SimParams(speed_mm_s=25.0))
    curve = _PathCurve(lung5, path)

    arc = 0.0
    crossing_arc = {}
    for aid in path[:-1]:
        arc += lung5.airways[aid].length
        crossing_arc[aid] = arc

    for aid in path[:-1]:
        bif_point = lung5.airways[aid].distal_point
        seen = False
        for f in frames:
            if f.insertion_mm > crossing_arc[aid]:
                break
            if is_visible(f.true_pose, camera, bif_point[None, :]):
                seen = True
                break
        assert seen, f"bifurcation of airway {aid} never seen before crossing"


def test_sim_params_validation():
    with pytest.raises(ValueError):
        SimParams(speed_mm_s=0.0)
    with pytest.raises(ValueError):
        SimParams(lateral_jitter_mm=-1.0)


def test_lookahead_blends_heading_through_junction(y_skel):
    frames = simulate(y_skel, [0, 1], SimParams(speed_mm_s=10.0, frame_rate_hz=30.0))
    child_dir = y_skel.airways[1].proximal_tangent
    in_child = [f for f in frames if f.insertion_mm > 115.0]
    assert in_child
    for f in in_child:
        assert float(f.true_pose.p_z @ child_dir) > 1.0 - 1e-9
