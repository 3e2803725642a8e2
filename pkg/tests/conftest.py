from __future__ import annotations

import numpy as np
import pytest

from bronchotrack.geometry import CameraModel
from bronchotrack.skeleton import Airway, AirwaySkeleton, synth_lung


def make_y_skeleton(trachea_len: float = 100.0, child_len: float = 40.0,
                    half_angle_deg: float = 30.0) -> AirwaySkeleton:
    """Minimal valid tree: trachea along +z plus two bronchi in the x-z plane."""
    import math

    th = math.radians(half_angle_deg)
    top = np.array([0.0, 0.0, trachea_len])
    dirs = {
        1: np.array([math.sin(th), 0.0, math.cos(th)]),
        2: np.array([-math.sin(th), 0.0, math.cos(th)]),
    }

    def seg(start, direction, length, n=None):
        n = n or max(2, int(np.ceil(length)) + 1)
        ts = np.linspace(0.0, length, n)
        return start[None, :] + ts[:, None] * direction[None, :]

    airways = {
        0: Airway(id=0, parent_id=None, children_ids=[1, 2], generation=0,
                  centerline=seg(np.zeros(3), np.array([0.0, 0.0, 1.0]), trachea_len)),
        1: Airway(id=1, parent_id=0, children_ids=[], generation=1,
                  centerline=seg(top, dirs[1], child_len)),
        2: Airway(id=2, parent_id=0, children_ids=[], generation=1,
                  centerline=seg(top, dirs[2], child_len)),
    }
    skel = AirwaySkeleton(airways=airways, root_id=0, name="y-fixture")
    skel.validate()
    return skel


@pytest.fixture(scope="session")
def y_skel() -> AirwaySkeleton:
    return make_y_skeleton()


@pytest.fixture(scope="session")
def lung4() -> AirwaySkeleton:
    return synth_lung(4, seed=3)


@pytest.fixture(scope="session")
def lung5() -> AirwaySkeleton:
    return synth_lung(5, seed=7)


@pytest.fixture(scope="session")
def camera() -> CameraModel:
    return CameraModel()


def random_interior_pose(skel, rng: np.random.Generator):
    """A pose near a random centerline point with a random forward-ish frame."""
    from bronchotrack.geometry import make_pose

    idx = skel.index()
    pt = idx.points[rng.integers(0, len(idx.points))]
    pos = pt + rng.normal(0.0, 2.0, 3)
    d = rng.normal(0.0, 1.0, 3)
    d /= np.linalg.norm(d)
    return make_pose(pos, d, rng.uniform(-180.0, 180.0))
