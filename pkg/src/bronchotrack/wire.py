"""On-disk and on-socket encodings: poses, trajectory JSONL, estimate JSONL.

Rotations travel as row-major 9-tuples by default; a quaternion [w, x, y, z]
alternative is accepted on read. All JSONL lines are self-contained and
deterministic for identical inputs (no wall-clock fields), so fixed-seed
runs produce byte-identical logs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

import numpy as np

from .geometry import Pose
from .simulator import TrajectoryFrame

ROTATION_ROWMAJOR9 = "rowmajor9"
ROTATION_QUAT_WXYZ = "quat_wxyz"


def rotation_to_quat(rot: np.ndarray) -> list[float]:
    m = np.asarray(rot, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    else:
        i = int(np.argmax([m[0, 0], m[1, 1], m[2, 2]]))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = 2.0 * np.sqrt(1.0 + m[i, i] - m[j, j] - m[k, k])
        q = [0.0, 0.0, 0.0, 0.0]
        q[i + 1] = 0.25 * s
        q[0] = (m[k, j] - m[j, k]) / s
        q[j + 1] = (m[j, i] + m[i, j]) / s
        q[k + 1] = (m[k, i] + m[i, k]) / s
        w, x, y, z = q
    return [float(w), float(x), float(y), float(z)]


def quat_to_rotation(q: list[float]) -> np.ndarray:
    w, x, y, z = (float(v) for v in q)
    n = np.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def pose_to_dict(pose: Pose, rotation_format: str = ROTATION_ROWMAJOR9) -> dict:
    if rotation_format == ROTATION_ROWMAJOR9:
        rot = [float(v) for v in pose.rotation.reshape(-1)]
    elif rotation_format == ROTATION_QUAT_WXYZ:
        rot = rotation_to_quat(pose.rotation)
    else:
        raise ValueError(f"unknown rotation format {rotation_format!r}")
    return {"position": [float(v) for v in pose.position],
            "rotation": rot, "rotation_format": rotation_format}


def pose_from_dict(doc: dict) -> Pose:
    fmt = doc.get("rotation_format", ROTATION_ROWMAJOR9)
    rot = doc["rotation"]
    if fmt == ROTATION_ROWMAJOR9:
        rotation = np.asarray(rot, dtype=float).reshape(3, 3)
    elif fmt == ROTATION_QUAT_WXYZ:
        rotation = quat_to_rotation(rot)
    else:
        raise ValueError(f"unknown rotation format {fmt!r}")
    return Pose(np.asarray(doc["position"], dtype=float), rotation)


def trajectory_line(frame: TrajectoryFrame) -> str:
    doc = {"t": frame.t, **pose_to_dict(frame.true_pose),
           "insertion": frame.insertion_mm}
    return json.dumps(doc)


def write_trajectory(frames: Iterable[TrajectoryFrame], path: str | Path) -> None:
    with open(path, "w") as fh:
        for frame in frames:
            fh.write(trajectory_line(frame) + "\n")


def read_trajectory(path: str | Path) -> list[TrajectoryFrame]:
    frames = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        frames.append(TrajectoryFrame(t=float(doc["t"]), true_pose=pose_from_dict(doc),
                                      insertion_mm=float(doc["insertion"])))
    return frames


def estimate_line(frame_index: int, est_pose: Pose | None, assignment: dict[int, int],
                  bif_correct: bool, diagnostics: dict) -> str:
    doc = {
        "frame": frame_index,
        "est_position": None if est_pose is None else [float(v) for v in est_pose.position],
        "est_rotation": None if est_pose is None else [float(v) for v in est_pose.rotation.reshape(-1)],
        "rotation_format": ROTATION_ROWMAJOR9,
        "assignment": {str(k): int(v) for k, v in assignment.items()},
        "bif_correct": bool(bif_correct),
        "diagnostics": diagnostics,
    }
    return json.dumps(doc)


def write_estimates(lines: Iterable[str], path: str | Path) -> None:
    with open(path, "w") as fh:
        for line in lines:
            fh.write(line + "\n")
