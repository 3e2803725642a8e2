"""Interactive driving sessions over WebSocket.

Tick-based protocol: the server advances one simulation step per client
steering message, so a slow client can never drop localizer frames. Steering
comes either as articulation deltas (pitch/yaw/roll degrees plus insertion
mm, free-flight motion model) or as an explicit trajectory frame (scripted
replay). Sessions are isolated; state survives a socket drop so a client can
reconnect by session id and resume at the next tick.
"""

from __future__ import annotations

import json
import math
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .config import RunConfig, config_from_dict
from .geometry import Pose, make_pose, rotation_about_axis, tracking_errors
from .metrics import f1_by_generation
from .runner import SequenceEngine, _sequence_noise_stream
from .simulator import TrajectoryFrame
from .skeleton import skeleton_to_dict
from .wire import pose_from_dict, pose_to_dict, trajectory_line

SCHEMA_VERSION = "1"
MAX_SESSIONS = 16


@dataclass
class Session:
    session_id: str
    config: RunConfig
    engine: SequenceEngine
    true_pose: Pose
    insertion_mm: float = 0.0
    tick: int = 0
    trajectory_lines: list[str] = field(default_factory=list)

    @property
    def dt(self) -> float:
        return 1.0 / self.config.sim.frame_rate_hz

    def steer(self, pitch_deg: float, yaw_deg: float, roll_deg: float,
              insert_mm: float) -> dict:
        """Articulate about the camera axes, then advance along the new axis."""
        rot = self.true_pose.rotation
        local = np.eye(3)
        if pitch_deg:
            local = local @ rotation_about_axis(np.array([1.0, 0.0, 0.0]), math.radians(pitch_deg))
        if yaw_deg:
            local = local @ rotation_about_axis(np.array([0.0, 1.0, 0.0]), math.radians(yaw_deg))
        if roll_deg:
            local = local @ rotation_about_axis(np.array([0.0, 0.0, 1.0]), math.radians(roll_deg))
        rot = rot @ local
        pos = self.true_pose.position + insert_mm * rot[:, 2]
        self.true_pose = Pose(pos, rot)
        self.insertion_mm += insert_mm
        return self.advance(self.true_pose, self.insertion_mm)

    def advance(self, pose: Pose, insertion_mm: float) -> dict:
        frame = TrajectoryFrame(t=self.tick * self.dt, true_pose=pose,
                                insertion_mm=insertion_mm)
        self.true_pose = pose
        self.insertion_mm = insertion_mm
        self.trajectory_lines.append(trajectory_line(frame))
        outcome = self.engine.step(frame)
        self.tick += 1
        return self._state_message(frame, outcome)

    def _state_message(self, frame: TrajectoryFrame, outcome) -> dict:
        record = outcome.record
        err = (tracking_errors(frame.true_pose, outcome.est_pose)
               if outcome.est_pose is not None else None)
        gen_scores = f1_by_generation(self.engine.records)
        return {
            "type": "state",
            "tick": self.tick - 1,
            "t": frame.t,
            "insertion": frame.insertion_mm,
            "true_pose": pose_to_dict(frame.true_pose),
            "est_pose": None if outcome.est_pose is None else pose_to_dict(outcome.est_pose),
            "true_visible": sorted(record.true_visible),
            "est_visible": sorted(record.est_visible),
            "assignment": {str(k): int(v) for k, v in outcome.assignment.items()},
            "bif_correct": outcome.bif_correct,
            "e_p": None if err is None else err.e_p,
            "e_d": None if err is None else err.e_d,
            "e_r": None if err is None else err.e_r,
            "f1_by_generation": {str(g): s.f1 for g, s in gen_scores.items()},
            "diagnostics": outcome.diagnostics,
        }


def _error(message: str) -> dict:
    return {"type": "error", "message": message}


def _open_session(sessions: dict[str, Session], msg: dict) -> tuple[Session | None, dict]:
    if msg.get("schema_version") != SCHEMA_VERSION:
        return None, _error(f"schema_version mismatch: server speaks {SCHEMA_VERSION!r}")
    session_id = msg.get("session_id")
    if session_id and session_id in sessions:
        session = sessions[session_id]
        return session, {"type": "opened", "session_id": session_id,
                         "schema_version": SCHEMA_VERSION, "resumed": True,
                         "tick": session.tick,
                         "skeleton": skeleton_to_dict(session.engine.skel)}
    if len(sessions) >= MAX_SESSIONS:
        return None, _error(f"session limit reached ({MAX_SESSIONS})")
    try:
        cfg = config_from_dict(msg.get("config", {}))
        skel = cfg.load_skeleton()
    except Exception as exc:
        return None, _error(f"invalid session config: {exc}")
    engine = SequenceEngine(skel, cfg.algorithm, cfg.camera, cfg.noise, cfg.filter_params,
                            noise_stream=_sequence_noise_stream(cfg.noise, 0))
    root = skel.root
    start = make_pose(root.proximal_point, root.proximal_tangent, 0.0)
    session_id = session_id or uuid.uuid4().hex
    session = Session(session_id=session_id, config=cfg, engine=engine, true_pose=start)
    sessions[session_id] = session
    return session, {"type": "opened", "session_id": session_id,
                     "schema_version": SCHEMA_VERSION, "resumed": False, "tick": 0,
                     "skeleton": skeleton_to_dict(skel)}


def create_app() -> FastAPI:
    app = FastAPI(title="bronchotrack session service")
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "schema_version": SCHEMA_VERSION,
                "sessions": len(sessions)}

    @app.websocket("/session")
    async def session_socket(ws: WebSocket) -> None:
        await ws.accept()
        session: Session | None = None
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict) or "type" not in msg:
                        raise ValueError("message must be an object with a 'type'")
                except (json.JSONDecodeError, ValueError) as exc:
                    await ws.send_json(_error(f"malformed message: {exc}"))
                    continue

                kind = msg["type"]
                if kind == "open":
                    session, reply = _open_session(sessions, msg)
                    await ws.send_json(reply)
                elif session is None:
                    await ws.send_json(_error("no open session; send an 'open' message first"))
                elif kind == "steer":
                    try:
                        reply = session.steer(float(msg.get("pitch_deg", 0.0)),
                                              float(msg.get("yaw_deg", 0.0)),
                                              float(msg.get("roll_deg", 0.0)),
                                              float(msg.get("insert_mm", 0.0)))
                    except (TypeError, ValueError) as exc:
                        reply = _error(f"bad steering message: {exc}")
                    await ws.send_json(reply)
                elif kind == "frame":
                    try:
                        pose = pose_from_dict(msg)
                        reply = session.advance(pose, float(msg["insertion"]))
                    except (KeyError, TypeError, ValueError) as exc:
                        reply = _error(f"bad frame message: {exc}")
                    await ws.send_json(reply)
                elif kind == "get_log":
                    await ws.send_json({"type": "log",
                                        "trajectory": list(session.trajectory_lines),
                                        "estimates": list(session.engine.estimate_lines)})
                elif kind == "close":
                    sessions.pop(session.session_id, None)
                    await ws.send_json({"type": "closed", "session_id": session.session_id})
                    session = None
                else:
                    await ws.send_json(_error(f"unknown message type {kind!r}"))
        except WebSocketDisconnect:
            pass  # session state is kept for reconnect

    return app


def serve(port: int, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port)
