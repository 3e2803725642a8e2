"""Batch execution: simulate -> observe -> corrupt -> localize -> metrics.

SequenceEngine is the single per-frame pipeline shared by batch runs and
interactive sessions, so both paths produce identical estimate logs for
identical input frames. cmd_run materializes trajectories, logs and metric
files; cmd_sweep repeats a run over a filter-parameter grid.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bifurcation_filter import FilterParams, FilterState, filter_step
from .config import ALGO_BIFURCATION, ALGO_DIRECT, RunConfig, config_to_dict
from .direct_localizer import direct_step
from .geometry import CameraModel, Pose, visible_airways
from .metrics import (AggregateResult, FrameRecord, SequenceResult, aggregate,
                      sequence_result)
from .perception import (MODE_BIFURCATION, MODE_DIRECT, NoiseModel, ObservationFrame,
                         corrupt, observe_truth)
from .simulator import SimParams, TrajectoryFrame, plan_path, simulate
from .skeleton import AirwaySkeleton
from .wire import estimate_line, read_trajectory, write_trajectory

GENERATION_COLUMNS = (1, 2, 3, 4, 5)   # metrics CSV reports these bins


@dataclass
class StepOutcome:
    frame_index: int
    est_pose: Pose | None
    assignment: dict[int, int]
    bif_correct: bool
    record: FrameRecord
    estimate_json: str
    diagnostics: dict
    kernel_seconds: float


class SequenceEngine:
    """Stateful per-frame localization pipeline for one tracked sequence."""

    def __init__(self, skel: AirwaySkeleton, algorithm: str, camera: CameraModel,
                 noise: NoiseModel, filter_params: FilterParams,
                 noise_stream: np.random.Generator | None = None):
        self.skel = skel
        self.algorithm = algorithm
        self.camera = camera
        self.noise = noise
        self.filter_params = filter_params
        self.rng = noise_stream if noise_stream is not None else np.random.default_rng(noise.seed)
        self.state = FilterState.initial(skel) if algorithm == ALGO_BIFURCATION else None
        self.last_estimate: Pose | None = None
        self.records: list[FrameRecord] = []
        self.estimate_lines: list[str] = []
        self.kernel_seconds = 0.0
        self.frame_index = 0

    def step(self, frame: TrajectoryFrame) -> StepOutcome:
        mode = MODE_BIFURCATION if self.algorithm == ALGO_BIFURCATION else MODE_DIRECT

        t0 = time.perf_counter()
        truth = observe_truth(frame.true_pose, self.camera, self.skel, mode=mode,
                              t=frame.t, insertion_mm=frame.insertion_mm)
        obs = corrupt(truth, self.noise, rng=self.rng, camera=self.camera, skel=self.skel)
        if self.algorithm == ALGO_BIFURCATION:
            self.state, est_pose, assignment, diag = filter_step(
                self.state, obs, self.skel, self.filter_params)
            diagnostics = diag.to_dict()
            updated = diag.mode == "update"
        else:
            est_pose, assignment, diag = direct_step(obs, self.skel)
            diagnostics = diag.to_dict()
            updated = est_pose is not None
        elapsed = time.perf_counter() - t0
        self.kernel_seconds += elapsed

        bif_correct = updated and self._assignment_correct(obs, assignment)
        outcome = self._book_keep(frame, obs, est_pose, assignment, bif_correct,
                                  diagnostics, elapsed)
        self.frame_index += 1
        return outcome

    def _assignment_correct(self, obs: ObservationFrame, assignment: dict[int, int]) -> bool:
        if not assignment:
            return False
        by_slot = {o.slot: o for o in obs.observations}
        for slot, airway_id in assignment.items():
            row = by_slot.get(slot)
            if row is None or row.true_airway_id != airway_id:
                return False
        return True

    def _book_keep(self, frame: TrajectoryFrame, obs: ObservationFrame,
                   est_pose: Pose | None, assignment: dict[int, int], bif_correct: bool,
                   diagnostics: dict, elapsed: float) -> StepOutcome:
        idx = self.skel.index()
        true_visible, _ = visible_airways(frame.true_pose, self.camera, self.skel)
        if self.algorithm == ALGO_BIFURCATION:
            est_visible, _ = visible_airways(est_pose, self.camera, self.skel)
            record_pose = est_pose
        else:
            est_visible = {o.slot for o in obs.observations
                           if o.is_vis and o.slot in self.skel.airways}
            if est_pose is not None:
                self.last_estimate = est_pose
            record_pose = est_pose if est_pose is not None else self.last_estimate

        true_generation = self.skel.airways[idx.nearest_airway(frame.true_pose.position)].generation
        record = FrameRecord(t=frame.t, true_visible=true_visible, est_visible=est_visible,
                             true_pose=frame.true_pose, est_pose=record_pose,
                             bif_correct=bif_correct, true_generation=true_generation)
        self.records.append(record)
        line = estimate_line(self.frame_index, est_pose, assignment, bif_correct, diagnostics)
        self.estimate_lines.append(line)
        return StepOutcome(frame_index=self.frame_index, est_pose=est_pose,
                           assignment=assignment, bif_correct=bif_correct, record=record,
                           estimate_json=line, diagnostics=diagnostics,
                           kernel_seconds=elapsed)

    def result(self) -> SequenceResult:
        loop_hz = (self.frame_index / self.kernel_seconds
                   if self.kernel_seconds > 0 and self.frame_index else None)
        return sequence_result(self.records, loop_hz=loop_hz)


# ---------------------------------------------------------------------------
# Batch run
# ---------------------------------------------------------------------------

@dataclass
class SequenceRun:
    name: str
    trajectory: list[TrajectoryFrame]
    engine: SequenceEngine
    result: SequenceResult


@dataclass
class RunResult:
    config: RunConfig
    skeleton: AirwaySkeleton
    sequences: list[SequenceRun]
    aggregate: AggregateResult
    out_dir: Path | None = None
    files: dict[str, Path] = field(default_factory=dict)


def select_targets(skel: AirwaySkeleton, n_sequences: int, seed: int) -> list[int]:
    """Deterministically pick leaf targets, deepest generations first."""
    leaves = sorted((aid for aid, a in skel.airways.items() if not a.children_ids),
                    key=lambda aid: (-skel.airways[aid].generation, aid))
    if not leaves:
        raise ValueError("skeleton has no leaf airways")
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(len(leaves)))
    picked = [leaves[i] for i in order[:n_sequences]]
    while len(picked) < n_sequences:
        picked.append(leaves[len(picked) % len(leaves)])
    return picked


def _sequence_noise_stream(noise: NoiseModel, seq_index: int) -> np.random.Generator:
    return np.random.default_rng([noise.seed, seq_index])


def run_config_sequences(cfg: RunConfig, skel: AirwaySkeleton) -> list[tuple[str, list[TrajectoryFrame]]]:
    if cfg.trajectory_path is not None:
        return [("replay", read_trajectory(cfg.trajectory_path))]
    targets = cfg.targets if cfg.targets else select_targets(skel, cfg.n_sequences, cfg.seed)
    out = []
    for k, target in enumerate(targets):
        sim = replace(cfg.sim, seed=cfg.sim.seed + 1000 * k + cfg.seed)
        frames = simulate(skel, plan_path(skel, target), sim)
        out.append((f"seq_{k:03d}_to_{target}", frames))
    return out


def run_sequence(skel: AirwaySkeleton, trajectory: list[TrajectoryFrame], cfg: RunConfig,
                 seq_index: int = 0) -> SequenceEngine:
    engine = SequenceEngine(skel, cfg.algorithm, cfg.camera, cfg.noise, cfg.filter_params,
                            noise_stream=_sequence_noise_stream(cfg.noise, seq_index))
    for i, frame in enumerate(trajectory):
        try:
            engine.step(frame)
        except Exception as exc:
            raise RuntimeError(
                f"localizer failed at frame {i} (sequence {seq_index}): {exc}") from exc
    return engine


def cmd_run(cfg: RunConfig, out_dir: str | Path | None = None,
            write_logs: bool = True) -> RunResult:
    """Execute every sequence of a config; write logs, metrics and figures."""
    skel = cfg.load_skeleton()
    sequences = []
    for k, (name, trajectory) in enumerate(run_config_sequences(cfg, skel)):
        engine = run_sequence(skel, trajectory, cfg, seq_index=k)
        sequences.append(SequenceRun(name=name, trajectory=trajectory, engine=engine,
                                     result=engine.result()))
    agg = aggregate([s.result for s in sequences])
    result = RunResult(config=cfg, skeleton=skel, sequences=sequences, aggregate=agg)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.out_dir = out
        (out / "run_config.json").write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")
        if write_logs:
            seq_dir = out / "sequences"
            seq_dir.mkdir(exist_ok=True)
            for s in sequences:
                write_trajectory(s.trajectory, seq_dir / f"{s.name}.trajectory.jsonl")
                with open(seq_dir / f"{s.name}.estimates.jsonl", "w") as fh:
                    fh.write("\n".join(s.engine.estimate_lines) + "\n")
        result.files["metrics_csv"] = _write_metrics_csv(cfg, agg, out / "metrics.csv")
        result.files["sequences_csv"] = _write_sequence_csv(sequences, out / "metrics_sequences.csv")
        result.files["results_json"] = _write_results_json(cfg, sequences, agg, out / "results.json")
        if cfg.figures:
            from . import reporting
            result.files.update(reporting.run_figures(result, out / "figures"))
    return result


def _write_metrics_csv(cfg: RunConfig, agg: AggregateResult, path: Path) -> Path:
    cols = ["algorithm", "train_label", "test_label"]
    cols += [f"f1_g{g}" for g in GENERATION_COLUMNS]
    cols += ["e_p_mm", "e_d_deg", "e_r_deg", "loop_hz"]
    row = {"algorithm": cfg.algorithm, "train_label": cfg.train_label,
           "test_label": cfg.test_label}
    for g in GENERATION_COLUMNS:
        m = agg.per_generation.get(g)
        row[f"f1_g{g}"] = "" if m is None else f"{m.mean:.6f}"
    for name, key in (("e_p_mm", "e_p"), ("e_d_deg", "e_d"), ("e_r_deg", "e_r")):
        m = getattr(agg, key)
        row[name] = "" if m is None else f"{m.mean:.6f}"
    row["loop_hz"] = "" if agg.loop_hz is None else f"{agg.loop_hz:.1f}"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        writer.writerow(row)
    return path


def _write_sequence_csv(sequences: list[SequenceRun], path: Path) -> Path:
    cols = ["sequence", "frames"] + [f"f1_g{g}" for g in GENERATION_COLUMNS] \
        + ["overall_f1", "e_p_mm", "e_d_deg", "e_r_deg", "n_tracking", "loop_hz"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for s in sequences:
            r = s.result
            row = {"sequence": s.name, "frames": r.frame_count}
            for g in GENERATION_COLUMNS:
                score = r.per_generation.get(g)
                row[f"f1_g{g}"] = "" if score is None else f"{score.f1:.6f}"
            overall = r.overall_f1()
            row["overall_f1"] = "" if overall is None else f"{overall:.6f}"
            row["e_p_mm"] = "" if r.mean_e_p is None else f"{r.mean_e_p:.6f}"
            row["e_d_deg"] = "" if r.mean_e_d is None else f"{r.mean_e_d:.6f}"
            row["e_r_deg"] = "" if r.mean_e_r is None else f"{r.mean_e_r:.6f}"
            row["n_tracking"] = r.n_tracking_frames
            row["loop_hz"] = "" if r.loop_hz is None else f"{r.loop_hz:.1f}"
            writer.writerow(row)
    return path


def _write_results_json(cfg: RunConfig, sequences: list[SequenceRun],
                        agg: AggregateResult, path: Path) -> Path:
    def gen_map(scores):
        return {str(g): {"precision": s.precision, "recall": s.recall, "f1": s.f1,
                         "frames": s.frame_count} for g, s in scores.items()}

    doc = {
        "algorithm": cfg.algorithm,
        "train_label": cfg.train_label,
        "test_label": cfg.test_label,
        "aggregate": {
            "f1_by_generation": {str(g): {"mean": m.mean, "min": m.min, "max": m.max,
                                          "frames": m.total_weight}
                                 for g, m in agg.per_generation.items()},
            "e_p_mm": None if agg.e_p is None else vars(agg.e_p),
            "e_d_deg": None if agg.e_d is None else vars(agg.e_d),
            "e_r_deg": None if agg.e_r is None else vars(agg.e_r),
            "loop_hz": agg.loop_hz,
            "n_sequences": agg.n_sequences,
            "total_frames": agg.total_frames,
        },
        "sequences": [
            {
                "name": s.name,
                "frames": s.result.frame_count,
                "f1_by_generation": gen_map(s.result.per_generation),
                "e_p_mm": s.result.mean_e_p,
                "e_d_deg": s.result.mean_e_d,
                "e_r_deg": s.result.mean_e_r,
                "n_tracking": s.result.n_tracking_frames,
                "loop_hz": s.result.loop_hz,
            }
            for s in sequences
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


# ---------------------------------------------------------------------------
# Parameter sweep
# ---------------------------------------------------------------------------

SWEEP_PARAMS = ("sigma_ins", "sigma_fit", "sigma_roll", "sigma_x", "gen_weight_ratio")


def apply_sweep_value(fp: FilterParams, param: str, value: float) -> FilterParams:
    if param == "sigma_ins":
        return replace(fp, sigma_ins_mm=value)
    if param == "sigma_fit":
        return replace(fp, sigma_fit_rad=value)
    if param == "sigma_roll":
        return replace(fp, sigma_roll_deg=value)
    if param == "sigma_x":
        return replace(fp, cov_x=value ** 2 * np.eye(3))
    if param == "gen_weight_ratio":
        return replace(fp, gen_weights={1: 1.0, 2: value, 3: value ** 2})
    raise ValueError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")


@dataclass
class SweepResult:
    param: str
    values: list[float]
    mean_f1: list[float]
    files: dict[str, Path] = field(default_factory=dict)


def cmd_sweep(cfg: RunConfig, param: str, grid: list[float],
              out_dir: str | Path | None = None) -> SweepResult:
    """One cmd_run per grid value (shared seeds), collecting average F1."""
    if not grid:
        raise ValueError("sweep grid must be non-empty")
    values, scores = [], []
    for value in grid:
        run_cfg = replace(cfg, filter_params=apply_sweep_value(cfg.filter_params, param, value),
                          figures=False)
        result = cmd_run(run_cfg, out_dir=None)
        gens = result.aggregate.per_generation
        total = sum(m.total_weight for m in gens.values())
        mean_f1 = (sum(m.mean * m.total_weight for m in gens.values()) / total
                   if total else 0.0)
        values.append(float(value))
        scores.append(float(mean_f1))
    sweep = SweepResult(param=param, values=values, mean_f1=scores)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "sweep.csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["param", "value", "mean_f1"])
            for v, f1 in zip(values, scores):
                writer.writerow([param, f"{v:g}", f"{f1:.6f}"])
        sweep.files["sweep_csv"] = csv_path
        if cfg.figures:
            from . import reporting
            sweep.files["sweep_png"] = reporting.sweep_figure(sweep, out / "sweep.png")
    return sweep


def mean_f1_of(result: RunResult) -> float:
    gens = result.aggregate.per_generation
    total = sum(m.total_weight for m in gens.values())
    return sum(m.mean * m.total_weight for m in gens.values()) / total if total else 0.0
