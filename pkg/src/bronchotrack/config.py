"""Run configuration: one JSON document wiring skeleton source, simulation,
noise, localizer choice and filter parameters into a reproducible run."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bifurcation_filter import FilterParams
from .geometry import CameraModel
from .perception import NoiseModel
from .simulator import SimParams
from .skeleton import AirwaySkeleton, BranchingParams, load_skeleton, synth_lung

ALGO_BIFURCATION = "bifurcation"
ALGO_DIRECT = "direct"


@dataclass
class SynthSpec:
    generations: int = 5
    seed: int = 7
    params: BranchingParams = field(default_factory=BranchingParams)


@dataclass
class RunConfig:
    seed: int = 0
    algorithm: str = ALGO_BIFURCATION
    skeleton_path: str | None = None
    synth: SynthSpec | None = field(default_factory=SynthSpec)
    trajectory_path: str | None = None      # replay an existing trajectory log
    targets: list[int] | None = None        # explicit target airway ids
    n_sequences: int = 10                   # used when targets is None: deepest leaves
    camera: CameraModel = field(default_factory=CameraModel)
    sim: SimParams = field(default_factory=SimParams)
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(
        sigma_pos_mm=0.0, sigma_ang_deg=0.0, sigma_roll_deg=0.0))
    filter_params: FilterParams = field(default_factory=FilterParams)
    train_label: str = "oracle"
    test_label: str = "synthetic"
    figures: bool = True

    def __post_init__(self) -> None:
        if self.algorithm not in (ALGO_BIFURCATION, ALGO_DIRECT):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if (self.skeleton_path is None) == (self.synth is None):
            raise ValueError("config needs exactly one skeleton source (path or synth)")

    def load_skeleton(self) -> AirwaySkeleton:
        if self.skeleton_path is not None:
            return load_skeleton(self.skeleton_path)
        return synth_lung(self.synth.generations, self.synth.seed, self.synth.params)


def _filter_params_to_dict(fp: FilterParams) -> dict:
    return {
        "sigma_fit_rad": fp.sigma_fit_rad,
        "sigma_ins_mm": fp.sigma_ins_mm,
        "cov_x": fp.cov_x.tolist(),
        "sigma_roll_deg": fp.sigma_roll_deg,
        "n_candidates": fp.n_candidates,
        "gen_weights": {str(k): v for k, v in fp.gen_weights.items()},
        "gen_weight_floor": fp.gen_weight_floor,
        "heading_lookahead_mm": fp.heading_lookahead_mm,
    }


def _filter_params_from_dict(doc: dict) -> FilterParams:
    kwargs = dict(doc)
    if "cov_x" in kwargs:
        kwargs["cov_x"] = np.asarray(kwargs["cov_x"], dtype=float)
    if "gen_weights" in kwargs:
        kwargs["gen_weights"] = {int(k): float(v) for k, v in kwargs["gen_weights"].items()}
    return FilterParams(**kwargs)


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "seed": cfg.seed,
        "algorithm": cfg.algorithm,
        "skeleton_path": cfg.skeleton_path,
        "synth": None if cfg.synth is None else {
            "generations": cfg.synth.generations,
            "seed": cfg.synth.seed,
            "params": asdict(cfg.synth.params),
        },
        "trajectory_path": cfg.trajectory_path,
        "targets": cfg.targets,
        "n_sequences": cfg.n_sequences,
        "camera": asdict(cfg.camera),
        "sim": asdict(cfg.sim),
        "noise": asdict(cfg.noise),
        "filter_params": _filter_params_to_dict(cfg.filter_params),
        "train_label": cfg.train_label,
        "test_label": cfg.test_label,
        "figures": cfg.figures,
    }


def config_from_dict(doc: dict) -> RunConfig:
    synth = None
    if doc.get("synth") is not None:
        s = doc["synth"]
        synth = SynthSpec(generations=int(s.get("generations", 5)),
                          seed=int(s.get("seed", 7)),
                          params=BranchingParams(**s.get("params", {})))
    return RunConfig(
        seed=int(doc.get("seed", 0)),
        algorithm=doc.get("algorithm", ALGO_BIFURCATION),
        skeleton_path=doc.get("skeleton_path"),
        synth=synth,
        trajectory_path=doc.get("trajectory_path"),
        targets=doc.get("targets"),
        n_sequences=int(doc.get("n_sequences", 10)),
        camera=CameraModel(**doc.get("camera", {})),
        sim=SimParams(**doc.get("sim", {})),
        noise=NoiseModel(**doc.get("noise", {})),
        filter_params=_filter_params_from_dict(doc.get("filter_params", {})),
        train_label=doc.get("train_label", "oracle"),
        test_label=doc.get("test_label", "synthetic"),
        figures=bool(doc.get("figures", True)),
    )


def load_config(path: str | Path) -> RunConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")
