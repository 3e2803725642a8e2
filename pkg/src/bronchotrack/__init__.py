"""Bronchoscope localization in airway-tree skeletons.

Library surface: skeletons (load/save/synthesize), pose geometry and
visibility, the perception oracle with its noise model, the bifurcation
particle filter and the direct airway-classification localizer, the flight
simulator, evaluation metrics, and the batch/sweep/serve harness.
"""

from .bifurcation_filter import (FilterParams, FilterState, bifurcation_prior,
                                 filter_step, prob_fit)
from .direct_localizer import direct_step
from .geometry import (BackwardDirectionError, CameraModel, Pose, RollIndeterminateError,
                       TrackingError, angles_to_dir, backout_pose, dir_to_angles,
                       is_visible, make_pose, optimal_roll, pose_roll, to_camera_frame,
                       tracking_errors, visible_airways)
from .metrics import (FrameRecord, SequenceResult, aggregate, f1_by_generation,
                      precision_recall, tracking_summary)
from .perception import (AirwayObservation, NoiseModel, ObservationFrame, corrupt,
                         observe_truth)
from .simulator import SimParams, TrajectoryFrame, plan_path, simulate
from .skeleton import (Airway, AirwaySkeleton, Bifurcation, BranchingParams,
                       SkeletonError, generation_distance, load_skeleton,
                       path_length_from_trachea, save_skeleton, synth_lung)

__version__ = "0.1.0"

__all__ = [
    "Airway", "AirwaySkeleton", "AirwayObservation", "BackwardDirectionError",
    "Bifurcation", "BranchingParams", "CameraModel", "FilterParams", "FilterState",
    "FrameRecord", "NoiseModel", "ObservationFrame", "Pose", "RollIndeterminateError",
    "SequenceResult", "SimParams", "SkeletonError", "TrackingError", "TrajectoryFrame",
    "aggregate", "angles_to_dir", "backout_pose", "bifurcation_prior", "corrupt",
    "dir_to_angles", "direct_step", "f1_by_generation", "filter_step",
    "generation_distance", "is_visible", "load_skeleton", "make_pose", "observe_truth",
    "optimal_roll", "path_length_from_trachea", "plan_path", "pose_roll", "precision_recall",
    "prob_fit", "save_skeleton", "simulate", "synth_lung", "to_camera_frame",
    "tracking_errors", "tracking_summary", "visible_airways",
]
