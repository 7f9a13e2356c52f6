from citetrack.tracker.crop import CropMapping, crop_patch
from citetrack.tracker.model import CiteTrackModel, build_model, load_model, save_model
from citetrack.tracker.online import Tracker, TrackerState
from citetrack.tracker.training import TrainingDiverged, TrainResult, default_training_set, train_toy

__all__ = [
    "CiteTrackModel",
    "CropMapping",
    "TrainResult",
    "Tracker",
    "TrackerState",
    "TrainingDiverged",
    "build_model",
    "crop_patch",
    "default_training_set",
    "load_model",
    "save_model",
    "train_toy",
]
