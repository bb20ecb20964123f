"""WiFi CSI gesture recognition with semantic teacher distillation (numpy only)."""

from .errors import DataError, FormatError, NumericError, TruncatedError
from .evaluate import EvalReport, evaluate, fuse_probabilities, predict_fused, softmax
from .experiment import ExperimentConfig, run_experiment
from .model import ModelState, backward, forward, init_params, load_checkpoint, save_checkpoint
from .preprocess import CsiRatioFeature, DfsSpectrogram, csi_ratio, dfs_spectrogram
from .teacher import TeacherBank, load_teacher_bank, synth_teacher_bank, teacher_logits
from .traces import CsiTrace, DatasetSplit, make_splits, read_trace, synth_dataset, write_trace
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "DataError", "FormatError", "NumericError", "TruncatedError",
    "EvalReport", "evaluate", "fuse_probabilities", "predict_fused", "softmax",
    "ExperimentConfig", "run_experiment",
    "ModelState", "backward", "forward", "init_params", "load_checkpoint", "save_checkpoint",
    "CsiRatioFeature", "DfsSpectrogram", "csi_ratio", "dfs_spectrogram",
    "TeacherBank", "load_teacher_bank", "synth_teacher_bank", "teacher_logits",
    "CsiTrace", "DatasetSplit", "make_splits", "read_trace", "synth_dataset", "write_trace",
    "TrainConfig", "train",
]
