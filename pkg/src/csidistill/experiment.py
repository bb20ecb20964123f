"""End-to-end experiments: data, preprocessing, training, evaluation, artifacts."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import config_hash
from .evaluate import EvalReport, evaluate
from .model import ModelState, save_checkpoint
from .preprocess import csi_ratio, dfs_spectrogram
from .teacher import TeacherBank, load_teacher_bank, synth_teacher_bank
from .traces import CsiTrace, make_splits, synth_dataset
from .train import TRAIN_KEYS, TrainConfig, TrainingLog, train

log = logging.getLogger(__name__)

SCENARIO_ALIASES = {
    "id": "in-domain", "in-domain": "in-domain",
    "cl": "cross-location", "cross-location": "cross-location",
    "co": "cross-orientation", "cross-orientation": "cross-orientation",
}
TABLE_COLUMNS = (("in-domain", "ID"), ("cross-location", "CL"), ("cross-orientation", "CO"))


@dataclass(frozen=True)
class ExperimentConfig:
    # synthetic data
    n_per_class: int = 8
    locations: int = 3
    orientations: int = 5
    num_time: int = 256
    subcarriers: int = 30
    antennas: int = 3
    noise_sigma: float = 0.1
    sample_rate: float = 100.0
    jitter: float = 0.08
    data_seed: int = 0
    # preprocessing
    ref_antenna: int = 0
    resample_len: int = 64
    dfs_resample_len: int = 256
    window_len: int = 64
    hop: int = 8
    hampel_half_window: int = 3
    hampel_threshold: float = 3.0
    # splits
    train_fraction: float = 0.8
    split_seed: int = 0
    cl_train_location: int = 0
    co_train_orientation: int = 2
    # teacher
    teacher_path: str = ""
    teacher_dim: int = 64
    teacher_seed: int = 0
    teacher_max_cos: float = 0.3
    # training
    epochs: int = 30
    batch_size: int = 16
    optimizer: str = "adam"
    lr0: float = 3e-3
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    tau_lsdm: float = 0.5
    tau_cls: float = 2.0
    lambda_feat: float = 1.0
    lambda_temp: float = 0.0001
    lambda_cls: float = 1.0
    lambda_ce: float = 1.0
    use_lsdm: bool = True
    gamma: float = 5.0
    seed: int = 0
    modality: str = "csi_ratio"
    validate: bool = True

    def __post_init__(self):
        self.train_config()  # validates the training fields

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{k: getattr(self, k) for k in TRAIN_KEYS})

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def make_dataset(cfg: ExperimentConfig) -> list[CsiTrace]:
    return synth_dataset(cfg.n_per_class, cfg.locations, cfg.orientations, cfg.num_time,
                         cfg.subcarriers, cfg.antennas, cfg.noise_sigma, cfg.data_seed,
                         cfg.sample_rate, cfg.jitter)


def make_teacher(cfg: ExperimentConfig) -> TeacherBank:
    if cfg.teacher_path:
        return load_teacher_bank(cfg.teacher_path)
    return synth_teacher_bank(6, cfg.teacher_dim, cfg.teacher_seed, cfg.teacher_max_cos)


def preprocess_trace(trace: CsiTrace, cfg: ExperimentConfig):
    if cfg.modality == "csi_ratio":
        return csi_ratio(trace, cfg.ref_antenna, cfg.resample_len,
                         cfg.hampel_half_window, cfg.hampel_threshold)
    return dfs_spectrogram(trace, cfg.ref_antenna, cfg.dfs_resample_len, cfg.window_len,
                           cfg.hop, cfg.hampel_half_window, cfg.hampel_threshold)


def preprocess_all(traces: Sequence[CsiTrace], cfg: ExperimentConfig) -> dict[int, object]:
    return {i: preprocess_trace(t, cfg) for i, t in enumerate(traces)}


def scenario_split(traces, scenario: str, cfg: ExperimentConfig):
    holdout = {"in-domain": None, "cross-location": cfg.cl_train_location,
               "cross-orientation": cfg.co_train_orientation}[scenario]
    return make_splits(traces, scenario, holdout, cfg.train_fraction, cfg.split_seed)


def write_run(out: Path, state: ModelState, history: TrainingLog, report: EvalReport) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(state, out / "checkpoint.glsd")
    (out / "loss_log.csv").write_text(history.loss_csv(), encoding="utf-8")
    (out / "val_log.csv").write_text(history.val_csv(), encoding="utf-8")
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "confusion.csv").write_text(report.confusion_csv(), encoding="utf-8")


def ablation_table(results: dict) -> str:
    """CSV with one row per stage and columns ``ID,CL,CO,Mean`` (accuracy in %)."""
    def row(stage):
        vals = []
        for scen, _ in TABLE_COLUMNS:
            rep = results.get(scen, {}).get(stage)
            vals.append(None if rep is None else 100.0 * rep.accuracy)
        done = [v for v in vals if v is not None]
        vals.append(float(np.mean(done)) if done else None)
        return vals

    base, method = row("baseline"), row("method")
    delta = [None if b is None or m is None else m - b for b, m in zip(base, method)]
    lines = ["stage," + ",".join(c for _, c in TABLE_COLUMNS) + ",Mean"]
    for name, vals in (("baseline", base), ("method", method), ("delta", delta)):
        lines.append(name + "," + ",".join("" if v is None else f"{v:.2f}" for v in vals))
    return "\n".join(lines) + "\n"


def normalize_scenarios(scenarios: Sequence[str]) -> list[str]:
    if not scenarios:
        raise ValueError("at least one scenario is required")
    out = []
    for s in scenarios:
        key = s.strip().lower()
        if key not in SCENARIO_ALIASES:
            raise ValueError(f"unknown scenario {s!r}")
        out.append(SCENARIO_ALIASES[key])
    return out


def run_experiment(cfg: ExperimentConfig, scenarios: Sequence[str], out_dir=None,
                   ablation: bool = False, traces: Sequence[CsiTrace] | None = None) -> dict:
    """Train and evaluate each scenario; optionally pair with the CE-only baseline.

    Returns ``{scenario: {"method": EvalReport, "baseline": EvalReport}}``
    (``baseline`` only with ``ablation``). With ``out_dir`` every run writes
    its checkpoint, logs, report JSON and confusion CSV, and an ablation run
    also writes ``ablation.csv``.
    """
    scenarios = normalize_scenarios(scenarios)
    traces = make_dataset(cfg) if traces is None else list(traces)
    features = preprocess_all(traces, cfg)
    labels = {i: t.label for i, t in enumerate(traces)}
    bank = make_teacher(cfg)
    out_dir = Path(out_dir) if out_dir is not None else None

    stages = [("method", cfg.train_config())]
    if ablation:
        stages.append(("baseline", cfg.train_config().baseline()))
    chash = config_hash(cfg)
    results: dict = {}
    for scenario in scenarios:
        split = scenario_split(traces, scenario, cfg)
        results[scenario] = {}
        for stage, tcfg in stages:
            state, history = train(tcfg, split, bank, features)
            report = evaluate(state, split, features, cfg.modality, labels, chash)
            results[scenario][stage] = report
            log.info("%s %s accuracy %.4f", scenario, stage, report.accuracy)
            if out_dir is not None:
                sub = out_dir / scenario if stage == "method" else out_dir / scenario / stage
                write_run(sub, state, history, report)
    if ablation and out_dir is not None:
        (out_dir / "ablation.csv").write_text(ablation_table(results), encoding="utf-8")
    return results
