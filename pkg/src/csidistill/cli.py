"""Command-line entry point: ``csidistill <command> [options]``.

Every command reads the same flat ``key = value`` config (any field of
:class:`ExperimentConfig`) and accepts ``--seed``. Exit codes: 0 success,
2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .config import config_hash, format_config, load_config
from .errors import DataError, FormatError, NumericError
from .evaluate import evaluate, predict_trace
from .model import load_checkpoint, save_checkpoint
from .preprocess import read_feature, write_feature
from .teacher import load_teacher_bank, write_teacher_bank
from .traces import CLASS_NAMES, make_splits, read_manifest, read_trace, write_manifest, write_trace
from .train import train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
FEATURE_MANIFEST = "features.txt"


class UsageError(Exception):
    pass


def _config(args, seed_field: str = "seed", **overrides) -> ex.ExperimentConfig:
    if args.seed is not None:
        overrides[seed_field] = args.seed
    # a bad config file or value is an invocation problem, not a data problem
    try:
        return load_config(args.config, ex.ExperimentConfig, **overrides)
    except (OSError, TypeError, ValueError) as err:
        raise UsageError(f"config: {err}") from None


# ----------------------------------------------------------------------------
# feature directories: one line per trace listing its feature files


def write_feature_dir(features: dict, out: Path, stems: list[str]) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for tid in sorted(features):
        feats = features[tid]
        if isinstance(feats, list):
            names = [f"{stems[tid]}.a{f.antenna_index}.crf" for f in feats]
            for f, name in zip(feats, names):
                write_feature(f, out / name)
        else:
            names = [f"{stems[tid]}.dfs"]
            write_feature(feats, out / names[0])
        lines.append(" ".join(names))
    path = out / FEATURE_MANIFEST
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_feature_dir(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / FEATURE_MANIFEST
    base = path.parent
    features = {}
    lines = [ln.split() for ln in path.read_text(encoding="utf-8").splitlines()]
    for tid, names in enumerate(ln for ln in lines if ln):
        feats = [read_feature(base / n) for n in names]
        kinds = {type(f).__name__ for f in feats}
        if len(kinds) != 1 or (kinds == {"DfsSpectrogram"} and len(feats) != 1):
            raise DataError(f"line {tid + 1}: mixed or repeated feature kinds")
        features[tid] = feats[0] if kinds == {"DfsSpectrogram"} else feats
    if not features:
        raise DataError(f"{path}: no features listed")
    return features


def _modality(features: dict) -> str:
    return "dfs" if not isinstance(next(iter(features.values())), list) else "csi_ratio"


def _meta(features: dict) -> list:
    """One object per trace carrying label and domain tags, in id order."""
    return [f[0] if isinstance(f, list) else f for _, f in sorted(features.items())]


def _split(features: dict, scenario: str, cfg: ex.ExperimentConfig):
    scenario = ex.normalize_scenarios([scenario])[0]
    holdout = {"in-domain": None, "cross-location": cfg.cl_train_location,
               "cross-orientation": cfg.co_train_orientation}[scenario]
    return make_splits(_meta(features), scenario, holdout, cfg.train_fraction, cfg.split_seed)


# ----------------------------------------------------------------------------
# commands


def cmd_synth_data(args) -> int:
    cfg = _config(args, "data_seed")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, trace in enumerate(ex.make_dataset(cfg)):
        name = f"trace_{i:05d}.csi"
        write_trace(trace, out / name)
        names.append(name)
    write_manifest(names, out / "manifest.txt")
    print(f"wrote {len(names)} traces to {out / 'manifest.txt'}")
    return EXIT_OK


def cmd_synth_teacher(args) -> int:
    cfg = _config(args, "teacher_seed")
    bank = ex.make_teacher(cfg.replace(teacher_path=""))
    write_teacher_bank(bank, args.out)
    print(f"wrote {bank.num_classes}x{bank.dim} teacher bank to {args.out}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    overrides = {"modality": args.modality} if args.modality else {}
    cfg = _config(args, **overrides)
    paths = read_manifest(args.manifest)
    features = {i: ex.preprocess_trace(read_trace(p), cfg) for i, p in enumerate(paths)}
    path = write_feature_dir(features, Path(args.out), [p.stem for p in paths])
    print(f"wrote {cfg.modality} features for {len(paths)} traces to {path}")
    return EXIT_OK


def _bank(args, cfg):
    return load_teacher_bank(args.teacher) if args.teacher else ex.make_teacher(cfg)


def cmd_train(args) -> int:
    features = read_feature_dir(args.features)
    cfg = _config(args, modality=_modality(features))
    split = _split(features, args.scenario, cfg)
    state, history = train(cfg.train_config(), split, _bank(args, cfg), features)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(state, out / "checkpoint.glsd")
    (out / "loss_log.csv").write_text(history.loss_csv(), encoding="utf-8")
    (out / "val_log.csv").write_text(history.val_csv(), encoding="utf-8")
    (out / "config.txt").write_text(format_config(cfg), encoding="utf-8")
    print(f"trained {split.scenario} on {len(split.train_ids)} traces; "
          f"checkpoint at {out / 'checkpoint.glsd'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    features = read_feature_dir(args.features)
    cfg = _config(args, modality=_modality(features))
    split = _split(features, args.scenario, cfg)
    state = load_checkpoint(args.checkpoint)
    report = evaluate(state, split, features, cfg.modality, config_hash=config_hash(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "confusion.csv").write_text(report.confusion_csv(), encoding="utf-8")
    print(f"{report.scenario} accuracy {report.accuracy:.4f} on {report.n} traces")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _config(args)
    state = load_checkpoint(args.checkpoint)
    for path in args.traces:
        feats = ex.preprocess_trace(read_trace(path), cfg)
        pred, probs = predict_trace(state, feats, cfg.modality)
        print(json.dumps({"trace": str(path), "class": pred, "name": CLASS_NAMES[pred],
                          "probabilities": [float(p) for p in probs]}))
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _config(args)
    scenarios = [s for s in args.scenarios.split(",") if s.strip()]
    try:
        scenarios = ex.normalize_scenarios(scenarios)
    except ValueError as err:
        raise UsageError(str(err)) from None
    out = Path(args.out)
    results = ex.run_experiment(cfg, scenarios, out, ablation=args.ablation)
    (out / "config.txt").write_text(format_config(cfg), encoding="utf-8")
    for scen, stages in results.items():
        print(" ".join([scen] + [f"{k}={v.accuracy:.4f}" for k, v in stages.items()]))
    if args.ablation:
        print((out / "ablation.csv").read_text(encoding="utf-8"), end="")
    return EXIT_OK


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csidistill", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", default="", help="key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the command's seed")
        p.set_defaults(func=func)
        return p

    p = command("synth-data", cmd_synth_data, "generate a synthetic trace corpus")
    p.add_argument("--out", required=True, help="output folder")

    p = command("synth-teacher", cmd_synth_teacher, "generate a synthetic teacher bank")
    p.add_argument("--out", required=True, help="output bank file")

    p = command("preprocess", cmd_preprocess, "turn traces into model features")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output feature folder")
    p.add_argument("--modality", choices=("csi_ratio", "dfs"))

    p = command("train", cmd_train, "train a student on one scenario's train split")
    p.add_argument("--features", required=True, help="feature folder or its features.txt")
    p.add_argument("--scenario", required=True)
    p.add_argument("--teacher", default="", help="teacher bank file (default: synthetic)")
    p.add_argument("--out", required=True)

    p = command("eval", cmd_eval, "evaluate a checkpoint on one scenario's test split")
    p.add_argument("--features", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)

    p = command("predict", cmd_predict, "classify trace files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("traces", nargs="+")

    p = command("experiment", cmd_experiment, "synthesize, train and evaluate end to end")
    p.add_argument("--scenarios", default="id,cl,co", help="comma list of id, cl, co")
    p.add_argument("--ablation", action="store_true", help="also train the CE-only baseline")
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, DataError, OSError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
