"""Command-line interface: ``cfdialogue <subcommand> ...``.

Exit codes: 0 on success, 1 on invalid input or missing files, 2 on usage
errors.  Training options resolve as dataclass defaults, then the ``--config``
JSON file, then explicit flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .augment import augment_dataset
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import load_dataset, save_dataset
from .evaluation import arm_effects, evaluate, invert_treatments
from .models import (
    CfLstmModel,
    TrainConfig,
    extend_treatments,
    predict_arms,
    predict_raw,
    train_baseline_lstm,
    train_baseline_mlp,
    train_cf_lstm,
)
from .synth import SynthConfig, generate, save_truth, truth_path
from .treatment import dataset_arms, default_policy, load_policy

log = logging.getLogger("cfdialogue")

TRAIN_DEFAULTS = TrainConfig()
SYNTH_DEFAULTS = SynthConfig()

# flag name -> (config field, type, help)
TRAIN_FLAGS = {
    "--epochs": ("epochs", int, "maximum training epochs"),
    "--batch-size": ("batch_size", int, "mini-batch size"),
    "--lr": ("learning_rate", float, "Adam learning rate"),
    "--hidden-size": ("hidden_size", int, "LSTM hidden size H"),
    "--ipm-weight": ("ipm_weight", float, "weight of the Wasserstein penalty"),
    "--n-proj": ("n_proj", int, "random projections for the sliced distance"),
    "--patience": ("patience", int, "early-stopping patience in epochs"),
    "--val-fraction": ("val_fraction", float, "held-out fraction for early stopping"),
    "--pooling": ("pooling", str, "representation: last hidden state or mean ('last'|'mean')"),
}

SYNTH_FLAGS = {
    "--n": ("n_dialogues", int, "number of dialogues"),
    "--effect": ("effects", float, "effect of arm 1 on the rating"),
    "--effect-kind": ("effect_kind", str, "'additive' or 'heterogeneous'"),
    "--treated-fraction": ("arm_fractions", float, "fraction of treated dialogues"),
    "--noise": ("noise", float, "rating noise standard deviation"),
    "--heterogeneity": ("heterogeneity", float, "strength of the arm-specific moderator"),
    "--confounding": ("confounding", float, "dependence of treatment on latent quality"),
    "--n-days": ("n_days", int, "number of calendar days"),
}

TUPLE_FIELDS = {"effects", "arm_fractions"}


def _add_flags(p: argparse.ArgumentParser, flags: dict, defaults) -> None:
    for flag, (name, typ, help_) in flags.items():
        default = getattr(defaults, name)
        if name in TUPLE_FIELDS:
            default = default[0]
        p.add_argument(flag, dest=name, type=typ, default=None, help=f"{help_} (default: {default})")


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    with p.open(encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{p}: invalid JSON config ({exc})") from None
    if not isinstance(obj, dict):
        raise ValueError(f"{p}: config must be a JSON object")
    return obj


def _resolve(cls, args, flags: dict) -> object:
    values = _read_config(args.config)
    for _, (name, _, _) in flags.items():
        v = getattr(args, name)
        if v is not None:
            values[name] = (v,) if name in TUPLE_FIELDS else v
    if args.seed is not None:
        values["seed"] = args.seed
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")
    return cls(**values)


def _policy(args):
    return load_policy(args.policy) if getattr(args, "policy", None) else default_policy()


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


# --------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    cfg = _resolve(SynthConfig, args, SYNTH_FLAGS)
    ds, truth = generate(cfg)
    save_dataset(ds, args.out)
    save_truth(truth, truth_path(args.out))
    log.info("wrote %d dialogues to %s", len(ds), args.out)
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(TrainConfig, args, TRAIN_FLAGS)
    ds = load_dataset(args.data)
    if args.model == "cf-lstm":
        model = train_cf_lstm(ds, _policy(args), cfg)
    elif args.model == "lstm":
        model = train_baseline_lstm(ds, cfg)
    else:
        model = train_baseline_mlp(ds, cfg)
    save_checkpoint(model, args.out)
    h = model.history
    log.info("trained %s for %d epochs (best %s)", args.model, h["epochs_run"], h["best_epoch"])
    return 0


def cmd_evaluate(args) -> int:
    model = load_checkpoint(args.model)
    ds = load_dataset(args.data)
    policy = model.policy if isinstance(model, CfLstmModel) and not args.policy else _policy(args)
    report = evaluate(model, ds, policy, invert=args.invert)
    if args.format == "table":
        sys.stdout.write(report.table() + "\n")
    else:
        sys.stdout.write(report.to_json() + "\n")
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.model)
    ds = load_dataset(args.data)
    if isinstance(model, CfLstmModel):
        policy = model.policy if not args.policy else _policy(args)
        if args.arm == "factual":
            arms = dataset_arms(ds, policy)
        else:
            arm = int(args.arm)
            if arm >= model.n_arms:
                raise ValueError(f"arm {arm} outside 0..{model.n_arms - 1}")
            arms = np.full(len(ds), arm)
        raw = predict_raw(model, ds, arms)
    else:
        if args.arm != "factual":
            raise ValueError(f"a {model.kind} model has no treatment heads; use --arm factual")
        arms = None
        raw = predict_raw(model, ds)
    lines = []
    for i, d in enumerate(ds):
        rec = {"id": d.id, "prediction": float(np.clip(raw[i], 1.0, 5.0)), "raw": float(raw[i])}
        if arms is not None:
            rec["arm"] = int(arms[i])
        lines.append(json.dumps(rec))
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_augment(args) -> int:
    ds = load_dataset(args.inp)
    out = augment_dataset(ds, _policy(args), threshold=args.threshold, min_len=args.min_len)
    save_dataset(out, args.out)
    log.info("added %d augmented dialogues", len(out) - len(ds))
    return 0


def cmd_ate(args) -> int:
    model = load_checkpoint(args.model)
    if not isinstance(model, CfLstmModel):
        raise ValueError(f"ATE needs a cf-lstm checkpoint, got {model.kind}")
    ds = load_dataset(args.data)
    if len(ds) == 0:
        raise ValueError(f"{args.data}: no dialogues")
    effects = arm_effects(model, ds)
    out = {"arm_effects": {str(k): v for k, v in effects.items()}, "n_dialogues": len(ds)}
    if model.n_arms == 2:
        pred = predict_arms(model, ds)
        out["ate"] = effects[1]
        out["mse_factual_counterfactual"] = float(np.mean((pred[:, 1] - pred[:, 0]) ** 2))
    _emit(out)
    return 0


def cmd_invert(args) -> int:
    ds = load_dataset(args.inp)
    save_dataset(invert_treatments(ds, _policy(args)), args.out)
    return 0


def cmd_extend(args) -> int:
    model = load_checkpoint(args.model)
    if not isinstance(model, CfLstmModel):
        raise ValueError(f"extend needs a cf-lstm checkpoint, got {model.kind}")
    cfg = _resolve(TrainConfig, args, TRAIN_FLAGS)
    policy = load_policy(args.policy)
    ds = load_dataset(args.data)
    k_new = policy.n_arms - model.n_arms if args.k_new is None else args.k_new
    grown = extend_treatments(model, k_new, ds, cfg, policy, finetune=not args.no_finetune)
    save_checkpoint(grown, args.out)
    return 0


# --------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfdialogue",
        description="Counterfactual rating models for open-domain dialogues.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic dataset plus a <name>.truth.json oracle file")
    p.add_argument("--out", required=True, help="output dataset path (JSON lines)")
    p.add_argument("--seed", type=int, default=None, help=f"random seed (default: {SYNTH_DEFAULTS.seed})")
    p.add_argument("--config", default=None, help="JSON file of generator settings")
    _add_flags(p, SYNTH_FLAGS, SYNTH_DEFAULTS)

    p = add("train", cmd_train, "train a rating model and write a checkpoint")
    p.add_argument("--model", required=True, choices=["mlp", "lstm", "cf-lstm"], help="model kind")
    p.add_argument("--data", required=True, help="training dataset")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--seed", type=int, default=None, help=f"random seed (default: {TRAIN_DEFAULTS.seed})")
    p.add_argument("--config", default=None, help="JSON file of training settings")
    p.add_argument("--policy", default=None, help="JSON treatment policy (default: built-in two-arm policy)")
    _add_flags(p, TRAIN_FLAGS, TRAIN_DEFAULTS)

    p = add("evaluate", cmd_evaluate, "print an evaluation report for a checkpoint on a dataset")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="evaluation dataset")
    p.add_argument("--policy", default=None, help="JSON treatment policy (default: the checkpoint's)")
    p.add_argument("--invert", action="store_true", help="swap arms 0 and 1 before predicting")
    p.add_argument("--format", choices=["json", "table"], default="json", help="output format (default: json)")

    p = add("predict", cmd_predict, "write one prediction per dialogue as JSON lines")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="dataset to score")
    p.add_argument("--arm", default="factual", help="head to use: an arm number or 'factual' (default: factual)")
    p.add_argument("--policy", default=None, help="JSON treatment policy (default: the checkpoint's)")
    p.add_argument("--out", default=None, help="output path (default: stdout)")

    p = add("augment", cmd_augment, "append masked prefixes of low-rated dialogues")
    p.add_argument("--in", dest="inp", required=True, help="input dataset")
    p.add_argument("--out", required=True, help="output dataset")
    p.add_argument("--threshold", type=float, default=3.0, help="ratings below this are augmented (default: 3.0)")
    p.add_argument("--min-len", type=int, default=3, help="shortest prefix to emit (default: 3)")
    p.add_argument("--policy", default=None, help="JSON treatment policy (default: built-in two-arm policy)")

    p = add("ate", cmd_ate, "print the model's average treatment effect on a dataset")
    p.add_argument("--model", required=True, help="cf-lstm checkpoint path")
    p.add_argument("--data", required=True, help="dataset")

    p = add("invert", cmd_invert, "write a copy of a dataset with arms 0 and 1 swapped")
    p.add_argument("--in", dest="inp", required=True, help="input dataset")
    p.add_argument("--out", required=True, help="output dataset")
    p.add_argument("--policy", default=None, help="JSON treatment policy (default: built-in two-arm policy)")

    p = add("extend", cmd_extend, "add heads for new treatment arms to a cf-lstm checkpoint")
    p.add_argument("--model", required=True, help="cf-lstm checkpoint path")
    p.add_argument("--data", required=True, help="dataset covering the new arms")
    p.add_argument("--policy", required=True, help="JSON treatment policy defining every arm")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--k-new", type=int, default=None, help="arms to add (default: policy arms minus model heads)")
    p.add_argument("--no-finetune", action="store_true", help="skip the second, all-parameter phase")
    p.add_argument("--seed", type=int, default=None, help=f"random seed (default: {TRAIN_DEFAULTS.seed})")
    p.add_argument("--config", default=None, help="JSON file of training settings")
    _add_flags(p, TRAIN_FLAGS, TRAIN_DEFAULTS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        if exc.strerror and exc.filename is not None:
            print(f"error: {exc.strerror}: {exc.filename}", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, CheckpointError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
