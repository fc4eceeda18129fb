"""Command-line pipeline: gen-synth, train-source, adapt, eval, grad-check.

Configuration is a flat set of key = value pairs; a ``--config FILE``
overrides the defaults and individual flags override the file. Every
written artifact (except the model file, whose format is fixed) embeds the
effective, default-expanded config for provenance. Exit codes: 0 success,
1 check failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import sys

from .data import (
    CsvFormatError,
    SynthConfig,
    gen_synthetic,
    load_feature_csv,
    load_truth_csv,
    save_feature_csv,
    save_truth_csv,
)
from .evaluation import evaluate_model, write_histogram_csv, write_report_json
from .losses import run_grad_check_suite
from .net import NonFiniteError, load_model, save_model
from .training import (
    MisalignmentError,
    TrainConfig,
    adapt,
    loss_rows_from_history,
    train_source,
    write_diagnostics_csv,
    write_loss_csv,
)

GRAD_CHECK_TOLERANCE = 1e-4


class UsageError(Exception):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _parse_float_list(text: str) -> list[float]:
    text = text.strip()
    return [float(tok) for tok in text.split(",") if tok != ""] if text else []


def _parse_int_list(text: str) -> list[int]:
    text = text.strip()
    return [int(tok) for tok in text.split(",") if tok != ""] if text else []


def _parse_scenario(text: str) -> str:
    if text not in ("ls", "lt", "ls+lt"):
        raise UsageError(f"scenario must be ls, lt or ls+lt, got {text!r}")
    return text


# key -> (default, parser, help)
KEY_SPECS: dict = {
    "seed": (42, int, "seed for every random draw in the run"),
    "identities": (20, int, "synthetic: number of identities"),
    "per_identity": (30, int, "synthetic: samples per identity"),
    "dim": (32, int, "synthetic: feature dimension"),
    "intra_class_sigma": (0.18, float, "synthetic: within-identity spread"),
    "inter_class_sigma": (0.35, float, "synthetic: identity-center spread"),
    "rotations": ([30.0], _parse_float_list, "synthetic shift: plane rotation degrees"),
    "scale": (1.5, float, "synthetic shift: isotropic scale"),
    "translation": (0.0, float, "synthetic shift: translation on every coordinate"),
    "noise_sigma": (0.05, float, "synthetic shift: observation noise"),
    "persons_per_batch": (5, int, "identities per training batch"),
    "images_per_person": (20, int, "samples per identity per batch"),
    "epochs": (40, int, "training epochs"),
    "alpha": (0.2, float, "triplet margin"),
    "lambda": (1.0, float, "weight of the target loss term"),
    "learning_rate": (0.01, float, "SGD learning rate"),
    "momentum": (0.9, float, "SGD momentum"),
    "scenario": ("ls+lt", _parse_scenario, "adaptation objective: ls, lt or ls+lt"),
    "hidden_dims": ([32, 16], _parse_int_list, "layer output sizes, last = embedding dim"),
    "normalize_output": (True, _parse_bool, "unit-normalize embeddings"),
    "whole_set_stats": (False, _parse_bool, "mining windows from the whole source set"),
    "far": ([0.01], _parse_float_list, "false-accept rates for the report"),
    "hist_bins": (40, int, "histogram bin count"),
    "hist_lo": (0.0, float, "histogram range low edge"),
    "hist_hi": (2.0, float, "histogram range high edge"),
    "source_csv": ("", str, "labeled source feature CSV"),
    "target_csv": ("", str, "target feature CSV"),
    "truth_csv": ("", str, "target ground-truth sidecar (id,label)"),
    "model_in": ("", str, "model JSON to load"),
    "model_out": ("", str, "model JSON to write"),
    "report_out": ("", str, "evaluation report JSON to write"),
    "hist_out": ("", str, "histogram CSV to write"),
    "diag_out": ("", str, "mining diagnostics CSV to write"),
    "loss_out": ("", str, "per-epoch loss CSV to write"),
}


def parse_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            key, sep, raw = stripped.partition("=")
            if not sep:
                raise UsageError(f"{path} line {lineno}: expected 'key = value'")
            key = key.strip()
            if key not in KEY_SPECS:
                raise UsageError(f"{path} line {lineno}: unknown config key {key!r}")
            values[key] = raw.strip()
    return values


def effective_config(args: argparse.Namespace) -> dict:
    """Defaults, overridden by the config file, overridden by flags."""
    cfg = {key: spec[0] for key, spec in KEY_SPECS.items()}
    if args.config:
        for key, raw in parse_config_file(args.config).items():
            cfg[key] = _coerce(key, raw)
    for key in KEY_SPECS:
        raw = getattr(args, key, None)
        if raw is not None:
            cfg[key] = _coerce(key, raw)
    return cfg


def _coerce(key: str, raw: str):
    parser = KEY_SPECS[key][1]
    try:
        return parser(raw)
    except UsageError:
        raise
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad value for {key}: {raw!r} ({exc})") from None


def _require(cfg: dict, *keys: str) -> None:
    for key in keys:
        if not cfg[key]:
            raise UsageError(f"{key} is required for this command")


def _derived_path(anchor: str, suffix: str) -> str:
    stem = anchor.rsplit(".", 1)[0] if "." in anchor.rsplit("/", 1)[-1] else anchor
    return f"{stem}_{suffix}"


def _train_config(cfg: dict, scenario: str | None = None) -> TrainConfig:
    return TrainConfig(
        persons_per_batch=cfg["persons_per_batch"],
        images_per_person=cfg["images_per_person"],
        epochs=cfg["epochs"],
        alpha=cfg["alpha"],
        lambda_=cfg["lambda"],
        learning_rate=cfg["learning_rate"],
        momentum=cfg["momentum"],
        seed=cfg["seed"],
        scenario=scenario or cfg["scenario"],
        hidden_dims=tuple(cfg["hidden_dims"]),
        normalize_output=cfg["normalize_output"],
        whole_set_stats=cfg["whole_set_stats"],
    )


def _synth_config(cfg: dict) -> SynthConfig:
    return SynthConfig(
        identities=cfg["identities"],
        per_identity=cfg["per_identity"],
        dim=cfg["dim"],
        intra_class_sigma=cfg["intra_class_sigma"],
        inter_class_sigma=cfg["inter_class_sigma"],
        rotations=tuple(cfg["rotations"]),
        scale=cfg["scale"],
        translation=cfg["translation"],
        noise_sigma=cfg["noise_sigma"],
        seed=cfg["seed"],
    )


def cmd_gen_synth(cfg: dict, args) -> int:
    _require(cfg, "source_csv", "target_csv")
    synth = _synth_config(cfg)
    synth.validate()
    source, target, truth = gen_synthetic(synth)
    truth_path = cfg["truth_csv"] or _derived_path(cfg["target_csv"], "truth.csv")
    save_feature_csv(source, cfg["source_csv"], provenance=cfg)
    save_feature_csv(target, cfg["target_csv"], provenance=cfg)
    save_truth_csv(truth, truth_path, provenance=cfg)
    print(f"wrote {cfg['source_csv']}, {cfg['target_csv']}, {truth_path}")
    return 0


def cmd_train_source(cfg: dict, args) -> int:
    _require(cfg, "source_csv", "model_out")
    source = load_feature_csv(cfg["source_csv"], domain="source")
    result = train_source(_train_config(cfg, scenario="ls"), source)
    save_model(result.net, cfg["model_out"])
    loss_path = cfg["loss_out"] or _derived_path(cfg["model_out"], "loss.csv")
    write_loss_csv(
        loss_path, loss_rows_from_history(result.loss_history, "source"), provenance=cfg
    )
    print(f"wrote {cfg['model_out']}, {loss_path}")
    return 0


def cmd_adapt(cfg: dict, args) -> int:
    _require(cfg, "source_csv", "target_csv", "model_in", "model_out")
    source = load_feature_csv(cfg["source_csv"], domain="source")
    target = load_feature_csv(cfg["target_csv"], domain="target")
    truth = load_truth_csv(cfg["truth_csv"]) if cfg["truth_csv"] else None
    init = load_model(cfg["model_in"])
    result = adapt(_train_config(cfg), source, target, init, target_truth=truth)
    save_model(result.net, cfg["model_out"])
    diag_path = cfg["diag_out"] or _derived_path(cfg["model_out"], "diagnostics.csv")
    loss_path = cfg["loss_out"] or _derived_path(cfg["model_out"], "loss.csv")
    write_diagnostics_csv(diag_path, result.diagnostics, provenance=cfg)
    write_loss_csv(
        loss_path,
        loss_rows_from_history(result.loss_history, cfg["scenario"]),
        provenance=cfg,
    )
    print(f"wrote {cfg['model_out']}, {diag_path}, {loss_path}")
    return 0


def cmd_eval(cfg: dict, args) -> int:
    _require(cfg, "model_in", "report_out")
    if cfg["target_csv"]:
        dataset = load_feature_csv(cfg["target_csv"], domain="target")
        if cfg["truth_csv"]:
            dataset = dataset.with_labels(load_truth_csv(cfg["truth_csv"]))
    elif cfg["source_csv"]:
        dataset = load_feature_csv(cfg["source_csv"], domain="source")
    else:
        raise UsageError("eval needs target_csv (with labels or truth_csv) or source_csv")
    labels = dataset.labels()
    if any(lab is None for lab in labels):
        raise UsageError("evaluation data must be labeled; provide truth_csv")
    net = load_model(cfg["model_in"])
    hist_path = cfg["hist_out"] or _derived_path(cfg["report_out"], "histogram.csv")
    report, hist = evaluate_model(
        net,
        dataset.features(),
        labels,
        fars=cfg["far"],
        hist_bins=cfg["hist_bins"],
        hist_range=(cfg["hist_lo"], cfg["hist_hi"]),
        histogram_path=hist_path,
    )
    write_histogram_csv(hist_path, [(dataset.domain, hist)], provenance=cfg)
    write_report_json(cfg["report_out"], report, provenance=cfg)
    print(f"wrote {cfg['report_out']}, {hist_path}")
    return 0


def cmd_grad_check(cfg: dict, args) -> int:
    err = run_grad_check_suite(seed=cfg["seed"], flip_sign=args.inject_sign_error)
    print(f"max_rel_err={err!r}")
    return 0 if err < GRAD_CHECK_TOLERANCE else 1


COMMANDS = {
    "gen-synth": (cmd_gen_synth, "generate the seeded synthetic source/target CSVs"),
    "train-source": (cmd_train_source, "pretrain the embedding on labeled source data"),
    "adapt": (cmd_adapt, "adapt a pretrained embedding to unlabeled target data"),
    "eval": (cmd_eval, "write a verification report for a model on a dataset"),
    "grad-check": (cmd_grad_check, "verify analytic gradients against finite differences"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualtriplet",
        description="Domain-adaptive metric learning pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_func, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", default="", help="flat key = value config file")
        for key, (default, _parser, help_text_key) in KEY_SPECS.items():
            flag = "--" + key.replace("_", "-")
            sp.add_argument(
                flag, dest=key, default=None, metavar="V",
                help=f"{help_text_key} (default: {default})",
            )
        if name == "grad-check":
            sp.add_argument(
                "--inject-sign-error", action="store_true", help=argparse.SUPPRESS
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not hasattr(args, "inject_sign_error"):
        args.inject_sign_error = False
    try:
        cfg = effective_config(args)
        return COMMANDS[args.command][0](cfg, args)
    except MisalignmentError as exc:
        print(f"misalignment: {exc}", file=sys.stderr)
        return 1
    except NonFiniteError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1
    except (UsageError, CsvFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
