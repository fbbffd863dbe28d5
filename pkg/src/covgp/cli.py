"""Command-line driver: ``covgp synth | train | predict | eval``.

Every command reads one YAML config (defaults below reproduce the synthetic
experiment at full size) and writes into an output directory::

    covgp synth --out run            # run/train.csv, run/test.csv, run/manifest.yaml
    covgp train --out run --loss mm  # run/model-mm-000.json ..., run/report-mm.txt
    covgp eval  --out run --loss mm  # run/eval-mm.csv, run/summary-mm.txt, run/violin-mm.csv
    covgp predict --out run --model run/model-mm-000.json --input points.csv

Files are written atomically and depend only on the config, so two runs of
the same config produce byte-identical outputs.
"""

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys

import numpy as np
import yaml

from covgp.bayesopt import BayesOptConfig, SearchSpace
from covgp.datagen import SyntheticSpec, _atomic_write, load_dataset, load_features, sample_gp, save_dataset, split
from covgp.kernel import MaternParams
from covgp.kriging import Dataset, PosteriorMoments, predict
from covgp.metrics import evaluate
from covgp.neighbors import build_index
from covgp.objective import ConfidenceLevels, z_score
from covgp.optimizer import (
    PAPER_LEVELS,
    MultipliersConfig,
    TrainingError,
    sample_batch,
    train_constrained,
    train_unconstrained,
)

LOSS_CHOICES = ("mse", "lool", "mm")
EVAL_COLUMNS = ("trial", "nu_hat", "rho_hat", "mae", "rmse", "cov", "crps", "int")
MODEL_FORMAT = "covgp-model/1"

DEFAULT_CONFIG = {
    "seed": 0,
    "out": "run",
    "loss": "mm",
    "trials": 30,
    "k": 50,
    "batch_size": 1024,
    "eval_alpha": 0.95,
    "center": False,
    "levels": list(PAPER_LEVELS),
    "data": {
        "train_file": None,
        "test_file": None,
        "train_fraction": 0.5,
        "synthetic": {
            "n_points": 10000,
            "nu": 0.425,
            "rho": 0.675,
            "gamma2": 1.0,
            "tau2": 1e-10,
            "domain": [0.0, 1.0],
            "dims": 1,
            "layout": "random",
        },
    },
    # gamma2 is searched when given as [lower, upper]
    "space": {"nu": [0.05, 2.5], "rho": [0.01, 5.0], "gamma2": 1.0, "tau2": 1e-10},
    "bo": {"n_initial": 5, "n_iterations": 30, "acquisition": "ei", "exploration": 0.01},
    "mm": {
        "beta0": 1.0,
        "r": 2.0,
        "n_outer": 5,
        "lambda0": None,
        "warm_start": True,
        "inner": {"n_initial": 3, "n_iterations": 10, "acquisition": "ei", "exploration": 0.01},
    },
}

# keys whose default is None or a scalar but which accept other shapes
_FREE_KEYS = {("data", "train_file"), ("data", "test_file"), ("mm", "lambda0"), ("space", "gamma2")}


class ConfigError(ValueError):
    pass


def _merge(base, override, path=()):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = path + (key,)
        if key not in base:
            raise ConfigError(f"unknown config key {'.'.join(where)!r}")
        if isinstance(base[key], dict) and where not in _FREE_KEYS:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {'.'.join(where)!r} must be a mapping")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path=None, **overrides):
    """Defaults, updated by the YAML file at ``path``, then by non-None ``overrides``.

    ``path`` may also be a manifest or model file written by an earlier run.
    """
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        if "config" in user and ("command" in user or "format" in user):
            # a manifest or model file: rerun with its embedded config
            user = user["config"]
        cfg = _merge(cfg, user)
    cfg = _merge(cfg, {k: v for k, v in overrides.items() if v is not None})
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["loss"] not in LOSS_CHOICES:
        raise ConfigError(f"loss must be one of {LOSS_CHOICES}, got {cfg['loss']!r}")
    for key in ("trials", "k", "batch_size"):
        if not isinstance(cfg[key], int) or cfg[key] < 1:
            raise ConfigError(f"{key} must be a positive integer, got {cfg[key]!r}")
    if not 0 < cfg["eval_alpha"] < 1:
        raise ConfigError(f"eval_alpha must lie in (0, 1), got {cfg['eval_alpha']}")
    # building the typed objects runs their own checks
    _space(cfg)
    _multipliers(cfg, 0)
    _bo(cfg["bo"], 0)
    if cfg["data"]["train_file"] is None:
        _synthetic_spec(cfg)


def config_hash(cfg):
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _synthetic_spec(cfg):
    s = cfg["data"]["synthetic"]
    params = MaternParams(s["nu"], s["rho"], s["gamma2"], s["tau2"])
    return SyntheticSpec(
        n_points=int(s["n_points"]),
        params=params,
        domain=tuple(float(v) for v in s["domain"]),
        dims=int(s["dims"]),
        seed=int(cfg["seed"]),
        layout=s["layout"],
    )


def _space(cfg):
    s = cfg["space"]
    return SearchSpace.matern(nu=tuple(s["nu"]), rho=tuple(s["rho"]), gamma2=s["gamma2"], tau2=s["tau2"])


def _bo(section, seed):
    return BayesOptConfig(
        n_initial=int(section["n_initial"]),
        n_iterations=int(section["n_iterations"]),
        acquisition=section["acquisition"],
        exploration=float(section["exploration"]),
        seed=int(seed),
    )


def _multipliers(cfg, seed):
    m = cfg["mm"]
    return MultipliersConfig(
        levels=ConfidenceLevels(tuple(cfg["levels"])),
        lambda0=m["lambda0"],
        beta0=float(m["beta0"]),
        r=float(m["r"]),
        n_outer=int(m["n_outer"]),
        inner=_bo(m["inner"], seed),
        warm_start=bool(m["warm_start"]),
    )


def trial_seed(seed, trial):
    return int(np.random.SeedSequence([int(seed), int(trial)]).generate_state(1)[0])


def _paths(cfg):
    out = cfg["out"]
    data = cfg["data"]
    return (
        data["train_file"] or os.path.join(out, "train.csv"),
        data["test_file"] or os.path.join(out, "test.csv"),
    )


def _model_path(cfg, trial):
    return os.path.join(cfg["out"], f"model-{cfg['loss']}-{trial:03d}.json")


def _write(path, text):
    _atomic_write(path, text)


def _dump_yaml(obj):
    return yaml.safe_dump(obj, sort_keys=True, default_flow_style=False)


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _fmt(v):
    return repr(float(v))


def _sig3(v):
    """Three significant digits, exponent form outside [0.1, 1000)."""
    v = float(v)
    if not math.isfinite(v):
        return str(v)
    if v == 0 or 0.1 <= abs(v) < 1000:
        return f"{v:.3g}"
    mant, exp = f"{v:.2e}".split("e")
    return f"{mant}e{int(exp)}"


# ---------------------------------------------------------------- commands


def cmd_synth(cfg):
    spec = _synthetic_spec(cfg)
    data = sample_gp(spec)
    train, test = split(data, cfg["data"]["train_fraction"], cfg["seed"])
    out = cfg["out"]
    save_dataset(train, os.path.join(out, "train.csv"))
    save_dataset(test, os.path.join(out, "test.csv"))
    manifest = {"command": "synth", "config": cfg, "config_sha256": config_hash(cfg),
                "train_rows": train.n, "test_rows": test.n}
    _write(os.path.join(out, "manifest.yaml"), _dump_yaml(manifest))
    return [os.path.join(out, name) for name in ("train.csv", "test.csv", "manifest.yaml")]


def _load_train(cfg):
    train_path, _ = _paths(cfg)
    train = load_dataset(train_path)
    offset = float(np.mean(train.responses)) if cfg["center"] else 0.0
    if offset:
        train = Dataset(train.features, train.responses - offset)
    return train, offset


def _train_once(cfg, train, index, trial):
    seed = trial_seed(cfg["seed"], trial)
    if cfg["batch_size"] > train.n:
        raise ConfigError(f"batch_size {cfg['batch_size']} exceeds {train.n} training rows")
    batch = sample_batch(train.n, cfg["batch_size"], seed)
    space = _space(cfg)
    if cfg["loss"] == "mm":
        result = train_constrained(train, index, batch, space, cfg["k"], _multipliers(cfg, seed))
    else:
        levels = ConfidenceLevels(tuple(cfg["levels"]))
        result = train_unconstrained(train, index, batch, cfg["loss"], space, cfg["k"], _bo(cfg["bo"], seed), levels)
    return seed, result


def _report_block(trial, seed, loss, theta, trace, evaluations, failed, error=None):
    lines = [f"trial {trial}  seed {seed}  loss {loss}"]
    if theta is not None:
        lines.append("theta  " + "  ".join(f"{k}={_fmt(v)}" for k, v in theta.items()))
    lines.append(f"objective evaluations {evaluations} ({failed} failed)")
    if error:
        lines.append(f"FAILED: {error}")
    lines.append(f"{'n':>3}  {'beta':>8}  {'Q':>14}  lambda / residual C - alpha")
    for n, step in enumerate(trace, start=1):
        lam = " ".join(f"{v:+.4e}" for v in step["lambda_used"]) or "-"
        res = " ".join(f"{v:+.4e}" for v in step["residual"]) or "-"
        lines.append(f"{n:>3}  {step['beta_used']:>8.4g}  {step['q']:>14.6f}  lambda   {lam}")
        lines.append(f"{'':>3}  {'':>8}  {'':>14}  residual {res}")
    return "\n".join(lines) + "\n"


def cmd_train(cfg):
    train, offset = _load_train(cfg)
    if cfg["k"] >= train.n:
        raise ConfigError(f"k = {cfg['k']} needs more than {train.n} training rows")
    index = build_index(train.features)
    digest = config_hash(cfg)
    blocks, written = [], []
    report_path = os.path.join(cfg["out"], f"report-{cfg['loss']}.txt")
    header = f"training report  loss {cfg['loss']}  trials {cfg['trials']}  config {digest}\n\n"
    for trial in range(cfg["trials"]):
        try:
            seed, result = _train_once(cfg, train, index, trial)
        except TrainingError as exc:
            trace = [s.as_dict() for s in exc.trace]
            seed = trial_seed(cfg["seed"], trial)
            partial = {"format": MODEL_FORMAT, "status": "failed", "error": str(exc), "trial": trial,
                       "seed": seed, "loss": cfg["loss"], "trace": trace, "config_sha256": digest}
            _write(_model_path(cfg, trial).replace(".json", ".failed.json"), _dump_json(partial))
            blocks.append(_report_block(trial, seed, cfg["loss"], None, trace, "?", "?", str(exc)))
            _write(report_path, header + "\n".join(blocks))
            raise
        body = result.as_dict()
        model = {
            "format": MODEL_FORMAT,
            "status": "ok",
            "trial": trial,
            "seed": seed,
            "loss": cfg["loss"],
            "theta": body["theta"],
            "offset": offset,
            "k": cfg["k"],
            "trace": body["trace"],
            "objective_evaluations": body["objective_evaluations"],
            "failed_evaluations": body["failed_evaluations"],
            "config_sha256": digest,
            "config": cfg,
        }
        path = _model_path(cfg, trial)
        _write(path, _dump_json(model))
        written.append(path)
        blocks.append(_report_block(trial, seed, cfg["loss"], body["theta"], body["trace"],
                                    body["objective_evaluations"], body["failed_evaluations"]))
    _write(report_path, header + "\n".join(blocks))
    return written + [report_path]


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        model = json.load(fh)
    if model.get("format") != MODEL_FORMAT or model.get("status") != "ok":
        raise ValueError(f"{path}: not a trained model file")
    return model


def _model_predict(model, train, index, Z):
    theta = MaternParams(**model["theta"])
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != train.dim:
        raise ValueError(f"input has {Z.shape[-1]} feature columns, the training data has {train.dim}")
    m = predict(Z, train, index, model["k"], theta)
    return m.mean + model["offset"], m.variance


def _shifted_train(cfg, model):
    train_path, _ = _paths(cfg)
    train = load_dataset(train_path)
    if model["offset"]:
        train = Dataset(train.features, train.responses - model["offset"])
    return train


def cmd_predict(cfg, model_path, input_path, output_path=None):
    model = load_model(model_path)
    train = _shifted_train(cfg, model)
    Z = load_features(input_path)
    if Z.shape[1] != train.dim:
        raise ValueError(f"{input_path} has {Z.shape[1]} feature columns, the training data has {train.dim}")
    mean, var = _model_predict(model, train, build_index(train.features), Z)
    z = z_score(cfg["eval_alpha"])
    sd = np.sqrt(var)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["mean", "variance", "lower", "upper"])
    for row in zip(mean, var, mean - z * sd, mean + z * sd):
        writer.writerow([_fmt(v) for v in row])
    output_path = output_path or os.path.join(cfg["out"], "predictions.csv")
    _write(output_path, buf.getvalue())
    return [output_path]


def cmd_eval(cfg):
    _, test_path = _paths(cfg)
    test = load_dataset(test_path)
    rows = []
    fitted = {}
    for trial in range(cfg["trials"]):
        path = _model_path(cfg, trial)
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing model file {path}")
        model = load_model(path)
        if model["offset"] not in fitted:
            train = _shifted_train(cfg, model)
            fitted[model["offset"]] = (train, build_index(train.features))
        train, index = fitted[model["offset"]]
        mean, var = _model_predict(model, train, index, test.features)
        rep = evaluate(PosteriorMoments(mean, var), test.responses, cfg["eval_alpha"])
        rows.append([trial, model["theta"]["nu"], model["theta"]["rho"],
                     rep.mae, rep.rmse, rep.cov, rep.crps, rep.int_score])

    values = np.array([r[1:] for r in rows], dtype=float)
    mean = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1) if len(rows) > 1 else np.zeros(values.shape[1])

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVAL_COLUMNS)
    for r in rows:
        writer.writerow([r[0]] + [_fmt(v) for v in r[1:]])
    writer.writerow(["mean"] + [_fmt(v) for v in mean])
    writer.writerow(["sd"] + [_fmt(v) for v in sd])

    labels = ("Estimated nu", "Estimated rho", "MAE", "RMSE", "COV", "CRPS", "INT")
    summary = [f"{'':<14}{cfg['loss'].upper()} ({len(rows)} trials, alpha = {cfg['eval_alpha']})"]
    for label, m, s in zip(labels, mean, sd):
        summary.append(f"{label:<14}{_sig3(m)} ± {_sig3(s)}")

    long = io.StringIO()
    lw = csv.writer(long, lineterminator="\n")
    lw.writerow(["loss", "trial", "metric", "value"])
    for r in rows:
        for name, v in zip(EVAL_COLUMNS[1:], r[1:]):
            lw.writerow([cfg["loss"], r[0], name, _fmt(v)])

    out = cfg["out"]
    paths = [os.path.join(out, f"{stem}-{cfg['loss']}.{ext}")
             for stem, ext in (("eval", "csv"), ("summary", "txt"), ("violin", "csv"))]
    _write(paths[0], buf.getvalue())
    _write(paths[1], "\n".join(summary) + "\n")
    _write(paths[2], long.getvalue())
    return paths


# ---------------------------------------------------------------- entry point


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config; omitted keys take the built-in defaults")
    common.add_argument("--seed", type=int, help="base seed (data, batches and optimizer)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--loss", choices=LOSS_CHOICES, help="training loss")
    common.add_argument("--trials", type=int, help="number of independent training trials")

    parser = argparse.ArgumentParser(prog="covgp", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="sample a synthetic dataset and split it")
    sub.add_parser("train", parents=[common], help="train hyperparameters, one model file per trial")
    p = sub.add_parser("predict", parents=[common], help="predictive mean, variance and interval")
    p.add_argument("--model", required=True, help="model JSON written by train")
    p.add_argument("--input", required=True, help="CSV with columns f0..f{d-1} (a y column is ignored)")
    p.add_argument("--output", help="predictions CSV (default OUT/predictions.csv)")
    sub.add_parser("eval", parents=[common], help="score every trial's model on the test split")
    sub.add_parser("show-config", parents=[common], help="print the effective config as YAML")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out, loss=args.loss, trials=args.trials)
        if args.command == "synth":
            paths = cmd_synth(cfg)
        elif args.command == "train":
            paths = cmd_train(cfg)
        elif args.command == "predict":
            paths = cmd_predict(cfg, args.model, args.input, args.output)
        elif args.command == "eval":
            paths = cmd_eval(cfg)
        else:
            sys.stdout.write(_dump_yaml(cfg))
            return 0
    except Exception as exc:  # noqa: BLE001 - reported as a one-line error
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"covgp {args.command}: error: {msg}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
