"""Command line entry point.

Subcommands cover the full pipeline: generate data, fit a model, score
it against ground truth, sweep the decision rule, and emit replacement
decisions.  Every run that writes files also writes a manifest with the
resolved settings, library versions, and input hashes so it can be
reproduced exactly.

Exit codes: 0 success, 1 usage error, 2 bad data or file, 3 numeric
failure during fitting or evaluation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, baselines, dataio, datagen, ebm, evaluation, maintenance
from .backend import active_backend
from .data import NormalizationStats
from .errors import EbsurvError, NonFiniteError
from .training import TrainConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    """Bad flags or config values; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- settings resolution ---------------------------------------------------


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _read_config(path: str) -> dict:
    """key=value lines; blank lines and # comments are skipped."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read config file: {e}")
    out = {}
    for i, line in enumerate(lines, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise UsageError(f"{path}:{i}: expected key=value, got {s!r}")
        key, value = s.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _resolve(args, fields: list) -> dict:
    """Merge flag values over config-file values over defaults.

    ``fields`` holds (name, caster, default) triples; a flag left at None
    falls through to the config file, then to the default.
    """
    config = _read_config(args.config) if getattr(args, "config", None) else {}
    known = {name for name, _, _ in fields}
    for key in config:
        if key not in known:
            raise UsageError(f"unknown config key {key!r}")
    resolved = {}
    for name, caster, default in fields:
        flag = getattr(args, name, None)
        if flag is not None:
            resolved[name] = flag
        elif name in config:
            try:
                resolved[name] = caster(config[name])
            except ValueError as e:
                raise UsageError(f"config key {name}: {e}")
        else:
            resolved[name] = default
    return resolved


def _resolve_seed(value) -> int:
    """Flag or config beats the EBSURV_SEED environment default."""
    if value is not None:
        return int(value)
    env = os.environ.get("EBSURV_SEED", "")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"EBSURV_SEED is not an integer: {env!r}")
    return 0


def _parse_floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}")


def _parse_ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}")


def _integration(resolved, rng_seed: int):
    """Integration spec plus the rng it needs (None for trapezoid)."""
    method = resolved["integration"]
    if method not in ("trapezoid", "mc"):
        raise UsageError(f"integration must be trapezoid or mc, got {method!r}")
    integ = ebm.Integration(method, resolved["n_points"])
    rng = np.random.default_rng(rng_seed) if method == "mc" else None
    return integ, rng


# -- manifest --------------------------------------------------------------


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(path, command: str, settings: dict, inputs: list, outputs: list):
    doc = {
        "command": command,
        "argv": sys.argv[1:],
        "settings": {k: (list(v) if isinstance(v, tuple) else v)
                     for k, v in settings.items()},
        "backend": active_backend(),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "ebsurv": __version__,
        },
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_csv(path, header: list, rows: list):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# -- subcommands -----------------------------------------------------------


def cmd_simulate(args) -> int:
    fields = [
        ("kind", str, "weibull"),
        ("n", int, 1000),
        ("covariate_dim", int, 100),
        ("censor_rate", float, 0.74),
        ("fractions", _parse_floats, (0.7, 0.1, 0.2)),
        ("seed", int, None),
    ]
    r = _resolve(args, fields)
    r["seed"] = _resolve_seed(r["seed"])
    if r["kind"] not in ("weibull", "fleet"):
        raise UsageError(f"kind must be weibull or fleet, got {r['kind']!r}")
    if r["kind"] == "weibull":
        data = datagen.gen_sim_dataset(datagen.SimConfig(r["n"], seed=r["seed"]))
    else:
        data = datagen.gen_fleet_like(datagen.FleetConfig(
            r["n"], covariate_dim=r["covariate_dim"], censor_rate=r["censor_rate"],
            seed=r["seed"]))
    # split rng offset keeps the shuffle independent of the generator draws
    splits = datagen.split_dataset(data, r["fractions"], seed=r["seed"] + 1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = ["train.csv", "val.csv", "test.csv"]
    for name, part in zip(names, splits):
        dataio.write_dataset(part, out / name)
    r["realized_censor_rate"] = data.censoring_rate
    _write_manifest(out / "manifest.json", "simulate", r, [],
                    [out / n for n in names])
    print(f"wrote {len(splits[0])}/{len(splits[1])}/{len(splits[2])} records to {out}")
    print(f"censoring rate {data.censoring_rate:.3f}")
    return EXIT_OK


_TRAIN_DEFAULTS = {
    "ebm": {"nodes": 64, "dropout": 0.0, "lr": 0.02, "n_grid": 5},
    "pch": {"nodes": 32, "dropout": 0.2, "lr": 0.005, "n_grid": 5},
    "pmf": {"nodes": 32, "dropout": 0.2, "lr": 0.005, "n_grid": 5},
}


def cmd_train(args) -> int:
    kind = args.model
    if kind not in ("ebm", "pch", "pmf"):
        raise UsageError(f"model must be ebm, pch, or pmf, got {kind!r}")
    d = _TRAIN_DEFAULTS[kind]
    fields = [
        ("nodes", int, d["nodes"]),
        ("hidden_layers", int, 2),
        ("dropout", float, d["dropout"]),
        ("lr", float, d["lr"]),
        ("n_samples", int, 50),
        ("n_grid", int, d["n_grid"]),
        ("tail_factor", float, 1.2),
        ("batch_size", int, 64),
        ("max_epochs", int, 200),
        ("patience", int, 20),
        ("val_points", int, 20),
        ("normalize", _parse_bool, True),
        ("seed", int, None),
    ]
    r = _resolve(args, fields)
    r["seed"] = _resolve_seed(r["seed"])
    if args.no_normalize:
        r["normalize"] = False
    data_dir = Path(args.data)
    train_set = dataio.read_dataset(data_dir / "train.csv")
    val_set = dataio.read_dataset(data_dir / "val.csv")
    if len(train_set) == 0 or len(val_set) == 0:
        raise EbsurvError("train and validation splits must be nonempty")
    norm = NormalizationStats.fit(train_set.x) if r["normalize"] else None
    cfg = TrainConfig(
        n_samples=r["n_samples"], learning_rate=r["lr"], batch_size=r["batch_size"],
        max_epochs=r["max_epochs"], patience=r["patience"], seed=r["seed"],
        val_points=r["val_points"],
    )
    t_max = train_set.max_tau
    if kind == "ebm":
        model = ebm.initialize_energy_model(
            train_set.covariate_dim, t_max, nodes_per_layer=r["nodes"],
            hidden_layers=r["hidden_layers"], dropout_rate=r["dropout"],
            tail_factor=r["tail_factor"], norm=norm, seed=r["seed"])
        model, history = ebm.train(train_set, val_set, model, cfg)
    else:
        model = baselines.initialize_baseline(
            kind, train_set.covariate_dim, t_max, n_grid=r["n_grid"],
            nodes_per_layer=r["nodes"], hidden_layers=r["hidden_layers"],
            dropout_rate=r["dropout"], norm=norm, seed=r["seed"])
        model, history = baselines.train_baseline(model, train_set, val_set, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.save_model(model, out / "model.json")
    _write_csv(out / "fig3_valloss.csv", ["epoch", "train_loss", "val_loss"],
               [[e, repr(tr), repr(vl)] for e, (tr, vl)
                in enumerate(zip(history.train_loss, history.val_loss))])
    r["model"] = kind
    inputs = [data_dir / "train.csv", data_dir / "val.csv"]
    if args.config:
        inputs.append(args.config)
    _write_manifest(out / "manifest.json", "train", r, inputs,
                    [out / "model.json", out / "fig3_valloss.csv"])
    best = history.val_loss[history.best_epoch]
    print(f"trained {kind} for {history.n_epochs} epochs "
          f"(best epoch {history.best_epoch}, val loss {best:.4f})")
    return EXIT_OK


def _validation_loss(model, data, val_points: int) -> float:
    if isinstance(model, ebm.EnergyModel):
        return ebm.validation_nll(model, data, val_points)
    return baselines.baseline_validation_nll(model, data)


def cmd_evaluate(args) -> int:
    fields = [
        ("integration", str, "trapezoid"),
        ("n_points", int, 20),
        ("trap_points", _parse_ints, (10, 20, 200)),
        ("mc_points", _parse_ints, (1000,)),
        ("reps", int, 20),
        ("grid_size", int, 20),
        ("curve_lambda", float, 2.0),
        ("curve_k", float, 3.0),
        ("val_points", int, 20),
        ("t_max", float, None),
        ("seed", int, None),
    ]
    r = _resolve(args, fields)
    r["seed"] = _resolve_seed(r["seed"])
    if args.oracle:
        if r["t_max"] is None:
            raise UsageError("--oracle needs --t-max for the comparison window")
        model = evaluation.WeibullOracle(t_max=r["t_max"])
        covariate_dim = 2
    else:
        if not args.model:
            raise UsageError("provide --model FILE or --oracle")
        model = dataio.load_model(args.model)
        covariate_dim = (model.covariate_dim
                         if isinstance(model, ebm.EnergyModel)
                         else model.cfg.input_dim)
    t_max = float(model.t_max)
    integ, rng = _integration(r, r["seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary, outputs = [], []

    if args.data:
        if args.oracle:
            raise UsageError("the closed-form reference has no likelihood to report")
        data = dataio.read_dataset(args.data)
        val_loss = _validation_loss(model, data, r["val_points"])
        summary.append(("val_loss", val_loss))
        print(f"validation loss {val_loss:.4f} on {len(data)} records")

    if covariate_dim == 2:
        report = evaluation.ks_report(
            model, t_max, grid_size=r["grid_size"], integration=integ, rng=rng)
        summary.append(("mean_ks", report.mean))
        worst = report.worst
        print(f"mean KS {report.mean:.4f} over {len(report.cells)} cells "
              f"(worst {worst.ks:.4f} at lam={worst.lam:.2f} k={worst.k:.2f})")
        ts = np.linspace(0.0, t_max, 100)
        x = np.array([r["curve_lambda"], r["curve_k"]])
        pred = model.survival_curve(ts, x, integ, rng)
        truth = datagen.weibull_survival(
            ts, datagen.WeibullParams(r["curve_lambda"], r["curve_k"]))
        _write_csv(out / "fig5_curves.csv", ["t", "true_survival", "model_survival"],
                   [[repr(float(a)), repr(float(b)), repr(float(c))]
                    for a, b, c in zip(ts, truth, pred)])
        outputs.append(out / "fig5_curves.csv")
        if not args.no_convergence:
            points = evaluation.integration_convergence_report(
                model, t_max, trap_points=r["trap_points"], mc_points=r["mc_points"],
                n_reps=r["reps"], seed=r["seed"], grid_size=r["grid_size"])
            _write_csv(out / "fig4_convergence.csv",
                       ["method", "n_points", "rep", "mean_ks"],
                       [[p.method, p.n_points, p.rep, repr(p.mean_ks)] for p in points])
            outputs.append(out / "fig4_convergence.csv")
    elif not args.data:
        raise UsageError(
            "nothing to evaluate: model has no closed-form truth and no --data given")

    if not summary:
        raise UsageError("no evaluation was performed")
    _write_csv(out / "summary.csv", ["metric", "value"],
               [[k, repr(float(v))] for k, v in summary])
    outputs.append(out / "summary.csv")
    inputs = [p for p in (args.model, args.data, args.config) if p]
    _write_manifest(out / "manifest.json", "evaluate", r, inputs, outputs)
    return EXIT_OK


def cmd_roc(args) -> int:
    fields = [
        ("horizons", _parse_floats, (0.25, 0.5)),
        ("integration", str, "trapezoid"),
        ("n_points", int, 20),
        ("seed", int, None),
    ]
    r = _resolve(args, fields)
    r["seed"] = _resolve_seed(r["seed"])
    if any(h <= 0 for h in r["horizons"]):
        raise UsageError("horizons must be positive")
    model = dataio.load_model(args.model)
    data = dataio.read_dataset(args.data)
    integ, rng = _integration(r, r["seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    roc_rows, auc_rows = [], []
    for h in r["horizons"]:
        curve = evaluation.roc_curve(model, data, h, integration=integ, rng=rng)
        area = evaluation.auc(curve)
        auc_rows.append([repr(float(h)), repr(area)])
        for j in range(curve.thresholds.size):
            roc_rows.append([repr(float(h)), repr(float(curve.thresholds[j])),
                             repr(float(curve.fpr[j])), repr(float(curve.tpr[j]))])
        print(f"horizon={h:g} auc={area:.4f} "
              f"(failures={curve.n_pos} survivors={curve.n_neg} "
              f"excluded={curve.n_excluded})")
    _write_csv(out / "fig6_roc.csv", ["horizon", "threshold", "fpr", "tpr"], roc_rows)
    _write_csv(out / "auc.csv", ["horizon", "auc"], auc_rows)
    _write_manifest(out / "manifest.json", "roc", r,
                    [args.model, args.data],
                    [out / "fig6_roc.csv", out / "auc.csv"])
    return EXIT_OK


def cmd_decide(args) -> int:
    fields = [
        ("horizon", float, None),
        ("threshold", float, None),
        ("t_now", float, 0.0),
        ("integration", str, "trapezoid"),
        ("n_points", int, 20),
        ("seed", int, None),
    ]
    r = _resolve(args, fields)
    r["seed"] = _resolve_seed(r["seed"])
    if r["horizon"] is None or not (r["horizon"] > 0):
        raise UsageError("--horizon must be a positive number")
    if r["threshold"] is None or not (0.0 < r["threshold"] < 1.0):
        raise UsageError("--threshold must lie strictly inside (0, 1)")
    model = dataio.load_model(args.model)
    data = dataio.read_dataset(args.data)
    cfg = maintenance.DecisionConfig(r["horizon"], r["threshold"], r["t_now"])
    integ, rng = _integration(r, r["seed"])
    decisions = maintenance.decide_batch(model, data, cfg, integ, rng)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    maintenance.write_decisions(out, decisions)
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "decide", r,
                    [args.model, args.data], [out])
    n_replace = sum(d.replace for d in decisions)
    print(f"replace {n_replace} of {len(decisions)} units "
          f"(horizon {r['horizon']:g}, threshold {r['threshold']:g})")
    return EXIT_OK


# -- wiring ----------------------------------------------------------------


def _add_common(p, *names):
    if "config" in names:
        p.add_argument("--config", help="key=value file with default settings")
    if "seed" in names:
        p.add_argument("--seed", type=int, help="rng seed (default: $EBSURV_SEED or 0)")
    if "integration" in names:
        p.add_argument("--integration", choices=["trapezoid", "mc"],
                       help="quadrature for survival integrals (default trapezoid)")
        p.add_argument("--n-points", type=int, dest="n_points",
                       help="points per integral (default 20)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ebsurv",
                     description="Energy-based survival modeling toolkit")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("simulate", help="generate a synthetic dataset and split it")
    p.add_argument("--kind", choices=["weibull", "fleet"], help="generator (default weibull)")
    p.add_argument("--n", type=int, help="number of subjects (default 1000)")
    p.add_argument("--covariate-dim", type=int, dest="covariate_dim",
                   help="fleet covariate count (default 100)")
    p.add_argument("--censor-rate", type=float, dest="censor_rate",
                   help="fleet censoring target (default 0.74)")
    p.add_argument("--fractions", type=_parse_floats,
                   help="train,val,test fractions (default 0.7,0.1,0.2)")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p, "config", "seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit a survival model on a data directory")
    p.add_argument("--model", required=True, choices=["ebm", "pch", "pmf"],
                   help="model family")
    p.add_argument("--data", required=True, help="directory with train.csv and val.csv")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--nodes", type=int, help="hidden width")
    p.add_argument("--hidden-layers", type=int, dest="hidden_layers")
    p.add_argument("--dropout", type=float, help="dropout rate in [0, 1)")
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--n-samples", type=int, dest="n_samples",
                   help="Monte Carlo points per training integral (default 50)")
    p.add_argument("--n-grid", type=int, dest="n_grid",
                   help="intervals for discrete-time models (default 5)")
    p.add_argument("--tail-factor", type=float, dest="tail_factor",
                   help="support extension past the last observed time (default 1.2)")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--val-points", type=int, dest="val_points",
                   help="trapezoid points for the validation loss (default 20)")
    p.add_argument("--no-normalize", action="store_true",
                   help="skip min-max feature normalization")
    _add_common(p, "config", "seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate",
                       help="score survival curves against closed-form truth")
    p.add_argument("--model", help="trained model file")
    p.add_argument("--oracle", action="store_true",
                   help="evaluate the closed-form reference instead of a model")
    p.add_argument("--t-max", type=float, dest="t_max",
                   help="comparison window for --oracle")
    p.add_argument("--data", help="dataset CSV for a validation loss")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--trap-points", type=_parse_ints, dest="trap_points",
                   help="trapezoid settings for the convergence report")
    p.add_argument("--mc-points", type=_parse_ints, dest="mc_points",
                   help="Monte Carlo settings for the convergence report")
    p.add_argument("--reps", type=int, help="repetitions per Monte Carlo setting")
    p.add_argument("--grid-size", type=int, dest="grid_size",
                   help="cells per parameter axis (default 20)")
    p.add_argument("--curve-lambda", type=float, dest="curve_lambda",
                   help="scale for the example curve (default 2.0)")
    p.add_argument("--curve-k", type=float, dest="curve_k",
                   help="shape for the example curve (default 3.0)")
    p.add_argument("--val-points", type=int, dest="val_points")
    p.add_argument("--no-convergence", action="store_true",
                   help="skip the quadrature convergence sweep")
    _add_common(p, "config", "seed", "integration")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("roc", help="sweep the replacement rule at fixed horizons")
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--data", required=True, help="dataset CSV to score")
    p.add_argument("--horizons", type=_parse_floats,
                   help="comma-separated horizons (default 0.25,0.5)")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p, "config", "seed", "integration")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("decide", help="emit replacement decisions for a fleet")
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--data", required=True, help="dataset CSV with current units")
    p.add_argument("--horizon", type=float, help="planning horizon")
    p.add_argument("--threshold", type=float, help="replace below this survival")
    p.add_argument("--t-now", type=float, dest="t_now",
                   help="current age recorded in the manifest (default 0)")
    p.add_argument("--out", required=True, help="decisions CSV path")
    _add_common(p, "config", "seed", "integration")
    p.set_defaults(func=cmd_decide)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_usage(sys.stderr)
            print("error: a subcommand is required", file=sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EbsurvError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
