"""Dataset CSV round trips and JSON model persistence.

The dataset format is a header row ``id,time,event,x0,...,x{d-1}``
followed by one row per record.  Models serialize to a single JSON
document tagged with a format version and a model kind; loading
validates both before rebuilding the network.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .baselines import DiscreteGrid, PchModel, PmfModel
from .data import NormalizationStats, SurvivalData
from .ebm import EnergyModel
from .errors import DataFormatError, ShapeError
from .nn import MlpConfig, ParameterSet

FORMAT_VERSION = 1


def write_dataset(data: SurvivalData, path) -> None:
    """Write records with full-precision floats."""
    d = data.covariate_dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "time", "event"] + [f"x{j}" for j in range(d)])
        for i in range(len(data)):
            writer.writerow(
                [int(data.ids[i]), repr(float(data.tau[i])), int(data.delta[i])]
                + [repr(float(v)) for v in data.x[i]]
            )


def _parse_float(text: str, line: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"line {line}: column {col} is not a number: {text!r}")
    if not math.isfinite(v):
        raise DataFormatError(f"line {line}: column {col} is not finite: {text!r}")
    return v


def read_dataset(path) -> SurvivalData:
    """Parse and validate a dataset CSV; errors carry line numbers."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError("empty file, expected a header row")
    header = rows[0]
    if len(header) < 4 or header[:3] != ["id", "time", "event"]:
        raise DataFormatError(
            "line 1: header must start with id,time,event and at least one covariate"
        )
    d = len(header) - 3
    if header[3:] != [f"x{j}" for j in range(d)]:
        raise DataFormatError("line 1: covariate columns must be named x0, x1, ...")
    ids, tau, delta, xs = [], [], [], []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataFormatError(
                f"line {i}: expected {len(header)} columns, got {len(row)}"
            )
        try:
            ids.append(int(row[0]))
        except ValueError:
            raise DataFormatError(f"line {i}: column id is not an integer: {row[0]!r}")
        t = _parse_float(row[1], i, "time")
        if t < 0:
            raise DataFormatError(f"line {i}: column time is negative: {row[1]!r}")
        tau.append(t)
        if row[2] not in ("0", "1"):
            raise DataFormatError(f"line {i}: column event must be 0 or 1: {row[2]!r}")
        delta.append(int(row[2]))
        xs.append([_parse_float(v, i, header[3 + j]) for j, v in enumerate(row[3:])])
    return SurvivalData(
        ids=np.asarray(ids, dtype=np.int64),
        x=np.asarray(xs, dtype=np.float64).reshape(len(ids), d),
        tau=np.asarray(tau, dtype=np.float64),
        delta=np.asarray(delta, dtype=np.int8),
    )


def normalize_features(train: SurvivalData, *others: SurvivalData):
    """Min-max scale covariates using statistics from the training split.

    Returns the transformed datasets in the given order followed by the
    fitted stats.  Training features land in [0, 1]; other splits use
    the same affine map and may fall outside it.
    """
    stats = NormalizationStats.fit(train.x)

    def scaled(data: SurvivalData) -> SurvivalData:
        return SurvivalData(ids=data.ids, x=stats.apply(data.x),
                            tau=data.tau, delta=data.delta)

    return (scaled(train), *[scaled(d) for d in others], stats)


# -- model persistence ----------------------------------------------------


def _norm_to_json(norm: NormalizationStats | None):
    if norm is None:
        return None
    return {"min": [repr(float(v)) for v in norm.min],
            "max": [repr(float(v)) for v in norm.max]}


def _norm_from_json(obj) -> NormalizationStats | None:
    if obj is None:
        return None
    return NormalizationStats(
        min=np.asarray([float(v) for v in obj["min"]]),
        max=np.asarray([float(v) for v in obj["max"]]),
    )


def _cfg_to_json(cfg: MlpConfig) -> dict:
    return {
        "input_dim": cfg.input_dim,
        "output_dim": cfg.output_dim,
        "nodes_per_layer": cfg.nodes_per_layer,
        "hidden_layers": cfg.hidden_layers,
        "dropout_rate": cfg.dropout_rate,
    }


def _params_to_json(params: ParameterSet) -> dict:
    return {
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def save_model(model, path) -> None:
    """Serialize a trained model with enough metadata to rebuild it."""
    doc = {"format_version": FORMAT_VERSION}
    if isinstance(model, EnergyModel):
        doc["kind"] = "ebm"
        doc["t_max"] = model.t_max
        doc["tail_factor"] = model.tail_factor
        doc["time_scale"] = model.time_scale
    elif isinstance(model, (PchModel, PmfModel)):
        doc["kind"] = "pch" if isinstance(model, PchModel) else "pmf"
        doc["grid"] = {"n_grid": model.grid.n_grid, "t_max": model.grid.t_max}
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    doc["config"] = _cfg_to_json(model.cfg)
    doc["params"] = _params_to_json(model.params)
    doc["normalization"] = _norm_to_json(model.norm)
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def _rebuild_params(obj) -> ParameterSet:
    return ParameterSet(
        weights=[np.asarray(w, dtype=np.float64) for w in obj["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in obj["biases"]],
    )


def load_model(path):
    """Rebuild a model from :func:`save_model` output; validates shapes."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise DataFormatError(f"not a model file: {e}")
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(
            f"unsupported model format version {doc.get('format_version')!r}"
            if isinstance(doc, dict) else "not a model file"
        )
    kind = doc.get("kind")
    try:
        cfg = MlpConfig(**doc["config"])
        params = _rebuild_params(doc["params"])
        norm = _norm_from_json(doc.get("normalization"))
        if kind == "ebm":
            return EnergyModel(cfg, params, t_max=float(doc["t_max"]),
                               tail_factor=float(doc["tail_factor"]),
                               time_scale=float(doc["time_scale"]), norm=norm)
        if kind in ("pch", "pmf"):
            grid = DiscreteGrid(n_grid=int(doc["grid"]["n_grid"]),
                                t_max=float(doc["grid"]["t_max"]))
            cls = PchModel if kind == "pch" else PmfModel
            return cls(cfg, params, grid, norm=norm)
    except (KeyError, TypeError, ValueError, ShapeError) as e:
        raise DataFormatError(f"corrupt model file: {e}")
    raise DataFormatError(f"unknown model kind {kind!r}")
