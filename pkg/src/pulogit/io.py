"""Dataset CSV format and the versioned JSON model artifact.

CSV layout: header row; integer label column `z`; optional integer column
`y` (simulated truth); every other column is a numeric covariate, in header
order.  Scenario constants (ratios / labeling probabilities) are study-design
inputs and live in configuration, not in the data file.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .core_math import CaseControlRatios, SingleTrainingProbs
from .errors import InvalidConfig, LabelOutOfRange, NonNumericCovariate, ParseError
from .models import MultinomialParams, OrdinalParams, PUDataset

__all__ = ["FORMAT_VERSION", "ModelArtifact", "load_dataset", "load_covariates", "save_dataset"]

FORMAT_VERSION = 1

_RESERVED = ("z", "y")


def save_dataset(path, data: PUDataset):
    """Write a PUDataset as CSV: z, optional y, then covariate columns x1..xp."""
    header = ["z"] + (["y"] if data.y is not None else []) + [f"x{j+1}" for j in range(data.p)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            row = [int(data.z[i])]
            if data.y is not None:
                row.append(int(data.y[i]))
            row.extend(repr(float(v)) for v in data.X[i])
            writer.writerow(row)


def _read_table(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    if not rows:
        raise ParseError(f"{path}: no data rows")
    width = len(header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"{path}: row {i + 2} has {len(row)} fields, expected {width}")
    return header, rows


def _int_column(rows, col, name, path):
    out = np.empty(len(rows), dtype=int)
    for i, row in enumerate(rows):
        text = row[col].strip()
        try:
            value = int(text)
        except ValueError:
            try:
                # accept float-formatted integers such as "2.0"
                fval = float(text)
            except ValueError:
                raise ParseError(
                    f"{path}: row {i + 2}, column `{name}`: {text!r} is not an integer"
                ) from None
            value = int(fval)
            if value != fval:
                raise LabelOutOfRange(
                    f"{path}: row {i + 2}, column `{name}`: {text!r} is not an integer"
                ) from None
        out[i] = value
    return out


def _float_columns(rows, cols, names, path):
    out = np.empty((len(rows), len(cols)))
    for i, row in enumerate(rows):
        for j, col in enumerate(cols):
            try:
                out[i, j] = float(row[col])
            except ValueError:
                raise NonNumericCovariate(
                    f"{path}: row {i + 2}, column `{names[j]}`: {row[col]!r} is not numeric"
                ) from None
    return out


def load_dataset(path, scenario, K: int | None = None) -> PUDataset:
    """Read a CSV into a PUDataset under the given scenario.

    K defaults to the scenario's class count; labels beyond it are rejected
    with the offending row named.
    """
    if not isinstance(scenario, (CaseControlRatios, SingleTrainingProbs)):
        raise InvalidConfig("scenario must be CaseControlRatios or SingleTrainingProbs")
    header, rows = _read_table(path)
    if "z" not in header:
        raise ParseError(f"{path}: no `z` column in header {header}")
    K = scenario.K if K is None else K
    if K != scenario.K:
        raise InvalidConfig(f"declared K = {K} but scenario has {scenario.K} classes")
    z = _int_column(rows, header.index("z"), "z", path)
    bad = np.nonzero((z < 0) | (z > K))[0]
    if bad.size:
        raise LabelOutOfRange(
            f"{path}: row {bad[0] + 2}: label {z[bad[0]]} outside 0..{K}"
        )
    y = None
    if "y" in header:
        y = _int_column(rows, header.index("y"), "y", path)
    cov_cols = [i for i, name in enumerate(header) if name not in _RESERVED]
    if not cov_cols:
        raise ParseError(f"{path}: no covariate columns")
    X = _float_columns(rows, cov_cols, [header[i] for i in cov_cols], path)
    return PUDataset(X, z, scenario, y=y)


def load_covariates(path):
    """Read only the covariate matrix (plus labels if present) for prediction."""
    header, rows = _read_table(path)
    cov_cols = [i for i, name in enumerate(header) if name not in _RESERVED]
    if not cov_cols:
        raise ParseError(f"{path}: no covariate columns")
    X = _float_columns(rows, cov_cols, [header[i] for i in cov_cols], path)
    z = _int_column(rows, header.index("z"), "z", path) if "z" in header else None
    y = _int_column(rows, header.index("y"), "y", path) if "y" in header else None
    return X, z, y


@dataclass
class ModelArtifact:
    """Self-describing fitted model, serialized as versioned JSON.

    Serialization is canonical (sorted keys, fixed indentation, repr floats),
    so save -> load -> save reproduces the file byte for byte.
    """

    kind: str  # "multinomial" | "ordinal"
    scenario: dict
    K: int
    p: int
    params: dict
    lam: float
    groups: str
    fit: dict
    format_version: int = FORMAT_VERSION

    @classmethod
    def from_fit(cls, params, data: PUDataset, lam: float, groups: str, fit_meta: dict):
        if isinstance(data.scenario, CaseControlRatios):
            scenario = {"type": "case-control", "kappa": [float(v) for v in data.scenario.kappa]}
        else:
            scenario = {"type": "single-training", "pi_st": [float(v) for v in data.scenario.pi_st]}
        if isinstance(params, MultinomialParams):
            kind = "multinomial"
            pdict = {
                "Theta": [[float(v) for v in row] for row in params.Theta],
                "b": [float(v) for v in params.b],
            }
            p, K = params.p, params.K
        elif isinstance(params, OrdinalParams):
            kind = "ordinal"
            pdict = {"theta": [float(v) for v in params.theta]}
            p, K = params.p, params.K
        else:
            raise InvalidConfig(f"unsupported parameter type {type(params).__name__}")
        return cls(kind, scenario, K, p, pdict, float(lam), groups, fit_meta)

    def to_params(self):
        if self.kind == "multinomial":
            return MultinomialParams(np.asarray(self.params["Theta"]), np.asarray(self.params["b"]))
        return OrdinalParams(np.asarray(self.params["theta"]), p=self.p)

    def scenario_object(self):
        if self.scenario["type"] == "case-control":
            return CaseControlRatios(np.asarray(self.scenario["kappa"]))
        return SingleTrainingProbs(np.asarray(self.scenario["pi_st"]))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "ModelArtifact":
        with open(path) as fh:
            raw = json.load(fh)
        version = raw.get("format_version")
        if version != FORMAT_VERSION:
            raise ParseError(f"{path}: unsupported artifact version {version}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ParseError(f"{path}: malformed artifact ({exc})") from None
