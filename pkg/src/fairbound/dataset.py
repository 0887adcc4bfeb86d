"""Tabular ingestion: encoding, labels, sensitive groups, and propensity estimates.

A :class:`Dataset` holds an encoded feature matrix, +-1 labels, a binary
sensitive-group vector (1 marks the non-sensitive group), the empirical group
rate, and optionally a per-row propensity estimate of belonging to group 1
given the features.  Datasets are immutable after construction.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

logger = logging.getLogger("fairbound.dataset")


class SchemaError(ValueError):
    """A required column is missing or the schema is malformed."""


class IngestionError(ValueError):
    """The input file yields no usable rows."""


class DegenerateGroupError(ValueError):
    """Only one sensitive group occurs in the data."""


class EstimatorError(ValueError):
    """A propensity estimator was used outside its preconditions."""


PROPENSITY_METHODS = ("group-frequency", "probabilistic-model", "user-supplied")


@dataclass(frozen=True)
class PropensityEstimator:
    """How to estimate P(group 1 | features).

    group-frequency needs discrete features and returns smoothed per-cell
    frequencies; probabilistic-model fits a regularised log-linear model of
    the group on the features; user-supplied passes given values through.
    Outputs are clipped into [clip_eps, 1 - clip_eps] and then recalibrated by
    a multiplicative odds shift so their mean matches the group rate.
    """

    method: str = "group-frequency"
    smoothing: float = 0.0
    regularization: float = 1e-3
    clip_eps: float = 1e-4
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.method not in PROPENSITY_METHODS:
            raise EstimatorError(f"unknown propensity method {self.method!r}")
        if self.smoothing < 0:
            raise EstimatorError("smoothing must be nonnegative")
        if self.regularization < 0:
            raise EstimatorError("regularization must be nonnegative")
        if not 0.0 <= self.clip_eps < 0.5:
            raise EstimatorError("clip_eps must lie in [0, 0.5)")
        if self.method == "user-supplied" and self.values is None:
            raise EstimatorError("user-supplied estimation needs values")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray
    feature_names: tuple[str, ...]
    group_rate: float
    propensity: np.ndarray | None = None
    encoding: tuple[dict, ...] | None = None
    skipped_rows: int = 0
    propensity_method: str | None = None

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=float))
        labels = np.asarray(self.labels, dtype=int)
        sens = np.asarray(self.sensitive, dtype=int)
        n = feats.shape[0]
        if n < 2:
            raise IngestionError("a dataset needs at least two rows")
        if labels.shape != (n,) or sens.shape != (n,):
            raise ValueError("labels and sensitive must match the number of rows")
        if feats.ndim != 2 or feats.shape[1] != len(self.feature_names):
            raise ValueError("feature matrix and feature_names disagree")
        if not np.isin(labels, (-1, 1)).all():
            raise ValueError("labels must take values -1 and +1 only")
        if not np.isin(sens, (0, 1)).all():
            raise ValueError("sensitive must take values 0 and 1 only")
        if sens.min() == sens.max():
            raise DegenerateGroupError("both sensitive groups must occur")
        p = float(sens.mean())
        if abs(p - self.group_rate) > 1e-9:
            raise ValueError("group_rate does not match the sensitive vector")
        prop = self.propensity
        if prop is not None:
            prop = np.asarray(prop, dtype=float)
            if prop.shape != (n,):
                raise ValueError("propensity must be a per-row vector")
            if prop.min() < -1e-12 or prop.max() > 1 + 1e-12:
                raise ValueError("propensity entries must lie in [0, 1]")
            if abs(float(prop.mean()) - p) > 1e-6:
                raise ValueError("propensity is not calibrated: mean must equal the group rate")
            prop = np.clip(prop, 0.0, 1.0)
            prop.setflags(write=False)
        for arr in (feats, labels, sens):
            arr.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sensitive", sens)
        object.__setattr__(self, "propensity", prop)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "group_rate", p)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        """Row subset; the propensity, when present, is recalibrated to the
        subset's own group rate so the calibration invariant keeps holding."""
        idx = np.asarray(index)
        sens = self.sensitive[idx]
        prop = None
        if self.propensity is not None:
            prop = _calibrate(self.propensity[idx], float(np.mean(sens == 1)))
        return Dataset(self.features[idx], self.labels[idx], sens,
                       self.feature_names, float(np.mean(sens == 1)), propensity=prop,
                       encoding=self.encoding, skipped_rows=0,
                       propensity_method=self.propensity_method)

    def manifest_lines(self):
        yield f"rows: {self.n_rows}"
        yield f"features: {self.n_features}"
        yield f"group_rate: {self.group_rate:.12g}"
        yield f"skipped_rows: {self.skipped_rows}"
        yield f"propensity_method: {self.propensity_method or 'none'}"


# -- encoding ----------------------------------------------------------------


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return not math.isnan(float(text))


def build_encoding(header: list[str], rows: list[list[str]], columns: list[int]) -> list[dict]:
    """Per-column encoding metadata: numeric columns standardise to zero mean
    and unit variance, anything else becomes sorted one-hot categories."""
    enc = []
    for j in columns:
        vals = [r[j] for r in rows]
        if all(_is_float(v) for v in vals):
            arr = np.asarray([float(v) for v in vals])
            std = float(arr.std())
            enc.append({"name": header[j], "column": j, "kind": "numeric",
                        "mean": float(arr.mean()), "std": std if std > 1e-12 else 1.0})
        else:
            enc.append({"name": header[j], "column": j, "kind": "categorical",
                        "categories": sorted(set(vals))})
    return enc


def encode_rows(encoding: list[dict], rows: list[list[str]]) -> tuple[np.ndarray, list[str]]:
    """Apply encoding metadata to raw rows; deterministic and reproducible."""
    blocks = []
    names: list[str] = []
    for spec in encoding:
        j = spec["column"]
        if spec["kind"] == "numeric":
            arr = np.asarray([float(r[j]) for r in rows])
            blocks.append(((arr - spec["mean"]) / spec["std"])[:, None])
            names.append(spec["name"])
        else:
            cats = spec["categories"]
            col = [r[j] for r in rows]
            onehot = np.zeros((len(rows), len(cats)))
            lookup = {c: i for i, c in enumerate(cats)}
            for i, v in enumerate(col):
                if v in lookup:
                    onehot[i, lookup[v]] = 1.0
            blocks.append(onehot)
            names.extend(f"{spec['name']}={c}" for c in cats)
    return np.hstack(blocks), names


# -- CSV loading ---------------------------------------------------------------


def load_csv(path, schema: dict) -> Dataset:
    """Load a comma-separated file into an encoded Dataset.

    ``schema`` maps: label_col, sensitive_col, positive_label_value,
    positive_group_value, and optionally drop_cols (list) and has_header
    (default True).  Rows with the wrong column count are skipped and counted.
    The label and sensitive columns are not part of the feature matrix.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"no such file: {path}")
    for key in ("label_col", "sensitive_col", "positive_label_value", "positive_group_value"):
        if key not in schema:
            raise SchemaError(f"schema is missing {key!r}")
    has_header = schema.get("has_header", True)
    with open(path, newline="", encoding="utf-8") as fh:
        raw = [row for row in csv.reader(fh) if row]
    if not raw:
        raise IngestionError(f"{path} is empty")
    if has_header:
        header = [c.strip() for c in raw[0]]
        body = raw[1:]
    else:
        header = [str(i) for i in range(len(raw[0]))]
        body = raw
    width = len(header)
    rows, skipped = [], 0
    for row in body:
        if len(row) != width:
            skipped += 1
            continue
        rows.append([c.strip() for c in row])
    if len(rows) < 2:
        raise IngestionError(f"{path}: fewer than two usable rows ({skipped} skipped)")

    def col_index(name):
        if name not in header:
            raise SchemaError(f"column {name!r} not in header {header}")
        return header.index(name)

    label_j = col_index(schema["label_col"])
    sens_j = col_index(schema["sensitive_col"])
    dropped = {col_index(c) for c in schema.get("drop_cols", [])}
    feature_cols = [j for j in range(width) if j not in dropped | {label_j, sens_j}]
    if not feature_cols:
        raise SchemaError("no feature columns left after drops")

    labels = np.asarray([1 if r[label_j] == str(schema["positive_label_value"]) else -1 for r in rows])
    sens = np.asarray([1 if r[sens_j] == str(schema["positive_group_value"]) else -1 for r in rows])
    if (sens == 1).all() or (sens == -1).all():
        raise DegenerateGroupError(f"{path}: only one sensitive group present")
    sens = (sens == 1).astype(int)
    enc = build_encoding(header, rows, feature_cols)
    feats, names = encode_rows(enc, rows)
    if skipped:
        logger.info("%s: skipped %d malformed rows", path, skipped)
    return Dataset(feats, labels, sens, tuple(names), float(sens.mean()),
                   encoding=tuple(enc), skipped_rows=skipped)


ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]


def load_adult(path, positive_group: str = "Male") -> Dataset:
    """Load a UCI Adult-format file: 15 comma-separated columns, '?' marks a
    missing value.  Label is +1 iff income is above 50K; sensitive group 1 is
    ``positive_group`` of the sex column.  Rows with missing values or the
    wrong shape are dropped and counted; sex and income are not features.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"no such file: {path}")
    rows, skipped = [], 0
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or (len(row) == 1 and row[0].startswith("|")):
                continue  # blank lines and the test-file banner
            if len(row) != len(ADULT_COLUMNS):
                skipped += 1
                continue
            cells = [c.strip() for c in row]
            if any(c == "?" for c in cells):
                skipped += 1
                continue
            cells[-1] = cells[-1].rstrip(".")  # test-split labels carry a dot
            rows.append(cells)
    if len(rows) < 2:
        raise IngestionError(f"{path}: no usable rows after dropping {skipped}")
    header = list(ADULT_COLUMNS)
    label_j = header.index("income")
    sens_j = header.index("sex")
    feature_cols = [j for j in range(len(header)) if j not in (label_j, sens_j)]
    labels = np.asarray([1 if r[label_j] == ">50K" else -1 for r in rows])
    sens = np.asarray([1 if r[sens_j] == positive_group else 0 for r in rows])
    if sens.min() == sens.max():
        raise DegenerateGroupError(f"{path}: only one sex present")
    enc = build_encoding(header, rows, feature_cols)
    feats, names = encode_rows(enc, rows)
    if skipped:
        logger.info("%s: dropped %d rows (missing values or bad shape)", path, skipped)
    return Dataset(feats, labels, sens, tuple(names), float(sens.mean()),
                   encoding=tuple(enc), skipped_rows=skipped)


# -- propensity estimation -----------------------------------------------------


def _calibrate(eta: np.ndarray, target: float, tol: float = 1e-12) -> np.ndarray:
    """Multiplicative odds shift so mean(eta) hits the target group rate."""
    eta = np.clip(np.asarray(eta, dtype=float), 1e-15, 1.0 - 1e-15)
    if abs(float(eta.mean()) - target) <= tol:
        return eta
    logit = np.log(eta) - np.log1p(-eta)

    def mean_at(t):
        z = logit + t
        return float(np.mean(np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))))

    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if mean_at(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    t = (lo + hi) / 2.0
    z = logit + t
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


def _distinct_rows(features: np.ndarray):
    _, inverse, counts = np.unique(features, axis=0, return_inverse=True, return_counts=True)
    return inverse, counts


def _looks_discrete(data: Dataset) -> bool:
    if data.encoding is not None:
        if all(spec["kind"] == "categorical" for spec in data.encoding):
            return True
    # meaningful per-cell frequencies need repeated rows
    _, counts = _distinct_rows(data.features)
    return len(counts) <= data.n_rows // 2


def estimate_propensity(data: Dataset, est: PropensityEstimator | str = "group-frequency") -> Dataset:
    """Return a copy of the dataset with the propensity vector filled in."""
    if isinstance(est, str):
        est = PropensityEstimator(method=est)
    p = data.group_rate
    if est.method == "group-frequency":
        if not _looks_discrete(data):
            raise EstimatorError("group-frequency needs discrete features; "
                                 "use the probabilistic-model estimator instead")
        inverse, counts = _distinct_rows(data.features)
        pos_counts = np.bincount(inverse, weights=(data.sensitive == 1).astype(float),
                                 minlength=len(counts))
        cell_eta = (pos_counts + est.smoothing * p) / (counts + est.smoothing)
        eta = cell_eta[inverse]
    elif est.method == "probabilistic-model":
        eta = _fit_group_model(data, est.regularization)
    else:
        eta = np.asarray(est.values, dtype=float)
        if eta.shape != (data.n_rows,):
            raise EstimatorError("user-supplied values must be one per row")
        if eta.min() < 0 or eta.max() > 1:
            raise EstimatorError("user-supplied values must lie in [0, 1]")
    if est.clip_eps > 0:
        eta = np.clip(eta, est.clip_eps, 1.0 - est.clip_eps)
    eta = _calibrate(eta, p)
    return replace(data, propensity=eta, propensity_method=est.method)


def _fit_group_model(data: Dataset, regularization: float) -> np.ndarray:
    # late import: the solver module depends on surrogate, not on dataset
    from .solver import SolverConfig, train_unconstrained

    target = np.where(data.sensitive == 1, 1, -1)
    surrogate_data = replace(data, labels=target, propensity=None)
    cfg = SolverConfig(loss="logistic", l2_penalty=max(regularization, 1e-12),
                       max_inner_iters=500, objective_tol=1e-8)
    model = train_unconstrained(surrogate_data, cfg).model
    scores = data.features @ model.weights + model.bias
    return np.where(scores >= 0, 1.0 / (1.0 + np.exp(-scores)),
                    np.exp(scores) / (1.0 + np.exp(scores)))


# -- folds ----------------------------------------------------------------------


def split_folds(data: Dataset, folds: int, seed: int = 0) -> list[tuple[Dataset, Dataset]]:
    """Deterministic k-fold split, stratified jointly on (label, sensitive).

    When some (label, group) cell is smaller than the fold count the split
    falls back to stratifying on the group alone, with a warning.
    """
    if folds < 2:
        raise ValueError("need at least two folds")
    if folds > data.n_rows:
        raise ValueError("more folds than rows")
    rng = np.random.default_rng(seed)
    strata = [np.flatnonzero((data.labels == y) & (data.sensitive == s))
              for y in (-1, 1) for s in (0, 1)]
    strata = [s for s in strata if len(s)]
    if any(len(s) < folds for s in strata):
        logger.warning("joint stratification impossible with %d folds; stratifying on group only", folds)
        strata = [np.flatnonzero(data.sensitive == s) for s in (0, 1)]
    assignments = np.empty(data.n_rows, dtype=int)
    for stratum in strata:
        order = rng.permutation(stratum)
        assignments[order] = np.arange(len(order)) % folds
    pairs = []
    for k in range(folds):
        test = np.flatnonzero(assignments == k)
        train = np.flatnonzero(assignments != k)
        pairs.append((data.subset(train), data.subset(test)))
    return pairs


# -- on-disk form (used by the command line) ------------------------------------


def save_dataset(data: Dataset, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "features.npy", data.features)
    np.save(out / "labels.npy", data.labels)
    np.save(out / "sensitive.npy", data.sensitive)
    if data.propensity is not None:
        np.save(out / "propensity.npy", data.propensity)
    meta = {
        "feature_names": list(data.feature_names),
        "skipped_rows": data.skipped_rows,
        "propensity_method": data.propensity_method,
        "encoding": list(data.encoding) if data.encoding is not None else None,
    }
    tmp = out / "meta.json.tmp"
    tmp.write_text(json.dumps(meta, sort_keys=True, indent=1), encoding="utf-8")
    tmp.replace(out / "meta.json")
    tmp = out / "manifest.txt.tmp"
    tmp.write_text("".join(line + "\n" for line in data.manifest_lines()), encoding="utf-8")
    tmp.replace(out / "manifest.txt")


def load_saved_dataset(in_dir) -> Dataset:
    src = Path(in_dir)
    if not (src / "meta.json").exists():
        raise IngestionError(f"{src} does not contain an ingested dataset")
    meta = json.loads((src / "meta.json").read_text(encoding="utf-8"))
    prop_path = src / "propensity.npy"
    sens = np.load(src / "sensitive.npy")
    return Dataset(
        np.load(src / "features.npy"),
        np.load(src / "labels.npy"),
        sens,
        tuple(meta["feature_names"]),
        float(np.mean(sens == 1)),
        propensity=np.load(prop_path) if prop_path.exists() else None,
        encoding=tuple(meta["encoding"]) if meta["encoding"] is not None else None,
        skipped_rows=int(meta["skipped_rows"]),
        propensity_method=meta["propensity_method"],
    )
