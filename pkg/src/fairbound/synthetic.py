"""Deterministic synthetic datasets used by the test-suite, the experiment
scripts, and the documentation examples."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dataset import Dataset, PropensityEstimator, estimate_propensity

# -- the admissions example ------------------------------------------------------

STUDENTS_COUNTS = {("Male", "High"): 51, ("Male", "Low"): 49,
                   ("Female", "High"): 48, ("Female", "Low"): 52}


def _admitted(gpa: str, count: int) -> int:
    # noisy placeholder outcome; the published table has no label column
    return round(count * (0.78 if gpa == "High" else 0.22))


def students_rows() -> list[list[str]]:
    """The 200-row admissions table as raw CSV rows (Sex, GPA, Admit)."""
    rows = []
    for (sex, gpa), count in STUDENTS_COUNTS.items():
        k = _admitted(gpa, count)
        rows.extend([[sex, gpa, "yes"]] * k)
        rows.extend([[sex, gpa, "no"]] * (count - k))
    return rows


def write_students_csv(path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Sex", "GPA", "Admit"])
        writer.writerows(students_rows())
    return path


def students_dataset(with_propensity: bool = True) -> Dataset:
    """The admissions table as a Dataset: GPA is the only feature, males are
    group 1, and the placeholder label admits the high-GPA students."""
    feats, labels, sens = [], [], []
    for (sex, gpa), count in STUDENTS_COUNTS.items():
        feats.extend([[1.0, 0.0] if gpa == "High" else [0.0, 1.0]] * count)
        labels.extend([1 if gpa == "High" else -1] * count)
        sens.extend([1 if sex == "Male" else 0] * count)
    sens = np.asarray(sens)
    data = Dataset(np.asarray(feats), np.asarray(labels), sens,
                   ("gpa=High", "gpa=Low"), float(np.mean(sens == 1)),
                   encoding=({"name": "GPA", "column": 1, "kind": "categorical",
                              "categories": ["High", "Low"]},))
    if with_propensity:
        data = estimate_propensity(data, PropensityEstimator("group-frequency", clip_eps=0.0))
    return data


# -- designed biased family -------------------------------------------------------


def _split_joint(n: int, n_ypos: int, n_spos: int) -> tuple[int, int, int, int]:
    """Cell counts for (y, s) with y independent of s inside the cell."""
    n_pp = round(n_ypos * n_spos / n)
    n_pp = min(n_pp, n_ypos, n_spos)
    n_pm = n_ypos - n_pp
    n_mp = n_spos - n_pp
    n_mm = n - n_pp - n_pm - n_mp
    if min(n_pp, n_pm, n_mp, n_mm) < 0:
        raise ValueError("cell counts do not decompose")
    return n_pp, n_pm, n_mp, n_mm


def biased_dataset(n_cell: int = 200, bias: float = 0.005,
                   a_logit: float = 1.2, b_logit: float = 0.4,
                   with_propensity: bool = True) -> Dataset:
    """Four-cell family over binary features (A, B) with exact designed counts.

    Feature A carries a tunable correlation with the group: cells with A = 1
    hold a group-1 share of 1/2 + bias, cells with A = 0 hold 1/2 - bias.
    Labels are +1 with probability sigmoid(a_logit (2A-1) + b_logit (2B-1)),
    realised as exact per-cell counts, independent of the group within each
    cell.  The overall group rate is exactly 1/2.
    """
    if not 0.0 <= bias < 0.5:
        raise ValueError("bias must lie in [0, 0.5)")
    shift = round(n_cell * bias)
    feats, labels, sens = [], [], []
    for a in (0, 1):
        for b in (0, 1):
            n_spos = n_cell // 2 + (shift if a == 1 else -shift)
            logit = a_logit * (2 * a - 1) + b_logit * (2 * b - 1)
            n_ypos = round(n_cell / (1.0 + np.exp(-logit)))
            n_pp, n_pm, n_mp, n_mm = _split_joint(n_cell, n_ypos, n_spos)
            for y, s, count in ((1, 1, n_pp), (1, 0, n_pm), (-1, 1, n_mp), (-1, 0, n_mm)):
                feats.extend([[float(a), float(b)]] * count)
                labels.extend([y] * count)
                sens.extend([s] * count)
    sens = np.asarray(sens)
    data = Dataset(np.asarray(feats), np.asarray(labels), sens, ("A", "B"),
                   float(np.mean(sens == 1)),
                   encoding=({"name": "A", "column": 0, "kind": "categorical", "categories": ["0", "1"]},
                             {"name": "B", "column": 1, "kind": "categorical", "categories": ["0", "1"]}))
    if with_propensity:
        data = estimate_propensity(data, PropensityEstimator("group-frequency", clip_eps=0.0))
    return data


# -- random discrete datasets -------------------------------------------------------


def random_discrete_dataset(seed: int, max_cells: int = 16, max_rows: int = 400,
                            with_propensity: bool = True,
                            clip_eps: float = 0.0) -> Dataset:
    """Random dataset with at most ``max_cells`` distinct feature rows.

    Cell feature patterns are distinct binary vectors; per-cell group shares
    are uniform, so the overall group rate lands anywhere in (0, 1).
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, max_cells + 1))
    width = max(1, int(np.ceil(np.log2(k))))
    patterns = [[(i >> j) & 1 for j in range(width)] for i in range(k)]
    counts = 2 + rng.multinomial(max_rows - 2 * k, np.ones(k) / k)
    while True:
        shares = rng.uniform(0.05, 0.95, size=k)
        pos = np.minimum(np.maximum(np.round(counts * shares).astype(int), 0), counts)
        total_pos = int(pos.sum())
        if 0 < total_pos < int(counts.sum()):
            break
    feats, labels, sens = [], [], []
    for c in range(k):
        n, npos = int(counts[c]), int(pos[c])
        feats.extend([list(map(float, patterns[c]))] * n)
        sens.extend([1] * npos + [0] * (n - npos))
        ylab = rng.integers(0, 2, size=n) * 2 - 1
        labels.extend(int(v) for v in ylab)
    if len(set(labels)) == 1:
        labels[0] = -labels[0]
    sens = np.asarray(sens)
    data = Dataset(np.asarray(feats), np.asarray(labels), sens,
                   tuple(f"f{j}" for j in range(width)), float(np.mean(sens == 1)),
                   encoding=tuple({"name": f"f{j}", "column": j, "kind": "categorical",
                                   "categories": ["0", "1"]} for j in range(width)))
    if with_propensity:
        data = estimate_propensity(data, PropensityEstimator("group-frequency", smoothing=0.0,
                                                             clip_eps=clip_eps))
    return data


# -- census-format fixture ------------------------------------------------------------

_WORKCLASSES = ["Private", "Self-emp-not-inc", "Local-gov", "State-gov", "Federal-gov"]
_EDU = [("HS-grad", 9), ("Some-college", 10), ("Bachelors", 13), ("Masters", 14),
        ("11th", 7), ("Assoc-voc", 11), ("Doctorate", 16)]
_OCC_MALE = ["Craft-repair", "Transport-moving", "Handlers-cleaners", "Protective-serv"]
_OCC_FEMALE = ["Adm-clerical", "Other-service", "Priv-house-serv"]
_OCC_NEUTRAL = ["Prof-specialty", "Exec-managerial", "Sales", "Tech-support"]
_RACES = ["White", "Black", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other"]
_COUNTRIES = ["United-States", "Mexico", "Philippines", "Germany", "Canada"]


def write_census_like_csv(path, n_rows: int = 6000, seed: int = 7,
                          missing_rate: float = 0.03, malformed_rows: int = 3) -> Path:
    """Write a UCI-census-format file whose relationship and occupation columns
    carry strong group information, so the maximal risk difference is large.
    Sprinkles '?' cells and a few short rows to exercise the drop-and-count
    ingestion policy.
    """
    rng = np.random.default_rng(seed)
    path = Path(path)
    rows = []
    for _ in range(n_rows):
        male = rng.random() < 0.67
        sex = "Male" if male else "Female"
        married = rng.random() < (0.58 if male else 0.36)
        if married:
            relationship = "Husband" if male else "Wife"
            marital = "Married-civ-spouse"
        else:
            relationship = str(rng.choice(["Not-in-family", "Own-child", "Unmarried", "Other-relative"]))
            marital = str(rng.choice(["Never-married", "Divorced", "Separated", "Widowed"]))
        r = rng.random()
        if male:
            occ = _OCC_MALE[int(rng.integers(len(_OCC_MALE)))] if r < 0.55 else \
                _OCC_NEUTRAL[int(rng.integers(len(_OCC_NEUTRAL)))] if r < 0.9 else \
                _OCC_FEMALE[int(rng.integers(len(_OCC_FEMALE)))]
        else:
            occ = _OCC_FEMALE[int(rng.integers(len(_OCC_FEMALE)))] if r < 0.55 else \
                _OCC_NEUTRAL[int(rng.integers(len(_OCC_NEUTRAL)))] if r < 0.9 else \
                _OCC_MALE[int(rng.integers(len(_OCC_MALE)))]
        edu, edu_num = _EDU[int(rng.integers(len(_EDU)))]
        age = int(np.clip(rng.normal(39, 12), 17, 90))
        hours = int(np.clip(rng.normal(42 if male else 37, 9), 5, 99))
        gain = int(rng.choice([0, 0, 0, 0, 0, 0, 0, 3000, 7688, 15024]))
        loss = int(rng.choice([0] * 19 + [1902]))
        fnlwgt = int(rng.integers(20000, 400000))
        logit = (0.55 * (edu_num - 10) + 0.05 * (age - 39) + 0.07 * (hours - 40)
                 + 0.9 * male + 2.2 * (gain > 0) + 0.7 * (occ in ("Exec-managerial", "Prof-specialty"))
                 - 2.4)
        income = ">50K" if rng.random() < 1.0 / (1.0 + np.exp(-logit)) else "<=50K"
        row = [str(age), str(rng.choice(_WORKCLASSES)), str(fnlwgt), edu, str(edu_num),
               marital, occ, relationship, str(rng.choice(_RACES)), sex,
               str(gain), str(loss), str(hours), str(rng.choice(_COUNTRIES)), income]
        if rng.random() < missing_rate:
            row[int(rng.choice([1, 6, 13]))] = "?"
        rows.append(row)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for i, row in enumerate(rows):
            writer.writerow(row)
            if i % max(n_rows // max(malformed_rows, 1), 1) == 1 and malformed_rows > 0:
                writer.writerow(row[:5])  # short row, must be skipped and counted
                malformed_rows -= 1
    return path
