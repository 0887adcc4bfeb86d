"""Command-line front end: ingest data, run the constraint-free check, train
and evaluate fair classifiers, and sweep budgets into trade-off tables.

Exit status contract: 0 success (and criterion PASS / converged-feasible),
1 criterion FAIL, 2 usage or data errors, 3 converged-infeasible training.
Set FAIRBOUND_LOG={quiet|info|debug} to control logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    Dataset,
    IngestionError,
    PropensityEstimator,
    estimate_propensity,
    load_adult,
    load_csv,
    load_saved_dataset,
    save_dataset,
    split_folds,
)
from .fairness import (
    FairnessBudget,
    constraint_free_check,
    equalized_odds,
    rd_bounds,
    rd_extremes,
    risk_difference,
    risk_difference_weighted,
    risk_ratio,
)
from .solver import (
    SolverConfig,
    load_model,
    predict,
    save_model,
    train_covariance_baseline,
    train_formulation1,
    train_formulation2,
    train_unconstrained,
)
from .surrogate import SURROGATE_KINDS, margin_loss

logger = logging.getLogger("fairbound.cli")

SWEEP_SCHEMA_VERSION = 1
SWEEP_COLUMNS = [
    "schema_version", "formulation", "budget", "fold", "seed", "status",
    "accuracy", "phi_loss", "rd_count", "rd_weighted", "risk_ratio",
    "lower_bound", "upper_bound", "lower_vacuous", "upper_vacuous",
]


def _configure_logging():
    level = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("FAIRBOUND_LOG", "quiet"), logging.ERROR)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return str(x)
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _write_report(path: Path, pairs: list[tuple[str, object]]) -> None:
    """Key-value text report plus a structured .json twin."""
    _write_atomic(path, "".join(f"{k}: {_fmt(v)}\n" for k, v in pairs))
    payload = {k: v for k, v in pairs}
    _write_atomic(path.with_suffix(path.suffix + ".json"),
                  json.dumps(payload, sort_keys=True, indent=1, default=_fmt) + "\n")


def _load_schema(text: str) -> dict:
    if text.startswith("@"):
        text = Path(text[1:]).read_text(encoding="utf-8")
    return json.loads(text)


def _resolve_propensity(data: Dataset, eta: str | None, raw_csv: Path | None = None) -> Dataset:
    if eta is None:
        return data
    if eta == "freq":
        return estimate_propensity(data, PropensityEstimator("group-frequency"))
    if eta == "model":
        return estimate_propensity(data, PropensityEstimator("probabilistic-model"))
    if eta.startswith("column:"):
        if raw_csv is None:
            raise IngestionError("--eta column:NAME is only available at ingest time")
        import csv as _csv

        name = eta.split(":", 1)[1]
        with open(raw_csv, newline="", encoding="utf-8") as fh:
            rows = list(_csv.reader(fh))
        header = [c.strip() for c in rows[0]]
        if name not in header:
            raise IngestionError(f"column {name!r} not found for --eta")
        j = header.index(name)
        vals = np.asarray([float(r[j]) for r in rows[1:] if len(r) == len(header)])
        return estimate_propensity(data, PropensityEstimator("user-supplied", values=vals))
    raise IngestionError(f"unknown --eta choice {eta!r}; use freq, model, or column:NAME")


def _require_propensity(data: Dataset, eta: str | None) -> Dataset:
    data = _resolve_propensity(data, eta)
    if data.propensity is None:
        try:
            data = estimate_propensity(data, PropensityEstimator("group-frequency"))
        except Exception:
            raise IngestionError(
                "the dataset has no group-propensity estimate and its features are not "
                "discrete; re-run with --eta model (regularised log-linear estimate) or "
                "ingest with --eta column:NAME") from None
    return data


# -- subcommands ---------------------------------------------------------------


def cmd_ingest(args) -> int:
    if args.adult:
        data = load_adult(args.adult)
        raw = Path(args.adult)
    elif args.csv:
        if not args.schema:
            raise IngestionError("--csv needs --schema")
        data = load_csv(args.csv, _load_schema(args.schema))
        raw = Path(args.csv)
    else:
        raise IngestionError("ingest needs --adult FILE or --csv FILE --schema JSON")
    data = _resolve_propensity(data, args.eta, raw_csv=raw)
    out = Path(args.out or "work")
    save_dataset(data, out)
    for line in data.manifest_lines():
        print(line)
    print(f"written: {out}")
    return 0


def cmd_check(args) -> int:
    data = _require_propensity(load_saved_dataset(args.dataset), args.eta)
    report = constraint_free_check(data, float(args.tau))
    for line in report.lines():
        print(line)
    if args.out:
        _write_report(Path(args.out), [
            ("command", "check"), ("tau", report.tau), ("passed", report.passed),
            ("rd_plus", report.rd_plus), ("rd_minus", report.rd_minus),
            ("margin_upper", report.margin_upper), ("margin_lower", report.margin_lower),
            ("propensity_method", data.propensity_method),
        ])
    return 0 if report.passed else 1


def _metrics_pairs(data: Dataset, scores, preds, phi: str) -> list[tuple[str, object]]:
    pairs: list[tuple[str, object]] = [
        ("accuracy", float(np.mean(preds == data.labels))),
        ("zero_one_loss", float(np.mean(preds != data.labels))),
        ("phi_loss", margin_loss(scores, data.labels, phi)),
        ("rd_count", risk_difference(preds, data.sensitive)),
        ("risk_ratio", risk_ratio(preds, data.sensitive)),
    ]
    eo = equalized_odds(preds, data.labels, data.sensitive)
    pairs.append(("eo_gap_pos", eo[1]))
    pairs.append(("eo_gap_neg", eo[-1]))
    pairs.append(("eop", eo[1]))
    if data.propensity is not None:
        pairs.append(("rd_weighted", risk_difference_weighted(scores, data.propensity, data.group_rate)))
    return pairs


def _bounds_pairs(data: Dataset, scores, kappa: str, delta: str | None) -> list[tuple[str, object]]:
    rep = rd_bounds(scores, data.propensity, data.group_rate, kappa=kappa, delta=delta or kappa)
    return [(name, getattr(rep, name)) for name in (
        "rd_minus", "rd_plus", "rd_kappa_min", "rd_delta_max", "rd_kappa_of_h",
        "rd_delta_of_h", "lower_bound", "upper_bound", "upper_vacuous", "lower_vacuous")]


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    data = _require_propensity(load_saved_dataset(args.dataset), args.eta)
    if args.formulation == "plain" and (args.c1 is not None or args.c2 is not None or args.tau is not None):
        raise argparse.ArgumentTypeError("--formulation plain takes no budget flags")
    budget = None
    if args.c1 is not None or args.c2 is not None or args.tau is not None:
        budget = FairnessBudget(tau=args.tau, c1=args.c1, c2=args.c2)
    config = SolverConfig(loss=args.phi, kappa=args.kappa, delta=args.delta, budget=budget,
                          l2_penalty=args.l2, seed=args.seed,
                          init="seeded-random" if args.random_init else "zeros")
    if args.formulation == "plain":
        result = train_unconstrained(data, config)
    elif args.formulation == "f1":
        if budget is None:
            raise argparse.ArgumentTypeError("--formulation f1 needs --c1/--c2 surrogate thresholds")
        result = train_formulation1(data, config, (budget.upper, budget.lower))
    elif args.formulation == "f2":
        if budget is None:
            raise argparse.ArgumentTypeError("--formulation f2 needs --c1/--c2 or --tau")
        result = train_formulation2(data, config)
    elif args.formulation == "covariance":
        if args.cov_threshold is None:
            raise argparse.ArgumentTypeError("--formulation covariance needs --cov-threshold")
        result = train_covariance_baseline(data, config, args.cov_threshold)
    else:
        raise argparse.ArgumentTypeError(f"unknown formulation {args.formulation!r}")

    out = Path(args.out or "model.txt")
    save_model(result.model, out, config)
    scores, preds = predict(result.model, data)
    pairs: list[tuple[str, object]] = [
        ("command", f"train --formulation {args.formulation}"),
        ("dataset", str(args.dataset)), ("version", __version__),
        ("phi", args.phi), ("kappa", args.kappa), ("delta", args.delta or args.kappa),
        ("seed", args.seed), ("l2_penalty", args.l2),
        ("c1", None if budget is None else budget.upper),
        ("c2", None if budget is None else budget.lower),
        ("status", result.status), ("objective", result.objective),
        ("outer_iters", result.outer_iters), ("inner_iters", result.inner_iters),
        ("max_violation", result.max_violation),
        ("config_digest", config.digest()),
    ]
    pairs += _metrics_pairs(data, scores, preds, args.phi)
    if data.propensity is not None:
        pairs += _bounds_pairs(data, scores, args.kappa, args.delta)
    pairs.append(("model_file", str(out)))
    pairs.append(("timing_seconds", time.perf_counter() - t0))
    _write_report(out.with_name(out.name + ".report"), pairs)
    for k, v in pairs:
        print(f"{k}: {_fmt(v)}")
    return 0 if result.status == "feasible" else 3


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    data = _require_propensity(load_saved_dataset(args.dataset), args.eta)
    if args.model:
        model = load_model(args.model)
        scores, preds = predict(model, data)
        source = f"model {args.model}"
    elif args.predictions:
        preds = np.loadtxt(args.predictions, dtype=float).astype(int)
        if preds.shape != (data.n_rows,):
            raise IngestionError(
                f"predictions length {preds.shape} does not match dataset rows {data.n_rows}")
        if not np.isin(preds, (-1, 1)).all():
            raise IngestionError("predictions must be -1 or +1, one per line")
        scores = preds.astype(float)
        source = f"predictions {args.predictions}"
    else:
        raise argparse.ArgumentTypeError("eval needs --model FILE or --predictions FILE")
    pairs: list[tuple[str, object]] = [("command", "eval"), ("source", source),
                                       ("dataset", str(args.dataset)), ("version", __version__)]
    pairs += _metrics_pairs(data, scores, preds, args.phi)
    ext = rd_extremes(data.propensity, data.group_rate)
    rd_c = risk_difference(preds, data.sensitive)
    contained = bool(ext.rd_minus - 1e-12 <= rd_c <= ext.rd_plus + 1e-12)
    pairs.append(("rd_contained", contained))
    pairs += _bounds_pairs(data, scores, args.kappa, args.delta)
    pairs.append(("timing_seconds", time.perf_counter() - t0))
    if args.out:
        _write_report(Path(args.out), pairs)
    for k, v in pairs:
        print(f"{k}: {_fmt(v)}")
    return 0


def cmd_sweep(args) -> int:
    data = _require_propensity(load_saved_dataset(args.dataset), args.eta)
    grid = [float(x) for x in args.grid.split(",") if x.strip() != ""]
    if not grid:
        raise argparse.ArgumentTypeError("--grid must list at least one budget")
    formulations = [f.strip() for f in args.formulations.split(",") if f.strip()]
    for f in formulations:
        if f not in ("f2", "covariance", "plain"):
            raise argparse.ArgumentTypeError(f"sweep supports f2, covariance, plain; got {f!r}")
    folds = split_folds(data, args.folds, seed=args.seed) if args.folds > 1 else [(data, data)]
    rows = []
    for formulation in formulations:
        for budget in grid:
            for k, (tr, te) in enumerate(folds):
                row = _sweep_point(tr, te, formulation, budget, args)
                rows.append([SWEEP_SCHEMA_VERSION, formulation, budget, k, args.seed] + row)
    out = Path(args.out or "sweep.csv")
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _write_atomic(out, "\n".join(lines) + "\n")
    print(f"written: {out} ({len(rows)} rows)")
    return 0


def _sweep_point(tr: Dataset, te: Dataset, formulation: str, budget: float, args) -> list:
    config = SolverConfig(loss=args.phi, kappa=args.kappa, delta=args.delta,
                          budget=FairnessBudget(c1=budget, c2=budget),
                          l2_penalty=args.l2, seed=args.seed)
    try:
        if formulation == "f2":
            result = train_formulation2(tr, config)
        elif formulation == "covariance":
            result = train_covariance_baseline(tr, config, budget)
        else:
            result = train_unconstrained(tr, config)
    except Exception as exc:  # a failed point must not kill the sweep
        logger.warning("sweep point %s budget %g failed: %s", formulation, budget, exc)
        return ["error", *([float("nan")] * 8), False, False]
    scores, preds = predict(result.model, te)
    rep = rd_bounds(scores, te.propensity, te.group_rate, kappa=args.kappa,
                    delta=args.delta or args.kappa)
    return [result.status,
            float(np.mean(preds == te.labels)),
            margin_loss(scores, te.labels, args.phi),
            risk_difference(preds, te.sensitive),
            risk_difference_weighted(scores, te.propensity, te.group_rate),
            risk_ratio(preds, te.sensitive),
            rep.lower_bound, rep.upper_bound,
            rep.lower_vacuous, rep.upper_vacuous]


# -- argument parsing ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairbound",
                                     description="fairness-constrained linear classification "
                                                 "with certified risk-difference bounds")
    parser.add_argument("--version", action="version", version=f"fairbound {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_surrogates=True):
        p.add_argument("--dataset", help="directory written by ingest")
        p.add_argument("--eta", help="propensity estimate: freq, model, or column:NAME")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out")
        if with_surrogates:
            p.add_argument("--phi", default="logistic", choices=SURROGATE_KINDS)
            p.add_argument("--kappa", default="hinge", choices=SURROGATE_KINDS)
            p.add_argument("--delta", default=None, choices=SURROGATE_KINDS)
            p.add_argument("--l2", type=float, default=1e-4)

    p = sub.add_parser("ingest", help="encode a raw file into a dataset directory")
    p.add_argument("--adult", help="UCI census-format file")
    p.add_argument("--csv", help="generic comma-separated file")
    p.add_argument("--schema", help="JSON column mapping, or @file.json")
    p.add_argument("--eta", help="freq, model, or column:NAME")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("check", help="constraint-free fairness criterion")
    common(p, with_surrogates=False)
    p.add_argument("--tau", type=float, required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("train", help="train a linear classifier")
    common(p)
    p.add_argument("--formulation", default="plain",
                   choices=("plain", "f1", "f2", "covariance"))
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--c1", type=float, default=None)
    p.add_argument("--c2", type=float, default=None)
    p.add_argument("--cov-threshold", type=float, default=None)
    p.add_argument("--random-init", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model or external predictions")
    common(p)
    p.add_argument("--model")
    p.add_argument("--predictions", help="text file with one +-1 label per line")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="budget sweep into a trade-off CSV")
    common(p)
    p.add_argument("--grid", required=True, help="comma-separated budgets")
    p.add_argument("--formulations", default="f2,covariance")
    p.add_argument("--folds", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (IngestionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
