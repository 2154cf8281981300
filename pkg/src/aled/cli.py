"""Command-line surface: detect, evaluate, simulate, pool.

Machine output is JSON only (stdout or --out); human-oriented summaries go
to stderr.  Exit codes: 0 success, 2 usage or input error, 3 numerical
failure.  ALED_THREADS optionally caps ensemble parallelism; output is
identical regardless of thread count.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import tensor_io
from .detector import DetectorConfig, detect
from .errors import INPUT_ERRORS, NUMERICAL_ERRORS, FormatError, ShapeError
from .mcd import McdConfig
from .metrics import auprc, confusion_metrics, with_auprc
from .simulate import SynthSpec, run_trials

_DEFAULT_SWEEP = "1,2,5,10,20,50"


def _emit(doc: dict, out_path: str | None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)


def _info(message: str) -> None:
    print(message, file=sys.stderr)


def _parse_priors(raw: str) -> tuple[float, float]:
    try:
        given, alt = (float(v) for v in raw.split(","))
    except ValueError as exc:
        raise FormatError(f"--priors expects 'given,alt', got {raw!r}") from exc
    return given, alt


def cmd_detect(args) -> int:
    features = tensor_io.load_feature_file(args.features)
    labels = tensor_io.load_labels(args.labels)
    config = DetectorConfig(reduced_dim=args.dim, ensembles=args.ensembles,
                            tau=args.tau, seed=args.seed)
    priors = _parse_priors(args.priors) if args.priors else None
    report = detect(features, labels, config, priors=priors)
    doc = tensor_io.report_to_dict(report)
    _emit(doc, args.out)
    _info(f"flagged {len(doc['flagged'])} of {len(doc['samples'])} samples "
          f"(tau={args.tau})")
    return 0


def _flags_at(lambdas: np.ndarray, tau: float) -> np.ndarray:
    return lambdas > tau


def cmd_evaluate(args) -> int:
    doc = tensor_io.load_report(args.report)
    truth = tensor_io.load_labels(args.truth).labels.astype(bool)
    samples = doc["samples"]
    flags = np.array([s["flagged"] for s in samples], dtype=bool)
    scores = np.array([s["posterior_mislabel"] for s in samples], dtype=float)
    lambdas = np.array([s["lambda"] for s in samples], dtype=float)

    summary = with_auprc(confusion_metrics(flags, truth), scores, truth)
    out = {"config": {"report": str(args.report), "truth": str(args.truth),
                      "detector": doc.get("config", {})}}
    out.update(summary.to_dict())
    if args.threshold_sweep is not None:
        taus = [float(t) for t in (args.threshold_sweep or _DEFAULT_SWEEP).split(",")]
        rows = []
        for tau in taus:
            if tau <= 0:
                raise FormatError(f"sweep thresholds must be positive, got {tau}")
            ms = confusion_metrics(_flags_at(lambdas, tau), truth)
            rows.append({"tau": tau, "sensitivity": ms.sensitivity,
                         "ppv": ms.ppv, "f1": ms.f1})
        out["threshold_sweep"] = rows
    _emit(out, args.out)
    _info(f"f1={summary.f1:.4f} auprc={out['auprc']:.4f}")
    return 0


def _load_config_doc(name: str) -> dict:
    path = Path(name)
    if path.exists():
        text = path.read_text()
    else:
        bundled = resources.files("aled").joinpath("configs", name)
        if not bundled.is_file():
            raise FormatError(f"config not found: {name}")
        text = bundled.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{name}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{name}: config must be a JSON object")
    return doc


def _detector_from_dict(doc: dict) -> DetectorConfig:
    mcd = McdConfig(**doc.get("mcd", {}))
    return DetectorConfig(reduced_dim=int(doc.get("dim", 2)),
                          ensembles=int(doc.get("ensembles", 10)),
                          tau=float(doc.get("tau", 2.0)),
                          seed=int(doc.get("seed", 0)), mcd=mcd)


def cmd_simulate(args) -> int:
    if args.config:
        doc = _load_config_doc(args.config)
        try:
            spec = SynthSpec(**doc["spec"])
            det_config = _detector_from_dict(doc.get("detector", {}))
            rates = doc.get("noise_rate", 0.05)
            trials = (args.trials if args.trials is not None
                      else int(doc.get("trials", 3)))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"invalid experiment config: {exc}") from exc
    else:
        spec = SynthSpec(m=args.m, p=args.p, separation=args.separation,
                         cov_kind=args.cov_kind, cov_scale_ratio=args.beta,
                         class_balance=args.balance, seed=args.data_seed)
        det_config = DetectorConfig(reduced_dim=args.dim,
                                    ensembles=args.ensembles, tau=args.tau,
                                    seed=args.seed)
        rates = args.noise_rate
        trials = args.trials if args.trials is not None else 3
    if isinstance(rates, str):
        rates = [float(r) for r in rates.split(",")]
    elif not isinstance(rates, (list, tuple)):
        rates = [float(rates)]

    rows = []
    for rate in rates:
        agg = run_trials(spec, float(rate), det_config, trials)
        row = {"noise_rate": float(rate)}
        row.update(agg.to_dict())
        if args.per_trial:
            row["per_trial"] = [
                {name: getattr(o.metrics, name)
                 for name in ("sensitivity", "specificity", "ppv", "npv",
                              "f1", "auprc")}
                for o in agg.trials]
        rows.append(row)
        _info(f"noise_rate={rate}: " + " ".join(
            f"{k}={v['mean']:.4f}±{v['sem']:.4f}"
            for k, v in row["metrics"].items()))
    out = {"config": {"spec": spec.to_dict(),
                      "detector": det_config.to_dict(),
                      "trials": trials},
           "rows": rows}
    _emit(out, args.out)
    return 0


def cmd_pool(args) -> int:
    tensor = tensor_io.load_feature_file(args.in_path)
    if not isinstance(tensor, tensor_io.FeatureMapStack):
        raise ShapeError(f"{args.in_path}: pooling requires a rank-4 tensor")
    pooled = tensor_io.average_pool(tensor)
    tensor_io.save_features(pooled, args.out)
    _info(f"pooled {tensor.sample_count}x{tensor.channel_count}x"
          f"{tensor.spatial_size}x{tensor.spatial_size} -> "
          f"{pooled.sample_count}x{pooled.dim}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aled",
        description="Label-error detection for binary classification "
                    "feature embeddings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="flag likely label errors")
    p.add_argument("--features", required=True, help="rank-2 or rank-4 tensor")
    p.add_argument("--labels", required=True, help="binary label file")
    p.add_argument("--dim", type=int, default=2,
                   help="projected dimension (default 2)")
    p.add_argument("--ensembles", type=int, default=10,
                   help="ensemble size (default 10)")
    p.add_argument("--tau", type=float, default=2.0,
                   help="likelihood-ratio threshold (default 2.0)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--priors", help="fixed 'given,alt' posterior priors")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score a report against a truth mask")
    p.add_argument("--report", required=True)
    p.add_argument("--truth", required=True, help="0/1 mislabel mask file")
    p.add_argument("--out")
    p.add_argument("--threshold-sweep", nargs="?", const=_DEFAULT_SWEEP,
                   default=None, metavar="TAUS",
                   help=f"emit per-threshold rows (default {_DEFAULT_SWEEP})")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="run synthetic noise experiments")
    p.add_argument("--config", help="experiment JSON (path or bundled name)")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--m", type=int, default=2000)
    p.add_argument("--p", type=int, default=256)
    p.add_argument("--separation", type=float, default=8.25)
    p.add_argument("--cov-kind", default="isotropic")
    p.add_argument("--beta", type=float, default=1.0,
                   help="class-1/class-0 covariance scale ratio")
    p.add_argument("--balance", type=float, default=0.5,
                   help="fraction of class-1 samples")
    p.add_argument("--noise-rate", default="0.05",
                   help="rate or comma-separated list")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--ensembles", type=int, default=10)
    p.add_argument("--tau", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0, help="detector seed")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--per-trial", action="store_true",
                   help="include per-trial metric rows")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pool", help="average-pool a rank-4 tensor to rank 2")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pool)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        _info(f"error: {exc}")
        return 2
    except NUMERICAL_ERRORS as exc:
        _info(f"numerical failure: {exc}")
        return 3


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
