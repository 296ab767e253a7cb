"""Command-line front end: bound, verify, sweep and selftest.

Exit codes: 0 success, 1 configuration error, 2 numerical precondition
failure, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Optional

import numpy as np

from . import __version__, checks, linalg, rng
from .bounds import bound_for_model
from .chaos import SingularCovariance
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .model import ModelError
from .quadrature import IntegrationError
from .simulate import CostGuardError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

SWEEP_COLUMNS = ["t", "term1", "term2", "total", "total_SE", "delta_lower", "delta_SE", "cov_err",
                 "kurtosis_max", "dominated", "model", "seed", "wiring", "paper_literal", "replicates",
                 "nodes_per_dim", "mc_samples", "tensor_dim_cap"]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _check_target(model) -> None:
    """Reject a non-PD target before any integration work."""
    try:
        linalg.check_symmetric(model.targetC)
    except linalg.NotSymmetric as exc:
        raise ConfigError(f"C: {exc}") from exc
    linalg.sqrt_pd(model.targetC)


# ---------------------------------------------------------------------------
# commands


def bound_payload(cfg: RunConfig, t: Optional[float] = None) -> dict:
    model = cfg.build_model(t)
    _check_target(model)
    mb = bound_for_model(model, cfg.budget, cfg.seed, cfg.wiring, cfg.paper_literal)
    return {
        "command": "bound",
        "version": __version__,
        "config": cfg.to_dict(),
        "mean": mb.mean,
        "mean_std_error": mb.mean_se,
        "report": mb.report.to_dict(),
    }


def cmd_bound(cfg: RunConfig) -> int:
    _emit(dumps(bound_payload(cfg)), cfg.out)
    return EXIT_OK


def _verify(cfg: RunConfig, t: Optional[float] = None):
    if cfg.replicates < 10:
        raise ConfigError(f"verification needs budgets.replicates >= 10, got {cfg.replicates}")
    model = cfg.build_model(t)
    _check_target(model)
    return checks.verify_model(model, cfg.replicates, cfg.budget, cfg.seed, cfg.wiring, cfg.paper_literal)


def verify_payload(cfg: RunConfig) -> dict:
    v = _verify(cfg)
    rep = v.bound.report
    criteria = [
        {"name": "bound-domination", "passed": v.dominated,
         "detail": {"delta_lower": v.distance.lower_bound, "delta_lower_std_error": v.distance.lower_bound_se,
                    "total": rep.total, "total_std_error": rep.total_se, "sigmas": checks.SIGMAS}},
        {"name": "covariance-match", "passed": v.covariance_match,
         "detail": {"max_z": float(np.max(v.covariance_z)), "sigmas": checks.SIGMAS}},
    ]
    return {
        "command": "verify",
        "version": __version__,
        "config": cfg.to_dict(),
        "bound": {"term1": rep.term1, "term2": rep.term2, "total": rep.total, "total_std_error": rep.total_se,
                  "Sigma": rep.Sigma, "mean": v.bound.mean},
        "distance": v.distance.to_dict(),
        "moments": v.moments.to_dict(),
        "criteria": criteria,
        "passed": all(c["passed"] for c in criteria),
    }


def cmd_verify(cfg: RunConfig) -> int:
    payload = verify_payload(cfg)
    _emit(dumps(payload), cfg.out)
    return EXIT_OK if payload["passed"] else EXIT_VERIFY


def sweep_rows(cfg: RunConfig) -> list:
    if len(cfg.sweep) < 2:
        raise ConfigError("sweep.t needs at least two values")
    rows = []
    for t in cfg.sweep:
        v = _verify(cfg, t)
        rep = v.bound.report
        rows.append({
            "t": t, "term1": rep.term1, "term2": rep.term2, "total": rep.total, "total_SE": rep.total_se,
            "delta_lower": v.distance.lower_bound, "delta_SE": v.distance.lower_bound_se,
            "cov_err": float(np.max(v.moments.cov_error)), "kurtosis_max": v.moments.max_abs_kurtosis,
            "dominated": int(v.dominated), "model": cfg.model.get("name", "inline"), "seed": cfg.seed,
            "wiring": cfg.wiring, "paper_literal": int(cfg.paper_literal), "replicates": cfg.replicates,
            "nodes_per_dim": cfg.budget.nodes_per_dim, "mc_samples": cfg.budget.mc_samples,
            "tensor_dim_cap": cfg.budget.tensor_dim_cap,
        })
    return rows


def format_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in SWEEP_COLUMNS])
    return buf.getvalue()


def cmd_sweep(cfg: RunConfig) -> int:
    _emit(format_csv(sweep_rows(cfg)), cfg.out)
    return EXIT_OK


def cmd_selftest(seed: int = 0, mutation: Optional[str] = None, out: Optional[str] = None,
                 stream=None) -> int:
    stream = stream or sys.stdout
    results = checks.run_selftest(seed, mutation)
    for res in results:
        stream.write(f"{'PASS' if res.passed else 'FAIL'}  {res.name}\n")
    ok = all(r.passed for r in results)
    stream.write(f"{sum(r.passed for r in results)}/{len(results)} checks passed\n")
    if out:
        _emit(dumps({"command": "selftest", "version": __version__, "seed": seed, "mutation": mutation,
                     "results": [r.to_dict() for r in results], "passed": ok}), out)
    return EXIT_OK if ok else EXIT_VERIFY


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ustatbound",
                                     description="Normal-approximation bounds for vectors of Poisson U-statistics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, metavar="U64", help="root seed (overrides seeds.root)")
    common.add_argument("--threads", type=int, metavar="N", help="worker threads; affects speed only")
    common.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    common.add_argument("--wiring", choices=("expansion", "grouped"), help="shared-variable wiring of variance terms")
    common.add_argument("--paper-literal", action="store_true",
                        help="also report the single-M variant of the first term")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("bound", parents=[common], help="compute the bound and write a JSON report")
    sub.add_parser("verify", parents=[common], help="simulate and check the bound against the data")
    sub.add_parser("sweep", parents=[common], help="bound and verify over sweep.t; writes CSV")
    st = sub.add_parser("selftest", parents=[common], help="run the invariant suite at reduced budgets")
    st.add_argument("--list", action="store_true", help="list the checks without running them")
    st.add_argument("--mutate", choices=checks.MUTATIONS, help="fault injection for testing the suite itself")
    return parser


COMMANDS = {"bound": cmd_bound, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        rng.set_threads(args.threads)
    try:
        if args.command == "selftest":
            if args.list:
                sys.stdout.write("".join(f"{name}\n" for name in checks.SELFTESTS))
                return EXIT_OK
            seed = 0 if args.seed is None else args.seed
            if not 0 <= seed < 2 ** 64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            return cmd_selftest(seed, args.mutate, args.out)
        if not args.config:
            raise ConfigError("--config is required")
        cfg = apply_overrides(load_config(args.config), args.seed, args.out, args.wiring, args.paper_literal)
        return COMMANDS[args.command](cfg)
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (linalg.NotPositiveDefinite, SingularCovariance, IntegrationError, CostGuardError) as exc:
        print(f"numerical precondition failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
