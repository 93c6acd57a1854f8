"""Command-line entry point: ``hermite-risk {generate,analyze,simulate,compare}``.

Exit codes: 0 success, 2 validation, 3 numerical, 4 I/O.
Configuration layers as defaults < ``--config`` JSON file < flags.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from decimal import Decimal
from pathlib import Path

from .estimators import check_orders, check_portfolio
from .exceptions import (
    DegeneratePortfolioError,
    DigestMismatchError,
    InsufficientTailError,
    MonotonicityError,
    NumericalError,
    ValidationError,
)
from .expansion import SymmetricTensor, expand_portfolio, tail_split
from .measures import RiskConfig, analyze
from .montecarlo import SimConfig, simulate
from .portfolio import load_portfolio, save_portfolio, synthesize_benchmark, synthesize_heterogeneous
from .reporting import (
    RunManifest,
    compare_documents,
    file_digest,
    format_comparison,
    read_json,
    report_document,
    sim_document,
    write_comparison,
    write_contributions_csv,
    write_json,
    write_sim_contributions_csv,
    write_tail_csv,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

ANALYZE_DEFAULTS = {
    "alpha": 0.001, "orders": "1f,mf2,mf3,ga2,ga3", "onef_order": 30, "tensor_order": 3,
    "cond_cap": 8, "idio_k_cap": 6, "idio_method": "series", "mu3_terms": "standard",
}
SIM_DEFAULTS = {
    "alpha": 0.001, "scenarios": 1_000_000, "seed": 0, "mode": "systematic", "window": None,
    "batch_size": 16_384, "workers": 1,
}


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def tail_probability(text) -> float:
    """Accept ``0.001``, ``0.999`` or ``99.9`` and return the lower tail probability."""
    x = Decimal(str(text))
    if x > 1:
        x = (100 - x) / 100
    elif x >= Decimal("0.5"):
        x = 1 - x
    return float(x)


def parse_window(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        lo, hi = text
    else:
        lo, _, hi = str(text).partition(":")
        if not hi:
            raise ValueError(f"window must be lo:hi, got {text!r}")
    a, b = sorted((tail_probability(lo), tail_probability(hi)))
    return (a, b)


def _layer(defaults: dict, args, keys) -> dict:
    cfg = dict(defaults)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_IO, f"cannot read config {args.config}: {exc}") from exc
        if "confidence" in loaded:
            loaded["alpha"] = tail_probability(loaded.pop("confidence"))
        cfg.update({k: v for k, v in loaded.items() if k in defaults})
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if getattr(args, "confidence", None) is not None:
        cfg["alpha"] = tail_probability(args.confidence)
    if getattr(args, "alpha", None) is not None:
        cfg["alpha"] = tail_probability(args.alpha)
    return cfg


def _load(args):
    try:
        portfolio = load_portfolio(args.portfolio, args.factors)
        digests = {"portfolio": file_digest(args.portfolio), "factors": file_digest(args.factors)}
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_IO, f"cannot read portfolio: {exc}") from exc
    check_portfolio(portfolio)
    return portfolio, digests


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create {out}: {exc}") from exc
    return out


def cmd_generate(args) -> int:
    counts = (args.regions, args.industries)
    if args.kind == "heterogeneous":
        p = synthesize_heterogeneous(loans=args.loans, factor_counts=counts, seed=args.seed,
                                     factor_correlation=args.factor_correlation)
    else:
        p = synthesize_benchmark(args.kind, factor_counts=counts, loans=args.loans, rho=args.rho,
                                 pd=args.pd, seed=args.seed, block=args.block,
                                 factor_correlation=args.factor_correlation)
    out = _out_dir(args.out_dir)
    save_portfolio(p, out / "portfolio.csv", out / "factors.json")
    print(f"wrote {len(p)} facilities on {p.n_factors} factors to {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _layer(ANALYZE_DEFAULTS, args, ["orders", "onef_order", "tensor_order", "cond_cap",
                                           "idio_k_cap", "idio_method", "mu3_terms"])
    portfolio, digests = _load(args)
    rc = RiskConfig(
        alpha=float(cfg["alpha"]), orders=check_orders(cfg["orders"]),
        onef_order=int(cfg["onef_order"]), tensor_order=int(cfg["tensor_order"]),
        cond_cap=int(cfg["cond_cap"]), idio_k_cap=int(cfg["idio_k_cap"]),
        idio_method=cfg["idio_method"], mu3_terms=cfg["mu3_terms"],
    )
    timings = {}
    t0 = time.perf_counter()
    expansion = None
    if args.dump_tensors:
        expansion = expand_portfolio(
            portfolio, onef_order=rc.onef_order, tensor_order=rc.tensor_order, cond_cap=rc.cond_cap,
            coef_order=max(rc.idio_order, rc.sigma_order or 0), coef_method=rc.coef_method,
        )
    report = analyze(portfolio, rc, expansion=expansion, timings=timings)
    timings["total"] = time.perf_counter() - t0
    manifest = RunManifest("analyze", rc.to_dict(), digests, timings=timings,
                           deterministic=args.deterministic)
    out = _out_dir(args.out_dir)
    write_json(report_document(report, manifest), out / "report.json")
    write_contributions_csv(report, out / "contributions.csv")
    if expansion is not None:
        write_json(tensor_dump(expansion), out / "tensors.json")
    for label, v in report.cumulative_var().items():
        print(f"VaR[{label}] = {v:.8g}")
    print(f"ES = {report.es_total:.8g}  sigma = {report.sigma:.8g}")
    return EXIT_OK


def tensor_dump(expansion) -> dict:
    """Rotated coefficient tensors and tail split, keyed by sorted multi-index."""
    e = expansion
    return {
        "rotation": json.loads(e.rotation.to_json()),
        "tensors": {
            str(n): SymmetricTensor.from_rank_one_sum(e.c[:, n], e.loadings, n).to_json_dict()
            for n in range(1, e.tensor_order + 1)
        },
        "tail": tail_split(e).to_json_dict(),
    }


def cmd_simulate(args) -> int:
    cfg = _layer(SIM_DEFAULTS, args, ["scenarios", "seed", "mode", "window", "batch_size", "workers"])
    portfolio, digests = _load(args)
    sc = SimConfig(
        scenarios=int(cfg["scenarios"]), seed=int(cfg["seed"]), mode=cfg["mode"],
        alpha=float(cfg["alpha"]), window=parse_window(cfg["window"]),
        batch_size=int(cfg["batch_size"]), workers=int(cfg["workers"]),
    )
    t0 = time.perf_counter()
    result = simulate(portfolio, sc)
    timings = {"total": time.perf_counter() - t0}
    if cfg["window"] is not None and result.contributions is None:
        raise InsufficientTailError(
            f"contribution window holds {result.window_count} scenarios, need at least 100"
        )
    manifest = RunManifest("simulate", sc.to_dict(), digests, timings=timings,
                           deterministic=args.deterministic)
    out = _out_dir(args.out_dir)
    write_json(sim_document(result, manifest), out / "simulation.json")
    if result.contributions is not None:
        write_sim_contributions_csv(result, out / "mc_contributions.csv")
    if args.tail_dump:
        write_tail_csv(result, out / "tail.csv")
    print(f"VaR = {result.var_estimate:.8g} +- {result.var_std_error:.3g}  "
          f"ES = {result.es_estimate:.8g} +- {result.es_std_error:.3g}  seed = {result.seed}")
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        a, b = read_json(args.analytic), read_json(args.reference)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_IO, f"cannot read inputs: {exc}") from exc
    cmp = compare_documents(a, b)
    write_comparison(cmp, _out_dir(args.out_dir))
    print(format_comparison(cmp))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hermite-risk", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic benchmark portfolio")
    g.add_argument("--kind", choices=["diversified", "concentrated", "heterogeneous"], default="concentrated")
    g.add_argument("--regions", type=int, default=45)
    g.add_argument("--industries", type=int, default=61)
    g.add_argument("--loans", type=int, default=500)
    g.add_argument("--block", type=int, default=100)
    g.add_argument("--rho", type=float, default=0.6)
    g.add_argument("--pd", type=float, default=0.01)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--factor-correlation", type=float, default=0.0)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_generate)

    def common(p):
        p.add_argument("portfolio")
        p.add_argument("factors")
        p.add_argument("--out-dir", required=True)
        p.add_argument("--config")
        lvl = p.add_mutually_exclusive_group()
        lvl.add_argument("--alpha", help="lower tail probability, e.g. 0.001")
        lvl.add_argument("--confidence", help="confidence level, e.g. 99.9 or 0.999")
        p.add_argument("--deterministic", action="store_true",
                       help="leave timings out so reruns are byte-identical")

    a = sub.add_parser("analyze", help="analytic risk report")
    common(a)
    a.add_argument("--orders")
    a.add_argument("--onef-order", dest="onef_order", type=int)
    a.add_argument("--tensor-order", dest="tensor_order", type=int)
    a.add_argument("--cond-cap", dest="cond_cap", type=int)
    a.add_argument("--idio-k-cap", dest="idio_k_cap", type=int)
    a.add_argument("--idio-method", dest="idio_method", choices=["series", "closed_form"])
    a.add_argument("--mu3-terms", dest="mu3_terms", choices=["standard", "complete"])
    a.add_argument("--dump-tensors", dest="dump_tensors", action="store_true",
                   help="also write tensors.json for cross-implementation diffing")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="Monte Carlo benchmark")
    common(s)
    s.add_argument("--scenarios", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--mode", choices=["systematic", "full"])
    s.add_argument("--window", help="contribution window lo:hi, e.g. 99.875:99.925")
    s.add_argument("--batch-size", dest="batch_size", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--tail-dump", action="store_true", help="also write tail.csv")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="relative differences between two outputs")
    c.add_argument("analytic")
    c.add_argument("reference")
    c.add_argument("--out-dir", required=True)
    c.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DigestMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MonotonicityError as exc:
        print(f"error: {exc} (eta={exc.eta:.6g}, V_1f'={exc.slope:.6g})", file=sys.stderr)
        return EXIT_NUMERICAL
    except (NumericalError, DegeneratePortfolioError, InsufficientTailError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
