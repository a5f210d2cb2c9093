"""Command-line interface.

Exit codes: 0 success, 1 malformed input or usage, 2 model error.
The default seed comes from ``TRANSPORT_AR_SEED`` when set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .distributions import DegenerateInputError, wasserstein_distance
from .grid import Grid, ProbGrid
from .models import (
    AtmVariant,
    FitConfig,
    ModelError,
    ModelSpec,
    build_transport_batch,
    evaluate_rolling,
    fit_atm1,
    fit_atmp,
    fit_cat,
    forecast_distribution,
    select_order,
)
from .simulation import (
    NOISE_VARIANTS,
    RATE_POINTS,
    TABLE_POINTS,
    ExperimentSpec,
    SimConfig,
    SinSimConfig,
    gaussian_shrinking_series,
    rate_experiment,
    run_monte_carlo,
    simulate_atm,
    simulate_sin_series,
    transports_as_distributions,
)

SEED_ENV = "TRANSPORT_AR_SEED"
EXIT_OK, EXIT_INPUT, EXIT_MODEL = 0, 1, 2

TABLE1_CELLS = [
    ("atm", (0.2, -0.5, 0.1, -0.3), 0.12264),
    ("atm", (0.5, 0.0, 0.0, 0.0), 0.11586),
    ("sin", (0.2, -0.5, 0.1, -0.3), 0.09841),
    ("sin", (0.5, 0.0, 0.0, 0.0), 0.09644),
]

log = logging.getLogger("transport_ar")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _int_list(text: str) -> tuple:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--grid-size", type=_positive, default=101, help="support grid nodes (default 101)")
    common.add_argument("--prob-size", type=_positive, default=201, help="probability levels (default 201)")
    common.add_argument("--seed", type=int, default=None, help=f"random seed (default ${SEED_ENV} or 0)")
    common.add_argument("--json-errors", action="store_true", help="also print errors as JSON on stdout")
    common.add_argument("--threads", type=_positive, default=1, help="worker processes for Monte Carlo runs")
    common.add_argument("-v", "--verbose", action="store_true")

    data = _Parser(add_help=False)
    data.add_argument("--input", "-i", required=True, help="long-format or quantile-matrix CSV")
    data.add_argument("--format", choices=("auto", "long", "quantile"), default="auto")
    data.add_argument("--support", type=float, nargs=2, metavar=("S1", "S2"))

    model = _Parser(add_help=False)
    model.add_argument("--variant", choices=("mean", "difference"), default="mean")
    model.add_argument("--model", choices=("atm", "cat"), default="atm")
    model.add_argument("--order", type=_positive, help="ATM order; omit to select by validation")
    model.add_argument("--candidates", type=_int_list, default=(1, 2, 3, 4, 5))
    model.add_argument("--presample", type=_positive, help="validation pre-sample length (default n/2)")
    model.add_argument("--eta", type=float, default=1.0)
    model.add_argument("--clip", type=float, default=10.0)
    model.add_argument("--max-iter", type=_positive, default=500)
    model.add_argument("--tol", type=float, default=1e-6)
    model.add_argument("--c-box", type=float, default=5.0)
    model.add_argument("--no-backtrack", action="store_true", help="plain fixed-step updates")

    p = _Parser(prog="transport-ar", description="Autoregressive transport models for distributional time series.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("fit", parents=[common, data, model], help="fit a model and write JSON")
    s.add_argument("--output", "-o", help="JSON path (default stdout)")

    s = sub.add_parser("forecast", parents=[common, data, model], help="one-step-ahead forecast")
    s.add_argument("--fit", help="JSON fit to use instead of refitting")
    s.add_argument("--output", "-o", help="quantile CSV path (default stdout)")

    s = sub.add_parser("validate", parents=[common, data, model], help="order selection and rolling error")
    s.add_argument("--window", type=_positive, help="rolling window length k (default n/3)")

    s = sub.add_parser("distance", parents=[common], help="Wasserstein distance between two files")
    s.add_argument("first")
    s.add_argument("second")
    s.add_argument("--support", type=float, nargs=2, metavar=("S1", "S2"))

    s = sub.add_parser("simulate", parents=[common], help="simulate a series, write quantile CSV")
    s.add_argument("--generator", choices=("atm", "sin"), default="atm")
    s.add_argument("--alphas", type=_float_list, default=(0.5,))
    s.add_argument("--n", type=int, default=101)
    s.add_argument("--burn-in", type=int, default=100)
    s.add_argument("--noise", choices=NOISE_VARIANTS, default="printed")
    s.add_argument("--rate-spline", action="store_true", help="use the control points of the rate experiment")
    s.add_argument("--lag-fix", action="store_true", help="sin generator: second coefficient on lag 2")
    s.add_argument("--output", "-o", help="CSV path (default stdout)")

    s = sub.add_parser("reproduce", parents=[common], help="run a packaged experiment")
    s.add_argument("experiment", choices=("table1", "rate", "nonstationary", "config"))
    s.add_argument("--config", help="experiment config file (for 'config')")
    s.add_argument("--replications", type=_positive)
    s.add_argument("--noise", choices=NOISE_VARIANTS, default="printed")
    s.add_argument("--lag-fix", action="store_true")
    s.add_argument("--output-dir", "-o", default=".")
    return p


# ---------------------------------------------------------------------------


def _seed(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


def _fit_config(args) -> FitConfig:
    try:
        return FitConfig(eta=args.eta, clip=args.clip, max_iter=args.max_iter, tol=args.tol,
                         c_box=args.c_box, seed=_seed(args), backtrack=not args.no_backtrack)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(args):
    return io.load_distributions(args.input, args.grid_size, args.prob_size, args.support, args.format)


def _fit(args, dists):
    variant = AtmVariant.parse(args.variant)
    config = _fit_config(args)
    batch = build_transport_batch(variant, dists)
    extra = {}
    if args.model == "cat":
        return variant, fit_cat(batch), config, batch, extra
    order = args.order
    if order is None:
        n = len(dists)
        k = args.presample or n // 2
        if len(args.candidates) == 1:
            order = args.candidates[0]
        else:
            order, errs = select_order(dists, k, n - k, args.candidates, config, variant, return_errors=True)
            extra["validation"] = {"presample": k, "errors": {str(c): e for c, e in errs.items()}}
    fit = fit_atm1(batch) if order == 1 else fit_atmp(batch, order, config)
    return variant, fit, config, batch, extra


def _emit(text: str, output):
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_fit(args) -> int:
    _, dists = _load(args)
    variant, fit, config, _, extra = _fit(args, dists)
    doc = io.fit_to_json(fit, variant.value, dists[0].support, config, _seed(args), extra)
    text = json.dumps(doc, indent=2, default=io._jsonable) + "\n"
    _emit(text, args.output)
    return EXIT_OK


def cmd_forecast(args) -> int:
    _, dists = _load(args)
    if args.fit:
        doc = io.load_json(args.fit)
        fit = io.fit_from_json(doc)
        variant = AtmVariant.parse(doc.get("variant", args.variant))
        batch = build_transport_batch(variant, dists)
    else:
        variant, fit, _, batch, _ = _fit(args, dists)
    pred = forecast_distribution(variant, fit, dists, batch)
    io.write_quantile_csv(args.output or sys.stdout, [pred], ["forecast"])
    return EXIT_OK


def cmd_validate(args) -> int:
    _, dists = _load(args)
    n = len(dists)
    k = args.window or max(n // 3, 1)
    config = _fit_config(args)
    variant = AtmVariant.parse(args.variant)
    if args.model == "cat":
        spec = ModelSpec(variant=variant, kind="cat", config=config)
        chosen = 1
    else:
        pre = args.presample or k
        chosen = select_order(dists, pre, min(k, n - pre), args.candidates, config, variant) \
            if args.order is None else args.order
        spec = ModelSpec(variant=variant, kind="atm", order=args.order, candidates=args.candidates, config=config)
    print(f"order: {chosen}")
    if n > 2 * k:
        loss = evaluate_rolling(dists, k, spec)
        print(f"rolling_loss: {loss:.6g}")
    else:
        print(f"rolling_loss: skipped (need more than {2 * k} distributions, have {n})")
    return EXIT_OK


def cmd_distance(args) -> int:
    support = args.support
    if support is None:
        lo, hi = np.inf, -np.inf
        for path in (args.first, args.second):
            _, d = io.load_distributions(path, args.grid_size, args.prob_size)
            lo, hi = min(lo, d[0].support.s1), max(hi, d[0].support.s2)
        support = (lo, hi)
    ta, a = io.load_distributions(args.first, args.grid_size, args.prob_size, support)
    tb, b = io.load_distributions(args.second, args.grid_size, args.prob_size, support)
    if len(a) != len(b):
        raise io.FormatError(f"files hold {len(a)} and {len(b)} distributions")
    if len(a) == 1:
        print(f"{wasserstein_distance(a[0], b[0]):.10g}")
        return EXIT_OK
    for t, x, y in zip(ta, a, b):
        print(f"{t},{wasserstein_distance(x, y):.10g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    if args.burn_in < 0:
        raise UsageError("--burn-in must be non-negative")
    seed = _seed(args)
    rng = np.random.default_rng(seed)
    prob = ProbGrid(args.prob_size)
    try:
        if args.generator == "atm":
            pts = RATE_POINTS if args.rate_spline else TABLE_POINTS
            cfg = SimConfig(args.alphas, args.n, args.burn_in, seed, args.noise, pts, args.grid_size)
            dists = transports_as_distributions(simulate_atm(cfg, rng), prob)
        else:
            cfg = SinSimConfig(args.alphas, args.n, seed, args.burn_in, args.lag_fix)
            dists = simulate_sin_series(cfg, rng, Grid(0.0, 1.0, args.grid_size), prob)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    times = [str(i + 1) for i in range(len(dists))]
    io.write_quantile_csv(args.output or sys.stdout, dists, times)
    return EXIT_OK


def _progress(done, total):
    if done % max(1, total // 10) == 0 or done == total:
        log.info("%d/%d replications", done, total)


def _run_spec(spec: ExperimentSpec, threads: int, out: Path, stem: str):
    res = run_monte_carlo(spec, threads=threads, progress=_progress)
    io.write_results_csv(out / f"{stem}_results.csv", res.records)
    summary = res.summary()
    io.save_json(out / f"{stem}_summary.json", {
        "schema": io.SUMMARY_SCHEMA, "version": 1,
        "spec": {k: v for k, v in asdict(spec).items()},
        "summary": summary,
        "failures": [{"replication": r, "model": m, "message": msg} for r, m, msg in res.failures],
    })
    return summary


def cmd_reproduce(args) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = _seed(args)
    reps = args.replications
    if args.experiment == "table1":
        rows = []
        for generator, alphas, reference in TABLE1_CELLS:
            spec = ExperimentSpec(generator=generator, alphas=alphas, replications=reps or 1000, seed=seed,
                                  noise=args.noise, lag_fix=args.lag_fix, grid_size=args.grid_size,
                                  prob_size=args.prob_size)
            stem = f"table1_{generator}_" + "_".join(f"{a:g}" for a in alphas)
            summary = _run_spec(spec, args.threads, out, stem)["atm_m"]
            rows.append((generator, alphas, summary, reference))
            print(f"{generator} {alphas}: mean={summary['mean']:.5f} se={summary['se']:.5f} "
                  f"(reference {reference:.5f}, failures {summary['failures']})")
        with (out / "table1.csv").open("w") as fh:
            fh.write("generator,alphas,model,mean,se,replications,failures,reference\n")
            for generator, alphas, s, reference in rows:
                fh.write(f"{generator},{' '.join(f'{a:g}' for a in alphas)},atm_m,{s['mean']!r},{s['se']!r},"
                         f"{s['replications']},{s['failures']},{reference!r}\n")
        return EXIT_OK
    if args.experiment == "rate":
        with (out / "rate.csv").open("w") as fh:
            fh.write("alpha,n,mean_abs_error\n")
            for alpha in (0.5, -0.5):
                r = rate_experiment(alpha, replications=reps or 200, seed=seed, noise=args.noise,
                                    grid_size=args.grid_size)
                for n, e in r["errors"].items():
                    fh.write(f"{alpha!r},{n},{e!r}\n")
                print(f"alpha={alpha:+.1f}: slope of log error on log n = {r['slope']:.3f}")
        return EXIT_OK
    if args.experiment == "nonstationary":
        dists = gaussian_shrinking_series(Grid(-10.0, 10.0, args.grid_size), ProbGrid(args.prob_size))
        preds, names = [], []
        for name in ("atm_m(1)", "atm_d(1)", "cat_m", "cat_d"):
            pred, _ = ModelSpec.parse(name).fit_forecast(dists)
            preds.append(pred)
            names.append(name)
            print(f"{name}: forecast variance {pred.variance():.4f} (last observed {dists[-1].variance():.4f})")
        io.write_quantile_csv(out / "nonstationary_forecasts.csv", preds, names)
        return EXIT_OK
    if not args.config:
        raise UsageError("reproduce config needs --config FILE")
    kw = io.read_experiment_config(args.config)
    kw.setdefault("seed", seed)
    if reps:
        kw["replications"] = reps
    try:
        spec = ExperimentSpec(**kw)
    except (TypeError, ValueError) as exc:
        raise io.FormatError(f"invalid experiment config: {exc}") from None
    summary = _run_spec(spec, args.threads, out, "experiment")
    for name, s in summary.items():
        print(f"{name}: mean={s['mean']:.5f} se={s['se']:.5f} n={s['replications']} failures={s['failures']}")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "validate": cmd_validate,
    "distance": cmd_distance,
    "simulate": cmd_simulate,
    "reproduce": cmd_reproduce,
}


def _fail(code: int, kind: str, message: str, json_errors: bool) -> int:
    print(f"error: {message}", file=sys.stderr)
    if json_errors:
        print(json.dumps({"error": kind, "message": message, "exit_code": code}))
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    json_errors = "--json-errors" in argv
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_INPUT, "usage", str(exc), json_errors)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail(EXIT_INPUT, "usage", str(exc), json_errors)
    except io.FormatError as exc:
        return _fail(EXIT_INPUT, "input", str(exc), json_errors)
    except DegenerateInputError as exc:
        return _fail(EXIT_MODEL, "degenerate", str(exc), json_errors)
    except ModelError as exc:
        return _fail(EXIT_MODEL, type(exc).__name__, str(exc), json_errors)
    except ValueError as exc:
        # remaining value errors come from data that the models cannot use
        return _fail(EXIT_MODEL, "model", str(exc), json_errors)


if __name__ == "__main__":
    sys.exit(main())
