"""Command-line front end: ``fit``, ``simulate`` and ``backtest``.

Predictor order is the order of ``--term`` flags, preceded by the intercept
unless ``--no-intercept`` is given.  ``--keep`` positions are 1-based in
that order, so with an intercept ``--keep 1`` forces the constant.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as dio
from .backtest import backtest
from .dlm import PriorSpec
from .engine import VDEC_COLUMNS, DmaConfig, default_threads, run_dma
from .errors import ConfigError, DmaError
from .models import DEFAULT_MAX_PREDICTORS, KITCHEN_SINK, count_models, enumerate_models
from .simulate import SimSpec, simulate_dlm

log = logging.getLogger("tvpdma")

SERIES_FILES = ("yhat.csv", "lpdf.csv", "inclusion.csv", "theta.csv", "size.csv",
                "deltahat.csv", "pmt.csv", "vardec.csv", "topprob.csv")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def parse_delta(text: str) -> tuple[float, ...]:
    try:
        if ":" in text:
            a, b, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError
            count = int(np.floor((b - a) / step + 1e-9)) + 1
            return tuple(float(round(a + i * step, 10)) for i in range(count))
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"bad --delta {text!r}; use A:B:STEP or a comma list") from None


def parse_keep(text: str | None, names: list[str]):
    if text is None:
        return None
    if text.strip().upper() == KITCHEN_SINK:
        return KITCHEN_SINK
    keep = []
    for item in text.split(","):
        item = item.strip()
        if item.isdigit():
            pos = int(item)
            if not 1 <= pos <= len(names):
                raise ConfigError(f"--keep position {pos} outside 1..{len(names)}")
            keep.append(pos - 1)
        elif item in names:
            keep.append(names.index(item))
        else:
            raise ConfigError(f"--keep names unknown predictor {item!r}; predictors are {names}")
    return keep


def _fit_arguments(p: argparse.ArgumentParser, required: bool = True):
    p.add_argument("--data", required=required, help="CSV file with a header row")
    p.add_argument("--time-column", default=None, help="column holding the time index")
    p.add_argument("--response", required=required)
    p.add_argument("--term", action="append", default=[], metavar="NAME[:LAG]",
                   help="predictor column, optionally lagged; repeat for each predictor")
    p.add_argument("--intercept", dest="intercept", action="store_true", default=True)
    p.add_argument("--no-intercept", dest="intercept", action="store_false")
    p.add_argument("--delta", default="0.90,0.95,0.99", help="A:B:STEP or comma list")
    p.add_argument("--alpha", type=float, default=0.99)
    p.add_argument("--keep", default=None, help="KS, or comma list of names / 1-based positions")
    p.add_argument("--prior", choices=["diffuse", "zellner"], default="diffuse")
    p.add_argument("--g", type=float, default=100.0)
    p.add_argument("--n0", type=float, default=1.0)
    p.add_argument("--s0", type=float, default=1.0)
    p.add_argument("--burn", type=int, default=0)
    p.add_argument("--threads", type=int, default=default_threads())
    p.add_argument("--max-predictors", type=int, default=DEFAULT_MAX_PREDICTORS)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tvpdma", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="run model averaging and write all series")
    _fit_arguments(fit)
    fit.add_argument("--out", required=True, help="output directory")
    fit.add_argument("--dry-run", action="store_true",
                     help="report the model space in meta.json without fitting")
    fit.add_argument("--quiet", action="store_true", help="do not print the summary")

    sim = sub.add_parser("simulate", help="write a synthetic random-walk-coefficient dataset")
    sim.add_argument("--t", type=int, required=True)
    sim.add_argument("--n", type=int, required=True, help="predictor count including the constant")
    sim.add_argument("--obs-var", type=float, default=0.1)
    sim.add_argument("--state-var", default=None, help="comma list of n variances (default 0.01 each)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="dataset CSV path")
    sim.add_argument("--theta-out", default=None, help="true coefficient path CSV (default <out>_theta.csv)")

    bt = sub.add_parser("backtest", help="score forecasts after burn-in")
    bt.add_argument("--run", default=None, help="directory written by 'fit'")
    _fit_arguments(bt, required=False)
    bt.add_argument("--out", default=None, help="directory for scores.csv (default: --run)")
    return parser


def _design_from_args(args) -> dio.Design:
    ds = dio.load_csv(args.data, args.time_column)
    spec = dio.DesignSpec(args.response, dio.parse_terms(args.term), args.intercept)
    return dio.build_design(ds, spec)


def _config_from_args(args, names):
    prior = PriorSpec(kind=args.prior, g=args.g, n0=args.n0, s0=args.s0)
    return DmaConfig(
        delta_grid=parse_delta(args.delta),
        alpha=args.alpha,
        keep=parse_keep(args.keep, names),
        prior=prior,
        burn=args.burn,
        threads=args.threads,
        max_predictors=args.max_predictors,
    )


def _write_table(path: Path, header, time, *columns):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", *header])
        cols = [np.asarray(c) for c in columns]
        for r, tv in enumerate(time):
            row = []
            for c in cols:
                vals = c[r] if c.ndim > 1 else [c[r]]
                row += [str(int(v)) if c.dtype.kind in "iu" else f"{v:.17g}" for v in vals]
            w.writerow([dio.format_time(tv), *row])


def write_outputs(out_dir: Path, out, time, burn: int):
    out_dir.mkdir(parents=True, exist_ok=True)
    sl = slice(burn, None)
    time = time[sl]
    names = list(out.names)
    _write_table(out_dir / "yhat.csv", ["yhat_dma", "yhat_dms"], time, out.yhat_dma[sl], out.yhat_dms[sl])
    _write_table(out_dir / "lpdf.csv", ["lpdf_dma", "lpdf_dms"], time, out.lpdf_dma[sl], out.lpdf_dms[sl])
    _write_table(out_dir / "inclusion.csv", names, time, out.incl[sl])
    _write_table(out_dir / "theta.csv", names, time, out.theta[sl])
    _write_table(out_dir / "size.csv", ["size", "size_dms"], time, out.size[sl], out.size_dms[sl])
    _write_table(out_dir / "deltahat.csv", ["deltahat"], time, out.deltahat[sl])
    _write_table(out_dir / "pmt.csv", [f"{dl:g}" for dl in out.delta_grid], time, out.pmt[sl])
    _write_table(out_dir / "vardec.csv", list(VDEC_COLUMNS), time, out.vdec[sl])
    _write_table(out_dir / "topprob.csv", ["highmp", "top01"], time, out.highmp[sl], out.highmp_top01[sl])


def _write_scores(path: Path, scores):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "DMA", "DMS"])
        for metric in ("MSE", "MAD", "logPL"):
            w.writerow([metric, f"{scores['DMA'][metric]:.17g}", f"{scores['DMS'][metric]:.17g}"])


def format_summary(out, y, burn: int) -> str:
    sl = slice(burn, None)
    lines = []
    resid = y[sl] - out.yhat_dma[sl]
    q = np.quantile(resid, [0, 0.25, 0.5, 0.75, 1])
    lines.append("Residuals:")
    lines.append("{:>9} {:>9} {:>9} {:>9} {:>9}".format("Min", "1Q", "Median", "3Q", "Max"))
    lines.append(" ".join(f"{v:9.4f}" for v in q))
    lines.append("")
    width = max(len(nm) for nm in out.names) + 2
    lines.append("Coefficients:")
    lines.append(" " * width + "E[theta_t] SD[theta_t] E[P(theta_t)] SD[P(theta_t)]")
    th, inc = out.theta[sl], out.incl[sl]
    for j, nm in enumerate(out.names):
        lines.append(f"{nm:<{width}}{th[:, j].mean():10.2f} {th[:, j].std(ddof=1) if th.shape[0] > 1 else 0:11.2f}"
                     f" {inc[:, j].mean():13.2f} {inc[:, j].std(ddof=1) if inc.shape[0] > 1 else 0:14.2f}")
    lines.append("")
    shares = variance_shares(out, burn)
    lines.append("Variance contribution (in percentage points):")
    lines.append("  ".join(f"{c:>7}" for c in VDEC_COLUMNS[:4]))
    lines.append("  ".join(f"{v:7.2f}" for v in shares))
    lines.append("")
    sc = backtest(out, y, burn)
    lines.append("Forecast Performance:")
    lines.append(f"{'':<22}{'DMA':>10}{'DMS':>10}")
    for metric, label in (("MSE", "MSE"), ("MAD", "MAD"), ("logPL", "Predictive Likelihood")):
        lines.append(f"{label:<22}{sc['DMA'][metric]:10.3f}{sc['DMS'][metric]:10.3f}")
    return "\n".join(lines)


def variance_shares(out, burn: int = 0) -> np.ndarray:
    """Time-averaged percentage share of each variance component."""
    v = out.vdec[burn:]
    return 100.0 * np.mean(v[:, :4] / v[:, 4:5], axis=0)


def format_show(meta: dict) -> str:
    grid = ", ".join(f"{x:.2f}" for x in meta["delta_grid"])
    lines = [
        f"T     = {meta['T']}",
        f"n     = {meta['n']}",
        f"d     = {meta['d']}",
        f"Alpha = {meta['alpha']}",
        f"Model combinations = {meta['k']}",
        f"Model combinations including averaging over delta = {meta['combinations_with_delta']}",
        f"Prior : {meta['prior']}",
    ]
    if meta.get("keep"):
        lines.append(f"Variables always included : {', '.join(meta['keep'])}")
    lines.append(f"Delta = {grid}")
    if meta.get("elapsed_seconds") is not None:
        lines.append(f"Elapsed time : {meta['elapsed_seconds']:.2f} secs")
    return "\n".join(lines)


def cmd_fit(args) -> int:
    design = _design_from_args(args)
    config = _config_from_args(args, design.names)
    T, n = design.F.shape
    if not 0 <= args.burn < T:
        raise ConfigError(f"--burn must lie in [0, {T}), got {args.burn}")
    out_dir = Path(args.out)
    source = {
        "data": str(Path(args.data).resolve()),
        "time_column": args.time_column,
        "response": args.response,
        "terms": [list(t) for t in dio.parse_terms(args.term)],
        "intercept": args.intercept,
        "offset": design.offset,
        "burn": args.burn,
    }
    if args.dry_run:
        space = enumerate_models(n, config.keep, design.names, config.max_predictors, config.d)
        meta = {
            "T": T, "n": n, "d": config.d, "k": space.k,
            "combinations_with_delta": space.k * config.d,
            "alpha": config.alpha, "delta_grid": list(config.delta_grid),
            "prior": config.prior.describe(n),
            "keep": [design.names[j] for j in sorted(space.keep)],
            "predictors": design.names, "elapsed_seconds": None, **source,
        }
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
        print(format_show(meta))
        return 0

    out = run_dma(design.y, design.F, config, design.names)
    meta = {**out.meta(), **source}
    write_outputs(out_dir, out, design.time, args.burn)
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    if not args.quiet:
        print(format_show(meta))
        print()
        print(format_summary(out, design.y, args.burn))
    return 0


def cmd_simulate(args) -> int:
    state_var = None if args.state_var is None else tuple(float(v) for v in args.state_var.split(","))
    spec = SimSpec(t_len=args.t, n=args.n, obs_var=args.obs_var, state_var=state_var, seed=args.seed)
    y, F, theta = simulate_dlm(spec)
    time = list(range(1, spec.t_len + 1))
    cols = {"y": y, **{f"x{j}": F[:, j] for j in range(1, spec.n)}}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dio.write_csv(out, dio.Dataset(time=time, columns=cols))
    theta_out = Path(args.theta_out) if args.theta_out else out.with_name(out.stem + "_theta.csv")
    names = [dio.INTERCEPT] + [f"x{j}" for j in range(1, spec.n)]
    dio.write_csv(theta_out, dio.Dataset(time=time, columns={nm: theta[:, j] for j, nm in enumerate(names)}))
    return 0


def _read_series(path: Path):
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return [r[0] for r in rows[1:]], np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def cmd_backtest(args) -> int:
    if args.run is not None:
        run = Path(args.run)
        try:
            meta = json.loads((run / "meta.json").read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read fit output in {run}: {exc}") from None
        ds = dio.load_csv(meta["data"], meta["time_column"])
        spec = dio.DesignSpec(meta["response"], tuple(map(tuple, meta["terms"])), meta["intercept"])
        design = dio.build_design(ds, spec)
        fit_burn = meta["burn"]
        burn = fit_burn if args.burn == 0 else args.burn
        if burn < fit_burn:
            raise ConfigError(f"--burn {burn} is shorter than the fit's emitted burn-in {fit_burn}")
        time_y, yhat = _read_series(run / "yhat.csv")
        _, lpdf = _read_series(run / "lpdf.csv")
        y = design.y[fit_burn:]
        if time_y != [dio.format_time(t) for t in design.time[fit_burn:]]:
            raise ConfigError("fit output does not line up with its data file")

        class _Out:
            T = y.size
            yhat_dma, yhat_dms = yhat[:, 0], yhat[:, 1]
            lpdf_dma, lpdf_dms = lpdf[:, 0], lpdf[:, 1]

        scores = backtest(_Out, y, burn - fit_burn)
        out_dir = Path(args.out) if args.out else run
    else:
        if args.data is None or args.response is None:
            raise ConfigError("backtest needs --run DIR or the fit flags --data/--response")
        design = _design_from_args(args)
        config = _config_from_args(args, design.names)
        out = run_dma(design.y, design.F, config, design.names)
        scores = backtest(out, design.y, args.burn)
        if args.out is None:
            raise ConfigError("backtest without --run needs --out")
        out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_scores(out_dir / "scores.csv", scores)
    print(f"{'':<8}{'DMA':>12}{'DMS':>12}")
    for metric in ("MSE", "MAD", "logPL"):
        print(f"{metric:<8}{scores['DMA'][metric]:12.3f}{scores['DMS'][metric]:12.3f}")
    return 0


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "backtest": cmd_backtest}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DmaError as exc:
        print(f"tvpdma {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
