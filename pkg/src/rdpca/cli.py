"""Command-line interface: ``rdpca simulate | fit | metrics``.

Option values are resolved as command-line flag, then the JSON file given by
``--config``, then the built-in default. Failures print a one-line JSON error
document to stderr and exit with 1 (usage), 2 (input data) or 3 (numerics).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .bayes import ClrCurve, Grid, inv_clr
from .errors import ArgumentError, RdpcaError, ShapeError
from .fit import DEFAULT_ALPHA_GRID, alpha_path, fit, sfpca_report
from .mahalanobis import RegParams
from .metrics import explained_variance, ise, mean_cosine, tpr_tnr
from .simgen import generate, normalize_model_id
from .spectral import ClrSample, CovarianceEstimate, SpectralModel, eig_sym

log = logging.getLogger("rdpca")

DEFAULTS = {
    "model": "m1.1",
    "n": 200,
    "p": None,
    "c": 0.0,
    "N": 250,
    "scores": "normal",
    "support": "quantile",
    "seed": 0,
    "alpha": "auto",
    "alpha_criterion": "contrast",
    "hfrac": 0.75,
    "k": 1,
    "quantile": 0.95,
    "mc_draws": 50_000,
    "starts": 10,
    "method": "rdpca",
    "replications": 1,
    "count": 5,
    "true_cov_reps": 2000,
    "charts": False,
    "curves": None,
    "fit_dir": None,
    "reference": None,
    "labels": None,
    "out_dir": ".",
}

FIT_FILES = ("fit.json", "eigenfunctions_clr.csv", "eigenfunctions_density.csv", "distances.csv")
SIM_FILES = ("curves.csv", "labels.csv", "true_cov.csv", "manifest.json")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ArgumentError(message)


def _alpha_value(text):
    if str(text).lower() == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'auto', got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("alpha must be positive")
    return value


def _add(parser, *names, **kw):
    # every default is None so that "not given" is distinguishable from a value
    parser.add_argument(*names, default=None, **kw)


def _sim_flags(p):
    _add(p, "--model", help="simulation model: m1.1, m1.2, m1.3, m2.1, m2.2")
    _add(p, "--n", type=int, help="number of curves (default 200)")
    _add(p, "--p", type=int, help="grid size (default 50 for model 1, 100 for model 2)")
    _add(p, "--c", type=float, help="contamination fraction (default 0)")
    _add(p, "--N", type=int, help="observations per KDE curve (default 250)")
    _add(p, "--scores", choices=["normal", "t5"], help="score distribution of model 2")
    _add(p, "--support", choices=["quantile", "range"], help="KDE grid rule of model 1")
    _add(p, "--true-cov-reps", dest="true_cov_reps", type=int, help="Monte Carlo curves for the model 1 reference")


def _fit_flags(p):
    _add(p, "--method", choices=["rdpca", "sfpca"])
    _add(p, "--alpha", type=_alpha_value, help="Tikhonov parameter or 'auto' (default)")
    _add(p, "--alpha-criterion", dest="alpha_criterion", choices=["contrast", "snr"])
    _add(p, "--hfrac", type=float, help="trimming fraction h/n (default 0.75)")
    _add(p, "--k", type=int, help="number of exactly whitened components (default 1)")
    _add(p, "--quantile", type=float, help="cutoff quantile of the limiting law (default 0.95)")
    _add(p, "--mc-draws", dest="mc_draws", type=int, help="Monte Carlo draws of the limiting law")
    _add(p, "--starts", type=int, help="random initial subsets (default 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rdpca", description="Robust PCA for density-valued data.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    _add(common, "--config", help="JSON file with option values")
    _add(common, "--seed", type=int, help="master seed (default 0)")
    _add(common, "--out-dir", dest="out_dir", help="output directory (default .)")

    sim = sub.add_parser("simulate", parents=[common], help="generate a labeled simulation sample")
    _sim_flags(sim)

    fp = sub.add_parser("fit", parents=[common], help="fit RDPCA or SFPCA to a curves CSV")
    _add(fp, "--curves", help="curves CSV (density or clr rows)")
    _fit_flags(fp)

    mp = sub.add_parser("metrics", parents=[common], help="score fits against references")
    _add(mp, "--fit-dir", dest="fit_dir", help="directory written by 'fit'")
    _add(mp, "--reference", help="reference covariance CSV (true_cov.csv)")
    _add(mp, "--labels", help="labels CSV; TPR/TNR rows are omitted without it")
    _add(mp, "--count", type=int, help="eigenfunctions compared / ratios reported (default 5)")
    _add(mp, "--replications", type=int, help="run simulate + fit + metrics for this many seeds")
    mp.add_argument("--charts", action="store_const", const=True, default=None, help="write SVG charts")
    _sim_flags(mp)
    _fit_flags(mp)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over :data:`DEFAULTS`."""
    config = {}
    if getattr(args, "config", None):
        try:
            config = io.read_json(args.config)
        except FileNotFoundError:
            raise ShapeError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ShapeError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(config, dict):
            raise ShapeError("config file must hold a JSON object")
        config = {k.replace("-", "_"): v for k, v in config.items()}
        unknown = sorted(set(config) - set(DEFAULTS))
        if unknown:
            raise ArgumentError(f"unknown config keys: {', '.join(unknown)}")
    opts = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        opts[key] = flag if flag is not None else config.get(key, default)
    try:
        opts["alpha"] = _alpha_value(opts["alpha"])
    except argparse.ArgumentTypeError as exc:
        raise ArgumentError(f"alpha: {exc}") from None
    return opts


def _params(opts) -> RegParams:
    alpha = 1.0 if opts["alpha"] == "auto" else float(opts["alpha"])
    return RegParams(
        alpha=alpha,
        k=int(opts["k"]),
        h_frac=float(opts["hfrac"]),
        mc_draws=int(opts["mc_draws"]),
        quantile=float(opts["quantile"]),
        seed=int(opts["seed"]),
    )


# -- simulate -------------------------------------------------------------------


def run_simulate(opts, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sample = generate(
        opts["model"],
        n=int(opts["n"]),
        p=opts["p"],
        c=float(opts["c"]),
        N=int(opts["N"]),
        scores=opts["scores"],
        seed=int(opts["seed"]),
        true_cov_reps=int(opts["true_cov_reps"]),
        support=opts["support"],
    )
    io.write_curves(out / "curves.csv", sample.curves)
    io.write_labels(out / "labels.csv", sample.labels)
    io.write_matrix(out / "true_cov.csv", sample.grid, sample.true_cov)
    manifest = {
        "command": "simulate",
        "options": {k: opts[k] for k in ("model", "n", "p", "c", "N", "scores", "support", "seed", "true_cov_reps")},
        "outliers": int(np.sum(sample.labels)),
        "files": list(SIM_FILES),
        **{k: v for k, v in sample.meta.items() if k not in ("n", "p", "c", "N", "seed")},
    }
    io.write_json(out / "manifest.json", manifest)
    return manifest


# -- fit --------------------------------------------------------------------------


def _bayes_rows(model: SpectralModel) -> np.ndarray:
    return np.stack([inv_clr(ClrCurve.centered(model.grid, xi)).values for xi in model.eigenfunctions[: model.rank]])


def run_fit(opts, sample: ClrSample, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = _params(opts)
    doc = {
        "method": opts["method"],
        "n": sample.n,
        "grid": {"a": sample.grid.a, "b": sample.grid.b, "p": sample.grid.p},
    }
    if opts["alpha"] == "auto":
        path = alpha_path(sample, params, DEFAULT_ALPHA_GRID, opts["alpha_criterion"])
        params = RegParams(**{**asdict(params), "alpha": path.selected})
        doc["alpha_selection"] = {
            "criterion": opts["alpha_criterion"],
            "grid": path.alphas,
            "contrast": path.contrast,
            "snr": path.snr,
            "selected": path.selected,
            "ceiling": path.ceiling,
        }
    doc["params"] = asdict(params)
    if opts["method"] == "sfpca":
        model, report = sfpca_report(sample, params)
    else:
        res = fit(sample, params, n_starts=int(opts["starts"]))
        model, report = res.model, res.distances
        doc["params"]["n_starts"] = int(opts["starts"])
        doc.update(
            h=len(res.h_opt),
            h_opt=list(res.h_opt),
            c=res.c,
            iterations=res.iterations,
            objective_trace=res.objective_trace,
        )
    doc.update(
        alpha_used=params.alpha,
        eigenvalues=model.eigenvalues,
        cutoff=report.cutoff,
        n_flagged=int(report.flags.sum()),
        mean=model.mean,
        files=list(FIT_FILES),
    )
    io.write_json(out / "fit.json", doc)
    io.write_text(out / "eigenfunctions_clr.csv", io.format_matrix(model.grid, model.eigenfunctions[: model.rank], "clr"))
    io.write_text(out / "eigenfunctions_density.csv", io.format_matrix(model.grid, _bayes_rows(model), "density"))
    io.write_distances(out / "distances.csv", report)
    return doc


def load_fit(fit_dir) -> tuple[dict, SpectralModel]:
    fit_dir = Path(fit_dir)
    try:
        doc = io.read_json(fit_dir / "fit.json")
        _, grid, xi = io.parse_matrix((fit_dir / "eigenfunctions_clr.csv").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ShapeError(f"incomplete fit directory: {exc.filename}") from None
    lam = np.asarray(doc["eigenvalues"], dtype=float)
    full = np.zeros((lam.size, grid.p))
    full[: xi.shape[0]] = xi
    return doc, SpectralModel(grid, np.asarray(doc["mean"], dtype=float), lam, full)


# -- metrics ----------------------------------------------------------------------

METRIC_HEADER = "replication,method,c,metric,value"
SUMMARY_HEADER = "method,c,metric,count,mean,se"


def reference_model(grid: Grid, reference) -> SpectralModel:
    return eig_sym(CovarianceEstimate(grid, np.zeros(grid.p), np.asarray(reference, dtype=float)))


def metric_rows(model: SpectralModel, reference, count: int, report=None, labels=None) -> list:
    """``(metric, value)`` pairs for one fitted model; TPR/TNR need ``labels``."""
    reference = np.asarray(reference, dtype=float)
    rows = [("ise", ise(model.covariance_matrix(), reference))]
    ref = reference_model(model.grid, reference)
    rows.append(("mean_cosine", mean_cosine(model, ref, min(count, model.rank, ref.rank))))
    ratios = explained_variance(model, min(count, model.eigenvalues.size))
    rows += [(f"explained_variance_{j}", float(r)) for j, r in enumerate(ratios, start=1)]
    if labels is not None and report is not None:
        tpr, tnr = tpr_tnr(report, labels)
        rows += [("tpr", tpr), ("tnr", tnr)]
    return rows


def _cell(x: float) -> str:
    # undefined rates (no outliers or no regular curves) stay empty
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def format_metrics(records) -> str:
    lines = [METRIC_HEADER]
    for rep, method, c, metric, value in records:
        lines.append(f"{rep},{method},{_cell(c)},{metric},{_cell(value)}")
    return "\n".join(lines) + "\n"


def summarize(records) -> list:
    """Mean and standard error per (method, c, metric), missing values dropped."""
    groups = {}
    for _, method, c, metric, value in records:
        groups.setdefault((method, c, metric), []).append(value)
    out = []
    for (method, c, metric), values in groups.items():
        v = np.array([x for x in values if x is not None and not math.isnan(x)], dtype=float)
        mean = float(v.mean()) if v.size else float("nan")
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
        out.append((method, c, metric, int(v.size), mean, se))
    return out


def format_summary(summary) -> str:
    lines = [SUMMARY_HEADER]
    for method, c, metric, count, mean, se in summary:
        lines.append(f"{method},{_cell(c)},{metric},{count},{_cell(mean)},{_cell(se)}")
    return "\n".join(lines) + "\n"


def svg_chart(title: str, series: dict, width: int = 480, height: int = 300) -> str:
    """Line chart of ``{name: values}`` against replication index."""
    pad = 40
    values = [v for vs in series.values() for v in vs if v is not None and not math.isnan(v)]
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    n = max((len(vs) for vs in series.values()), default=1)
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")

    def xy(i, v):
        x = pad + (width - 2 * pad) * (i / (n - 1) if n > 1 else 0.5)
        y = height - pad - (height - 2 * pad) * (v - lo) / (hi - lo)
        return f"{x:.2f},{y:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad - 4}" y="{pad + 4}" text-anchor="end" font-family="sans-serif" font-size="10">{hi:.3g}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" text-anchor="end" font-family="sans-serif" font-size="10">{lo:.3g}</text>',
        f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" font-family="sans-serif" font-size="11">replication</text>',
    ]
    for j, (name, vs) in enumerate(series.items()):
        color = colors[j % len(colors)]
        pts = " ".join(xy(i, v) for i, v in enumerate(vs) if v is not None and not math.isnan(v))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(
            f'<text x="{width - pad}" y="{pad + 14 * j}" text-anchor="end" font-family="sans-serif" '
            f'font-size="11" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_charts(out: Path, records) -> list:
    metrics = sorted({r[3] for r in records})
    written = []
    for metric in metrics:
        series = {}
        for rep, method, _, m, value in sorted(records, key=lambda r: (r[1], r[0])):
            if m == metric:
                series.setdefault(method, []).append(value)
        name = f"chart_{metric}.svg"
        io.write_text(out / name, svg_chart(metric, series))
        written.append(name)
    return written


def run_replication(opts: dict, rep: int, out_dir) -> list:
    """simulate + fit (both methods) + metrics for one seed; returns long records."""
    out = Path(out_dir) / f"rep_{rep:03d}"
    o = {**opts, "seed": int(opts["seed"]) + rep}
    run_simulate(o, out / "data")
    grid, clr = io.read_clr(out / "data" / "curves.csv")
    sample = ClrSample(grid, clr)
    labels = io.read_labels(out / "data" / "labels.csv")
    _, reference = io.read_matrix(out / "data" / "true_cov.csv")
    records = []
    alpha = o["alpha"]
    for method in ("rdpca", "sfpca"):
        doc = run_fit({**o, "method": method, "alpha": alpha}, sample, out / method)
        # the baseline is scored with the regularizer chosen for the robust fit
        alpha = doc["alpha_used"]
        _, model = load_fit(out / method)
        report = io.read_distances(out / method / "distances.csv")
        rows = metric_rows(model, reference, int(o["count"]), report, labels)
        records += [(rep, method, float(o["c"]), m, v) for m, v in rows]
    io.write_text(out / "metrics.csv", format_metrics(records))
    return records


def worker_count(jobs: int) -> int:
    env = os.environ.get("RDPCA_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ArgumentError(f"RDPCA_THREADS must be an integer, got {env!r}") from None
        if cap < 1:
            raise ArgumentError("RDPCA_THREADS must be at least 1")
    return max(1, min(cap, jobs))


def run_metrics_replications(opts: dict, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reps = int(opts["replications"])
    if reps < 1:
        raise ArgumentError("--replications must be at least 1")
    workers = worker_count(reps)
    if workers == 1:
        per_rep = [run_replication(opts, r, out) for r in range(reps)]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_replication, opts, r, out) for r in range(reps)]
            per_rep = [f.result() for f in futures]
    records = [rec for recs in per_rep for rec in recs]
    io.write_text(out / "metrics.csv", format_metrics(records))
    summary = summarize(records)
    io.write_text(out / "summary.csv", format_summary(summary))
    files = ["metrics.csv", "summary.csv"]
    if opts["charts"]:
        files += write_charts(out, records)
    manifest = {
        "command": "metrics",
        "options": {k: v for k, v in opts.items() if k not in ("curves", "fit_dir", "reference", "labels", "out_dir")},
        "replications": reps,
        "files": files,
    }
    io.write_json(out / "manifest.json", manifest)
    return manifest


def run_metrics_single(opts: dict, out_dir) -> dict:
    if not opts["fit_dir"]:
        raise ArgumentError("metrics needs --fit-dir (or --replications)")
    if not opts["reference"]:
        raise ShapeError("metrics needs a reference covariance (--reference)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc, model = load_fit(opts["fit_dir"])
    try:
        ref_grid, reference = io.read_matrix(opts["reference"])
    except FileNotFoundError:
        raise ShapeError(f"reference file not found: {opts['reference']}") from None
    if not ref_grid.same_as(model.grid) or reference.shape != (model.grid.p, model.grid.p):
        raise ShapeError("reference covariance does not match the fitted grid")
    labels = report = None
    if opts["labels"]:
        try:
            labels = io.read_labels(opts["labels"])
        except FileNotFoundError:
            raise ShapeError(f"labels file not found: {opts['labels']}") from None
        report = io.read_distances(Path(opts["fit_dir"]) / "distances.csv")
    rows = metric_rows(model, reference, int(opts["count"]), report, labels)
    records = [(0, doc["method"], float(opts["c"]), m, v) for m, v in rows]
    io.write_text(out / "metrics.csv", format_metrics(records))
    files = ["metrics.csv"]
    if opts["charts"]:
        files += write_charts(out, records)
    return {"command": "metrics", "files": files}


# -- entry point --------------------------------------------------------------------


def _fail(exc: RdpcaError) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
    index = getattr(exc, "index", None)
    if index is not None:
        payload["index"] = index
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return exc.exit_code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        opts = resolve(args)
        opts["model"] = normalize_model_id(opts["model"])
        out_dir = opts["out_dir"]
        if args.command == "simulate":
            result = run_simulate(opts, out_dir)
        elif args.command == "fit":
            if not opts["curves"]:
                raise ArgumentError("fit needs --curves")
            try:
                grid, clr = io.read_clr(opts["curves"])
            except FileNotFoundError:
                raise ShapeError(f"curves file not found: {opts['curves']}") from None
            result = run_fit(opts, ClrSample(grid, clr), out_dir)
        elif int(opts["replications"]) > 1 or not opts["fit_dir"]:
            result = run_metrics_replications(opts, out_dir)
        else:
            result = run_metrics_single(opts, out_dir)
        log.info("wrote %s to %s", ", ".join(result.get("files", [])), out_dir)
        return 0
    except RdpcaError as exc:
        return _fail(exc)
    except OSError as exc:
        return _fail(ShapeError(f"I/O error: {exc}"))
    except Exception as exc:  # keep the JSON error contract for unexpected failures
        log.debug("unexpected failure", exc_info=True)
        return _fail(RdpcaError(f"{type(exc).__name__}: {exc}"))


if __name__ == "__main__":
    sys.exit(main())
