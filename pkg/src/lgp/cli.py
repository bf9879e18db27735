"""Command-line interface: ``lgp {fit,relevance,select,simulate,prior-predict,report}``.

Exit status is 0 on success, 1 on user errors (bad flags, unreadable or
invalid inputs) and 2 when a fit is written but failed the convergence
checks.  Every command records a run manifest (config, seed, version,
duration and content hashes); commands writing a file put it next to the
output as ``<out>.manifest.json``.  Logging verbosity comes from the
``LGP_LOG`` environment variable (``error``, ``info`` or ``debug``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import DataError, load_csv, schema_of, write_csv
from .formula import LIKELIHOODS, FormulaError, parse_formula
from .inference import PosteriorFit, SamplerConfig, SamplerError, sample_model
from .inference.sampling import ConvergenceWarning
from .model import FactorizationError, bind
from .priors import PriorSpec, sample_prior_predictive
from .relevance import RelevanceReport, component_relevances, covariate_report, select
from .simulate import SimConfig, generate

log = logging.getLogger("lgp")

EXIT_OK, EXIT_USER, EXIT_NONCONVERGED = 0, 1, 2
USER_ERRORS = (DataError, FormulaError, ValueError, FileNotFoundError, KeyError, json.JSONDecodeError,
               SamplerError, FactorizationError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _sha256(path) -> str | None:
    p = Path(path)
    if not p.is_file():
        return None
    return hashlib.sha256(p.read_bytes()).hexdigest()


def _manifest(command, args, inputs, outputs, seed, started) -> dict:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    return {
        "command": command,
        "argv": list(sys.argv[1:]),
        "config": config,
        "seed": seed,
        "version": __version__,
        "duration_seconds": round(time.time() - started, 3),
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in inputs if p],
        "outputs": [{"path": str(p), "sha256": _sha256(p)} for p in outputs if p],
    }


def _emit_manifest(manifest, out):
    text = json.dumps(manifest, sort_keys=True, indent=1)
    if out:
        Path(f"{out}.manifest.json").write_text(text, encoding="utf-8")
    else:
        log.info("manifest %s", json.dumps(manifest, sort_keys=True))


def _load_priors(arg) -> PriorSpec:
    return PriorSpec.load(arg) if arg else PriorSpec()


def _bind_from_args(args):
    ds = load_csv(args.data, args.schema, args.likelihood)
    spec = parse_formula(args.formula, args.likelihood)
    opts = {}
    if getattr(args, "time_column", None):
        opts["time_column"] = args.time_column
    if getattr(args, "no_standardize", False):
        opts["standardize_response"] = False
    if getattr(args, "latent", False):
        opts["latent"] = True
    return bind(spec, ds, _load_priors(args.priors), **opts), opts


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    started = time.time()
    model, opts = _bind_from_args(args)
    config = SamplerConfig(chains=args.chains, warmup=args.warmup, iters=args.iters, seed=args.seed,
                           threads=args.threads, prior_only=args.prior_only)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        fit = sample_model(model, config, opts)
    fit.save(args.out)
    _emit_manifest(_manifest("fit", args, [args.data, args.schema, args.priors], [args.out], args.seed, started),
                   args.out)
    d = fit.diagnostics
    print(f"wrote {args.out}: {fit.num_draws} draws, status {fit.status}, "
          f"worst R-hat {d.worst_rhat if d.worst_rhat is None else round(d.worst_rhat, 3)}, "
          f"divergences {d.divergences}")
    if not fit.converged:
        print("warning: fit did not pass the convergence checks", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _relevance_dict(fit: PosteriorFit, threshold: float) -> dict:
    report = component_relevances(fit, threshold=threshold)
    d = report.to_dict()
    d["covariates"] = covariate_report(report, fit.model().spec)
    d["fit_status"] = fit.status
    return d


def cmd_relevance(args) -> int:
    started = time.time()
    fit = PosteriorFit.load(args.fit)
    d = _relevance_dict(fit, args.threshold)
    text = json.dumps(d, sort_keys=True, indent=1)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text)
    _emit_manifest(_manifest("relevance", args, [args.fit], [args.out], None, started), args.out)
    return EXIT_OK


def cmd_select(args) -> int:
    started = time.time()
    if bool(args.fit) == bool(args.report):
        raise UsageError("select: give exactly one of --fit or --report")
    if args.fit:
        report = RelevanceReport.from_dict(_relevance_dict(PosteriorFit.load(args.fit), args.threshold))
    else:
        report = RelevanceReport.from_dict(json.loads(Path(args.report).read_text(encoding="utf-8")))
    chosen = select(report, args.threshold)
    out = {
        "threshold": args.threshold,
        "p_noise": report.p_noise,
        "selected": chosen,
        "terms": [report.terms[j - 1] for j in chosen] if report.terms else [],
        "explained": report.p_noise + report.subset_relevance(chosen),
    }
    text = json.dumps(out, sort_keys=True, indent=1)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text)
    _emit_manifest(_manifest("select", args, [args.fit or args.report], [args.out], None, started), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.time()
    cfg = SimConfig.load(args.config) if args.config else SimConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    res = generate(cfg)
    write_csv(res.dataset, args.out)
    schema_path = args.schema_out or str(Path(args.out).with_suffix(".schema.json"))
    Path(schema_path).write_text(json.dumps(schema_of(res.dataset), indent=1), encoding="utf-8")
    if args.truth:
        res.save_truth(args.truth)
    _emit_manifest(_manifest("simulate", args, [args.config], [args.out, schema_path, args.truth], cfg.seed,
                             started), args.out)
    print(f"wrote {args.out} ({res.dataset.num_rows} rows), schema {schema_path}")
    return EXIT_OK


def cmd_prior_predict(args) -> int:
    started = time.time()
    model, _ = _bind_from_args(args)
    y = sample_prior_predictive(model, args.draws, args.seed)
    ids = model.dataset.column(model.dataset.id_column)
    with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["draw", "row", "id", model.dataset.response_name])
        for s in range(y.shape[0]):
            for i in range(y.shape[1]):
                w.writerow([s + 1, i + 1, ids.levels[ids.values[i] - 1], repr(float(y[s, i]))])
    _emit_manifest(_manifest("prior-predict", args, [args.data, args.schema, args.priors], [args.out], args.seed,
                             started), args.out)
    print(f"wrote {args.out}: {args.draws} prior predictive draws")
    return EXIT_OK


def cmd_report(args) -> int:
    """Tidy CSV of per-draw component curves on the raw response scale."""
    started = time.time()
    fit = PosteriorFit.load(args.fit)
    model = fit.model()
    ds = model.dataset
    at = None
    if args.at:
        at = load_csv(args.at, args.schema or schema_of(ds))
        if fit.latent is not None:
            raise UsageError("report --at needs a Gaussian fit (analytic component posteriors)")
    S = fit.num_draws
    picks = np.unique(np.linspace(0, S - 1, min(args.draws, S)).round().astype(int))
    rows_ds = ds if at is None else at
    scale = model.response_transform[1]
    terms = [c.term() for c in model.spec.components]
    flat = fit.flat()
    covs = rows_ds.names
    with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["draw", "component", "term", "row"] + covs + ["mean", "sd"])
        for s in picks:
            if fit.latent is not None:
                mean = fit.latent_draws()[s]
                sd = np.zeros_like(mean)
            else:
                cp = model.component_posterior(model.param_vector(flat[s]), at=at)
                mean, sd = cp.mean, np.sqrt(cp.cov_diag)
            for j, term in enumerate(terms):
                for i in range(rows_ds.num_rows):
                    vals = []
                    for name in covs:
                        c = rows_ds.column(name)
                        if c.is_continuous:
                            vals.append("" if c.missing_mask[i] else repr(float(c.inverse(c.values[i]))))
                        else:
                            vals.append(c.levels[c.values[i] - 1])
                    w.writerow([s + 1, j + 1, term, i + 1] + vals +
                               [repr(float(mean[j, i] * scale)), repr(float(sd[j, i] * scale))])
    _emit_manifest(_manifest("report", args, [args.fit, args.at], [args.out], None, started), args.out)
    print(f"wrote {args.out}: {len(picks)} draws x {len(terms)} components")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _model_flags(p, need_out=True):
    p.add_argument("--data", required=True, help="CSV data file")
    p.add_argument("--schema", required=True, help="JSON schema (file or inline)")
    p.add_argument("--formula", required=True, help='model formula, e.g. "y ~ gp(age) + zs(id)*gp(age)"')
    p.add_argument("--likelihood", default="gaussian", choices=LIKELIHOODS)
    p.add_argument("--priors", help="prior overrides as JSON (file or inline)")
    p.add_argument("--time-column", dest="time_column", help="time covariate for uncertain effect times")
    p.add_argument("--no-standardize", dest="no_standardize", action="store_true",
                   help="keep a Gaussian response on its raw scale")
    p.add_argument("--seed", type=int, default=1)
    if need_out:
        p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lgp", description="Additive Gaussian process models for longitudinal data.")
    parser.add_argument("--version", action="version", version=f"lgp {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("fit", help="sample the posterior of a model")
    _model_flags(p)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--threads", type=int, default=1, help="worker processes for chains")
    p.add_argument("--latent", action="store_true", help="sample components explicitly (any likelihood)")
    p.add_argument("--prior-only", dest="prior_only", action="store_true", help="ignore the likelihood")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("relevance", help="component and covariate relevances of a fit")
    p.add_argument("--fit", required=True)
    p.add_argument("--threshold", type=float, default=95.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_relevance)

    p = sub.add_parser("select", help="minimal component set reaching a threshold")
    p.add_argument("--fit")
    p.add_argument("--report", help="relevance JSON written by 'lgp relevance'")
    p.add_argument("--threshold", type=float, default=95.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--config", help="SimConfig JSON (defaults used when absent)")
    p.add_argument("--out", required=True)
    p.add_argument("--truth")
    p.add_argument("--schema-out", dest="schema_out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("prior-predict", help="draw responses from the prior predictive")
    _model_flags(p)
    p.add_argument("--draws", type=int, default=100)
    p.set_defaults(func=cmd_prior_predict)

    p = sub.add_parser("report", help="per-draw component curves as tidy CSV")
    p.add_argument("--fit", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--draws", type=int, default=100, help="number of draws (evenly spaced)")
    p.add_argument("--at", help="CSV of new rows to evaluate components at")
    p.add_argument("--schema", help="schema of --at (defaults to the fit's)")
    p.set_defaults(func=cmd_report)
    return parser


def _configure_logging():
    level = os.environ.get("LGP_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise UsageError(f"LGP_LOG must be one of {sorted(levels)}, got '{level}'")
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    try:
        _configure_logging()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USER
    except USER_ERRORS as e:
        print(f"lgp: error: {e}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
