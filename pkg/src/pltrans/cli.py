"""Command line interface.

Subcommands ``fit``, ``evaluate``, ``jackknife``, ``simulate``, ``info``
and ``check-family``.  Every run writes its outputs and a ``manifest.json`` to
the output directory (``--out``, default from ``$PLTRANS_OUT`` or
``./pltrans_out``).

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError, read_csv
from .families import FamilyError, LinkFamily, check_b5d
from .fit import FitConfig, ModelParams, NumericalError, fit, penalized_objective
from .inference import JackknifeError, block_jackknife, confidence_region, marginal_intervals
from .information import InformationError, efficient_information, hstar_series, sec9_spec
from .isotonic import ConvexityError, ProvisionError, StepTransform
from .splines import KnotError, SmoothEffect, SplineBasis

__all__ = ["main", "build_parser", "load_fit", "UsageError"]

OUT_ENV = "PLTRANS_OUT"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _g(x) -> str:
    return f"{float(x):.17g}"


def _write_table(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for row in rows:
            out.writerow([_g(x) if isinstance(x, (float, np.floating)) else x for x in row])


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV, "pltrans_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _discard_if_empty(out: Path | None, existed: bool) -> None:
    # a failed run should not leave behind a directory it created
    if out is not None and not existed and out.is_dir() and not any(out.iterdir()):
        out.rmdir()


def _config(args) -> FitConfig:
    lam = "n_power" if args.lam == "auto" else float(args.lam)
    return FitConfig(lambda_rule=lam, n_knots=args.knots, max_outer=args.max_outer)


def _family(name) -> LinkFamily:
    try:
        return LinkFamily.from_string(name)
    except FamilyError as err:
        raise UsageError(str(err)) from None


def _cmd_fit(args, out: Path) -> dict:
    data = read_csv(args.data)
    family = _family(args.link)
    res = fit(data, family, _config(args), seed=args.seed)
    p = res.params
    _write_table(out / "beta.csv", ["name", "value"], [(f"beta{i + 1}", b) for i, b in enumerate(p.beta)])
    grid = np.linspace(*p.h.basis.boundary, 201)
    _write_table(out / "h_curve.csv", ["w", "h"], zip(grid, p.h(grid)))
    _write_table(out / "H_step.csv", ["v", "H"], zip(p.H.jump_sites, p.H.values))
    spline = {
        "interior_knots": [_g(x) for x in p.h.basis.interior_knots],
        "boundary": [_g(x) for x in p.h.basis.boundary],
        "coeffs": [_g(x) for x in p.h.coeffs],
        "center_offset": _g(p.h.center_offset),
    }
    (out / "h_spline.json").write_text(json.dumps(spline, indent=1))
    diag = {
        "link": str(family),
        "n": data.n,
        "n_informative": res.n_informative,
        "lambda": _g(res.lam),
        "loglik": _g(res.loglik),
        "penalty": _g(res.penalty),
        "objective": _g(res.objective),
        "outer_iters": res.outer_iters,
        "fenchel_max_ineq": _g(res.fenchel.max_ineq),
        "fenchel_eq_resid": _g(res.fenchel.eq_resid),
        "fenchel_total": _g(res.fenchel.total),
        "grad_norm": _g(res.grad_norm),
        "converged": res.converged,
    }
    (out / "diagnostics.json").write_text(json.dumps(diag, indent=1))
    print(f"beta = {np.array2string(p.beta, precision=6)}  objective = {res.objective:.10g}  "
          f"converged = {res.converged}")
    return {"inputs": {"data": _file_digest(args.data)}}


def load_fit(fit_dir) -> tuple[ModelParams, dict]:
    """Rebuild the fitted model and its diagnostics from ``fit`` outputs."""
    fit_dir = Path(fit_dir)
    with (fit_dir / "beta.csv").open(newline="") as fh:
        beta = np.array([float(r[1]) for r in list(csv.reader(fh))[1:]])
    spline = json.loads((fit_dir / "h_spline.json").read_text())
    basis = SplineBasis(np.array([float(x) for x in spline["interior_knots"]]),
                        tuple(float(x) for x in spline["boundary"]))
    h = SmoothEffect(basis, np.array([float(x) for x in spline["coeffs"]]), float(spline["center_offset"]))
    with (fit_dir / "H_step.csv").open(newline="") as fh:
        step = np.array([[float(x) for x in r] for r in list(csv.reader(fh))[1:]])
    H = StepTransform(step[:, 0], step[:, 1])
    diag = json.loads((fit_dir / "diagnostics.json").read_text())
    return ModelParams(beta, h, H), diag


def _cmd_evaluate(args, out: Path) -> dict:
    data = read_csv(args.data)
    params, diag = load_fit(args.fit_dir)
    family = _family(diag["link"])
    value = penalized_objective(data, params, family, float(diag["lambda"]), informative_only=True)
    reported = float(diag["objective"])
    report = {"objective": _g(value), "reported_objective": _g(reported), "abs_difference": _g(abs(value - reported))}
    (out / "evaluate.json").write_text(json.dumps(report, indent=1))
    print(f"objective = {value:.17g}  (reported {reported:.17g})")
    return {"inputs": {"data": _file_digest(args.data)}}


def _cmd_jackknife(args, out: Path) -> dict:
    data = read_csv(args.data)
    family = _family(args.link)
    beta0 = None
    if args.beta0:
        beta0 = np.array([float(x) for x in args.beta0.split(",")])
        if beta0.size != data.d:
            raise UsageError(f"--beta0 needs {data.d} values")
    jk = block_jackknife(
        data, family, _config(args), args.m, args.seed,
        beta0=beta0, level=args.level, variant=args.variant, knot_seed=args.knot_seed,
    )
    d = data.d
    _write_table(
        out / "block_betas.csv",
        ["block"] + [f"beta{i + 1}" for i in range(d)] + ["converged"],
        [[j + 1, *jk.betas[j], int(jk.converged[j])] for j in range(jk.m)],
    )
    _write_table(out / "S_star.csv", [f"c{i + 1}" for i in range(d)], jk.S_star)
    region = confidence_region(jk)
    ci = marginal_intervals(jk)
    report = {
        "m": jk.m,
        "k": jk.k,
        "variant": jk.variant,
        "level": jk.level,
        "center": [_g(x) for x in region.center],
        "shape_over_n": [[_g(x) for x in row] for row in region.shape / region.n],
        "radius2": _g(region.radius2),
        "marginal_intervals": [[_g(a), _g(b)] for a, b in ci],
        "reliable": jk.reliable,
    }
    if beta0 is not None:
        report["statistic"] = _g(jk.statistic)
        report["covered"] = bool(jk.covered_truth)
    (out / "region.json").write_text(json.dumps(report, indent=1))
    if not jk.reliable:
        print("warning: some block refits did not converge", file=sys.stderr)
    print(f"region: n (beta_hat - b)' inv(S) (beta_hat - b) <= {region.radius2:.6g}")
    for i, (a, b) in enumerate(ci):
        print(f"beta{i + 1}: [{a:.6g}, {b:.6g}]")
    return {"inputs": {"data": _file_digest(args.data)}}


def _cmd_simulate(args, out: Path) -> dict:
    from .simulate import (
        Sec9Config,
        bias_experiment,
        emit_figures,
        run_manifest,
        run_table1,
        write_summary,
    )

    if args.experiment == "bias":
        rep = bias_experiment(args.n, args.reps, args.seed)
        rows = [
            ("G0_lower", rep.G0_lower),
            ("G0_upper", rep.G0_upper),
            ("mean_G_hat_lower", rep.mean_lower),
            ("mean_G_hat_upper", rep.mean_upper),
        ] + [(f"freq_lower_le_G0_minus_{e:g}", f) for e, f in rep.freq.items()]
        _write_table(out / "bias.csv", ["quantity", "value"], rows)
        _write_table(out / "bias_replicates.csv", ["G_hat_lower", "G_hat_upper"], zip(rep.lower, rep.upper))
        for k, v in rows:
            print(f"{k}: {v:.6g}")
        return {}
    m_list = tuple(int(x) for x in args.m.split(","))
    cfg = Sec9Config(n=args.n, reps=args.reps, seed=args.seed, m_list=m_list)
    summary = run_table1(cfg, workers=args.workers, cache_dir=args.cache)
    write_summary(summary, out)
    emit_figures(summary, out)
    (out / "run.json").write_text(json.dumps(run_manifest(summary), indent=1, default=str))
    print(f"n={cfg.n} reps={summary.n_ok} (failed {summary.n_failed})")
    print(f"mean = {np.array2string(summary.mean, precision=4)}")
    if summary.sd is not None:
        print(f"sd   = {np.array2string(summary.sd, precision=4)}")
    for (variant, m), cov in sorted(summary.coverage.items()):
        print(f"coverage {variant} m={m}: beta1 {cov['beta1']:.3f}  beta2 {cov['beta2']:.3f}  joint {cov['joint']:.3f}")
    return {}


def _cmd_info(args, out: Path) -> dict:
    if args.preset != "sec9":
        raise UsageError(f"unknown preset {args.preset!r}")
    spec = sec9_spec(n_grid=args.grid)
    hs = hstar_series(spec, tol=args.tol, max_terms=args.max_terms)
    pieces = efficient_information(spec, hs)
    d = spec.d
    cols = [f"c{i + 1}" for i in range(d)]
    _write_table(out / "I0.csv", cols, pieces.I0)
    _write_table(out / "I0_inv.csv", cols, pieces.I0_inv)
    _write_table(out / "h_tilde.csv", ["w"] + [f"h{i + 1}" for i in range(d)],
                 [[w, *row] for w, row in zip(spec.w, pieces.h_tilde)])
    _write_table(out / "q_tilde.csv", ["v"] + [f"q{i + 1}" for i in range(d)],
                 [[v, *row] for v, row in zip(spec.v, pieces.q_tilde)])
    print(f"series terms {hs.terms}, last increment {hs.last_increment:.3g}")
    print("I0 =\n" + np.array2string(pieces.I0, precision=6))
    print("I0^-1 =\n" + np.array2string(pieces.I0_inv, precision=6))
    return {}


def _cmd_check_family(args, out: Path) -> dict:
    family = _family(args.link)
    rep = check_b5d(family, args.lo, args.hi, args.step)
    status = "satisfied" if rep.satisfied else "violated"
    lines = [
        f"family: {family}",
        f"grid: [{args.lo:g}, {args.hi:g}] step {args.step:g}",
        f"min event margin: {rep.min1:.6g} at t={rep.argmin1:.4g}",
        f"min non-event margin: {rep.min2:.6g} at t={rep.argmin2:.4g}",
        f"B5(d): {status}",
    ]
    (out / "check_family.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return {}


def _add_fit_flags(p):
    p.add_argument("--data", required=True, help="CSV with header v,delta,z1..zd,w")
    p.add_argument("--link", default="cloglog", help="cloglog, logit, probit, cauchy, pareto:G or gnorm:G")
    p.add_argument("--lambda", dest="lam", default="auto", help="'auto' for n^(-1/3) or a number")
    p.add_argument("--knots", type=int, default=None, help="number of interior knots")
    p.add_argument("--max-outer", type=int, default=200)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pltrans", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", help="penalized maximum likelihood fit")
    _add_fit_flags(p)
    p.add_argument("--seed", type=int, default=0, help="knot placement seed")
    p.add_argument("--out")

    p = sub.add_parser("evaluate", help="re-evaluate the objective of saved fit outputs")
    p.add_argument("--data", required=True)
    p.add_argument("--fit-dir", required=True, help="output directory of a fit run")
    p.add_argument("--out")

    p = sub.add_parser("jackknife", help="block-jackknife confidence region")
    _add_fit_flags(p)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--variant", choices=("S*", "S**"), default="S*")
    p.add_argument("--beta0", help="comma separated hypothesized value")
    p.add_argument("--seed", type=int, default=0, help="subsampling seed")
    p.add_argument("--knot-seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="simulation study")
    p.add_argument("--experiment", choices=("table1", "bias"), default="table1")
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=20050101)
    p.add_argument("--m", default="10,40", help="comma separated block counts")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--cache", help="directory for per-replicate results")
    p.add_argument("--out")

    p = sub.add_parser("info", help="efficient information for a preset design")
    p.add_argument("--preset", default="sec9")
    p.add_argument("--grid", type=int, default=201)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-terms", type=int, default=200)
    p.add_argument("--out")

    p = sub.add_parser("check-family", help="strict concavity diagnostic for a link")
    p.add_argument("--link", required=True)
    p.add_argument("--lo", type=float, default=-10.0)
    p.add_argument("--hi", type=float, default=10.0)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--out")
    return parser


COMMANDS = {
    "fit": _cmd_fit,
    "evaluate": _cmd_evaluate,
    "jackknife": _cmd_jackknife,
    "simulate": _cmd_simulate,
    "info": _cmd_info,
    "check-family": _cmd_check_family,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    t0 = time.perf_counter()
    out, existed = None, True
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("pltrans: a subcommand is required (fit, evaluate, jackknife, simulate, info, check-family)")
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be at least 1")
        existed = Path(args.out or os.environ.get(OUT_ENV, "pltrans_out")).exists()
        out = _out_dir(args)
        extra = COMMANDS[args.command](args, out)
    except UsageError as err:
        _discard_if_empty(out, existed)
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ProvisionError, KnotError, FileNotFoundError) as err:
        _discard_if_empty(out, existed)
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ConvexityError, InformationError, JackknifeError, FloatingPointError) as err:
        _discard_if_empty(out, existed)
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    manifest = {
        "subcommand": args.command,
        "argv": argv,
        "flags": {k: v for k, v in vars(args).items() if k != "command"},
        "seed": getattr(args, "seed", None),
        "inputs": extra.get("inputs", {}),
        "version": __version__,
        "duration_seconds": time.perf_counter() - t0,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
