"""Command-line entry point: ``dualcv {fit,welfare,diagnose,simulate,report}``.

Payloads go to ``--out`` (or stdout); diagnostics go to stderr.  Exit codes:
0 success, 1 input error (one ``error: ...`` line on stderr), 2 an
estimator did not converge (the result is still written, flagged
``converged: false``).  All randomness comes from ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from pathlib import Path

from . import __version__
from .biprobit import BiprobitFit, BiprobitSpec, exogeneity_diagnostic, fit_biprobit, lr_test_rho, render_table3
from .data import canonical_schema, consistency_filter, load_csv, render_summary, summarize, write_csv, write_exclusions
from .diagnostics import PATTERNS, diagnostic_report, group_means_csv
from .effects import AmeRow, ame, ame_report
from .errors import ConvergenceError, DualCVError
from .probit import FitResult, ModelSpec, fit_probit, render_probit
from .simulate import DgpConfig, generate, monte_carlo, survey_profile
from .welfare import DEFAULT_SHADOW_RATIO, render_table5, welfare_report

DEFAULT_SEED = 12345
EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2

logger = logging.getLogger("dualcv")


class InputError(Exception):
    """Bad command-line input; reported as a one-line error, exit 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise InputError(f"{name}: required")


def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"{what}: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: invalid JSON in {path}: {exc}") from None


def _load_data(args):
    _require(args, "data", "schema")
    for name in ("data", "schema"):
        if not Path(getattr(args, name)).is_file():
            raise InputError(f"{name}: file not found: {getattr(args, name)}")
    schema = _read_json(args.schema, "schema")
    ds = load_csv(args.data, schema)
    exclusions = []
    if getattr(args, "filter", False):
        ds, exclusions = consistency_filter(ds)
        logger.info("consistency filter excluded %d record(s)", len(exclusions))
    return ds, exclusions


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# --------------------------------------------------------------------------
# fit


def _fit_one(spec: ModelSpec, ds):
    try:
        return fit_probit(spec, ds), True
    except ConvergenceError as exc:
        if exc.result is None:
            raise
        logger.warning("%s", exc)
        return exc.result, False


def _ame_rows(fit, ds, equation):
    try:
        return [r.to_dict() for r in ame(fit, ds, equation)]
    except DualCVError:
        return None


def cmd_fit(args) -> int:
    _require(args, "data", "schema", "spec")
    if not Path(args.spec).is_file():
        raise InputError(f"spec: file not found: {args.spec}")
    raw = _read_json(args.spec, "spec")
    ds, _ = _load_data(args)
    converged = True

    if args.model == "probit":
        specs = [ModelSpec.from_dict(raw[k]) for k in ("eq1", "eq2")] if "eq1" in raw else [ModelSpec.from_dict(raw)]
        fits = []
        for s in specs:
            f, ok = _fit_one(s, ds)
            converged &= ok
            fits.append(f)
        ames = {f.spec.outcome: _ame_rows(f, ds, 1 if f.spec.outcome == "y1" else 2) for f in fits if f.spec.outcome in ("y1", "y2")}
        payload = {
            "model": "probit",
            "converged": converged,
            "fits": {f.spec.outcome: f.to_dict() for f in fits},
            "ame": ames,
        }
        if args.format == "text":
            parts = [render_probit(f) for f in fits]
            parts += [ame_report([_row(r) for r in rows]) for rows in ames.values() if rows]
            text = "\n\n".join(parts) + "\n"
        elif args.format == "csv":
            text = _csv(
                ["equation", "parameter", "estimate", "se", "t"],
                [(f.spec.outcome, p, f.coefficients[p], f.se[p], f.tvalues[p]) for f in fits for p in f.spec.param_names],
            )
        else:
            text = _json(payload)
        _emit(args, text)
        return EXIT_OK if converged else EXIT_NONCONVERGED

    if "eq1" not in raw:
        raise InputError("spec: biprobit needs 'eq1' and 'eq2'")
    spec = BiprobitSpec.from_dict(raw)
    u1, ok1 = _fit_one(spec.eq1, ds)
    u2, ok2 = _fit_one(spec.eq2, ds)
    try:
        joint = fit_biprobit(spec, ds)
        ok = True
    except ConvergenceError as exc:
        if exc.result is None:
            raise
        logger.warning("%s", exc)
        joint, ok = exc.result, False
    converged = ok1 and ok2 and ok
    lr = lr_test_rho(joint, u1, u2)
    exo = exogeneity_diagnostic(u2, joint)
    payload = {
        "model": "biprobit",
        "converged": converged,
        "fit": joint.to_dict(),
        "univariate": {"eq1": u1.to_dict(), "eq2": u2.to_dict()},
        "lr_test_rho": lr.to_dict(),
        "exogeneity": exo.to_dict(),
        "ame": {"eq1": _ame_rows(joint, ds, 1), "eq2": _ame_rows(joint, ds, 2)},
    }
    if args.format == "text":
        text = render_table3(u2, joint, lr) + "\n"
        rows = payload["ame"]["eq2"]
        if rows:
            text += "\nAverage marginal effects, " + spec.eq2.outcome + "\n" + ame_report([_row(r) for r in rows]) + "\n"
    elif args.format == "csv":
        se = joint.se
        text = _csv(
            ["parameter", "estimate", "se", "t", "univariate", "univariate_se"],
            [
                (
                    name,
                    float(val),
                    se[name],
                    float(val) / se[name] if se[name] > 0 else math.nan,
                    *_univ_cell(name, u1, u2),
                )
                for name, val in zip(joint.param_names, joint.params)
            ],
        )
    else:
        text = _json(payload)
    _emit(args, text)
    return EXIT_OK if converged else EXIT_NONCONVERGED


def _row(d):
    return AmeRow(**d)


def _univ_cell(name, u1, u2):
    if name.startswith("eq1:"):
        f, p = u1, name[4:]
    elif name.startswith("eq2:"):
        f, p = u2, name[4:]
    else:
        return "", ""
    return f.coefficients[p], f.se[p]


# --------------------------------------------------------------------------
# welfare


def _load_fit(path):
    d = _read_json(path, "fit")
    model = d.get("model")
    if model == "biprobit":
        return BiprobitFit.from_dict(d["fit"])
    if model == "probit":
        fits = d.get("fits", {})
        if "y1" not in fits or "y2" not in fits:
            raise InputError("fit: a probit fit file needs both y1 and y2 equations for welfare")
        return (FitResult.from_dict(fits["y1"]), FitResult.from_dict(fits["y2"]))
    raise InputError(f"fit: unknown model {model!r} in {path}")


def cmd_welfare(args) -> int:
    _require(args, "fit", "data", "schema")
    if not Path(args.fit).is_file():
        raise InputError(f"fit: file not found: {args.fit}")
    fit = _load_fit(args.fit)
    ds, _ = _load_data(args)
    rep = welfare_report(
        fit,
        ds,
        shadow_ratio=args.shadow_ratio,
        wage_mode=args.wage_mode,
        truncate_negative=args.truncate_negative,
        sim_draws=args.sim_draws,
        seed=args.seed,
    )
    if args.format == "text":
        text = render_table5(rep) + "\n"
    elif args.format == "csv":
        keys = list(rep.per_respondent[0])
        text = _csv(keys, [[r[k] for k in keys] for r in rep.per_respondent])
    else:
        text = _json(rep.to_dict())
    _emit(args, text)
    return EXIT_OK


# --------------------------------------------------------------------------
# diagnose


def _render_diagnostics(rep: dict) -> str:
    lines = [f"N = {rep['n']}", "", "Response patterns (cash-labor)"]
    for p in PATTERNS:
        lines.append(f"  {p:<8} {100 * rep['response_pattern_shares'][p]:6.2f}%")
    for a in rep["anchoring"]:
        lines += ["", f"{a['response']} by {a['grouped_by']}"]
        lines.append(f"  {'level':>8}  {'n':>4}  {'mean':>8}  {'95% C.I.':>20}")
        for g in a["groups"]:
            ci = f"[{g['ci_low']:.2f}, {g['ci_high']:.2f}]"
            lines.append(f"  {g['level']:>8g}  {g['n']:>4d}  {g['mean']:>8.2f}  {ci:>20}")
        o = a["omnibus"]
        if o["statistic"] is None:
            lines.append("  ANOVA: not computed")
        else:
            lines.append(f"  ANOVA: F({o['df'][0]:g}, {o['df'][1]:g}) = {o['statistic']:.3f}  p = {o['p_value']:.4f}")
    for var, comps in rep["endowments"].items():
        lines += ["", f"{var} by response pattern (Welch t)"]
        for c in comps:
            p = "" if c["p"] is None or math.isnan(c["p"]) else f"{c['p']:.4f}"
            lines.append(f"  {c['group_a']:<8} vs {c['group_b']:<8} {c['mean_a']:>8.2f} {c['mean_b']:>8.2f}  p = {p}")
    if rep["metadata"]:
        lines += [""] + [f"{k}: {v}" for k, v in rep["metadata"].items()]
    return "\n".join(lines) + "\n"


def cmd_diagnose(args) -> int:
    ds, _ = _load_data(args)
    rep = diagnostic_report(ds, variables=args.variables, bonferroni=args.bonferroni)
    if args.format == "text":
        text = _render_diagnostics(rep)
    elif args.format == "csv":
        text = group_means_csv(rep)
    else:
        text = _json(rep)
    _emit(args, text)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    if args.config:
        if not Path(args.config).is_file():
            raise InputError(f"config: file not found: {args.config}")
        cfg = DgpConfig.from_dict(_read_json(args.config, "config"))
    else:
        cfg = survey_profile()
    changes = {"seed": args.seed}
    if args.n is not None:
        changes["n"] = args.n
    if args.rho is not None:
        changes["rho"] = args.rho
    cfg = cfg.replace(**changes)
    if args.reps < 1:
        raise InputError("reps: must be >= 1")
    if args.write_data:
        out = Path(args.write_data)
        out.mkdir(parents=True, exist_ok=True)
        for r in range(args.reps):
            ds = generate(cfg, r)
            write_csv(ds, out / f"rep_{r:04d}.csv")
        (out / "schema.json").write_text(_json(canonical_schema(ds)), encoding="utf-8")
    res = monte_carlo(cfg, args.reps, fit_both=not args.joint_only, threads=args.threads)
    if args.format == "text":
        text = _render_mc(res)
    elif args.format == "csv":
        text = _csv(
            ["parameter", "truth", "mean", "bias", "rmse", "ci_coverage"],
            [(k, v["truth"], v["mean"], v["bias"], v["rmse"], v["ci_coverage"]) for k, v in res.parameters.items()],
        )
    else:
        text = _json(res.to_dict())
    _emit(args, text)
    return EXIT_OK


def _render_mc(res) -> str:
    lines = [f"replications {res.replications}, failures {res.failures}"]
    lines.append(f"{'parameter':<28} {'truth':>8} {'mean':>8} {'bias':>8} {'rmse':>8} {'cover':>6}")
    for k, v in res.parameters.items():
        cov = "" if v["ci_coverage"] is None else f"{v['ci_coverage']:.2f}"
        lines.append(f"{k:<28} {v['truth']:>8.2f} {v['mean']:>8.2f} {v['bias']:>8.3f} {v['rmse']:>8.3f} {cov:>6}")
    if res.lr_rejection_rate is not None:
        lines.append(f"LR test of rho=0 rejection rate at 5%: {res.lr_rejection_rate:.3f}")
    if res.eta_univariate is not None:
        e = res.eta_univariate
        lines.append(
            f"univariate y1 effect: mean {e['mean']:.3f}, bias {e['bias']:.3f}, "
            f"sign flip {e['sign_flip_rate']:.2f}, flip or insignificant {e['flip_or_insignificant_rate']:.2f}"
        )
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    ds, excl = _load_data(args)
    if args.exclusions:
        if not args.filter:
            raise InputError("exclusions: requires --filter")
        write_exclusions(excl, args.exclusions)
    rows = summarize(ds)
    if args.format == "text":
        text = render_summary(rows) + "\n"
        if args.filter:
            text += f"excluded {len(excl)} inconsistent record(s)\n"
    elif args.format == "csv":
        text = _csv(["variable", "kind", "n", "mean", "sd", "share"], [(r.variable, r.kind, r.n, r.mean, r.sd, r.share) for r in rows])
    else:
        text = _json(
            {
                "n": ds.n,
                "excluded": len(excl) if args.filter else None,
                "exclusion_rules": sorted({e.rule for e in excl}),
                "summary": [r.to_dict() for r in rows],
                "missing": ds.missing_counts(),
            }
        )
    _emit(args, text)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    shared = _Parser(add_help=False)
    shared.add_argument("--data", help="survey CSV")
    shared.add_argument("--schema", help="schema JSON mapping CSV columns to roles")
    shared.add_argument("--spec", help="model specification JSON")
    shared.add_argument("--out", help="output file (default: stdout)")
    shared.add_argument("--format", choices=("json", "text", "csv"), default="json")
    shared.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"random seed (default {DEFAULT_SEED})")
    shared.add_argument("--threads", type=int, default=1, help="worker processes for Monte Carlo runs")
    shared.add_argument("--filter", action="store_true", help="drop records failing the consistency rules first")
    shared.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = _Parser(prog="dualcv", description="Dual payment-vehicle contingent valuation with a recursive bivariate probit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    f = sub.add_parser("fit", parents=[shared], help="estimate probit or recursive bivariate probit")
    f.add_argument("--model", choices=("probit", "biprobit"), default="biprobit")
    f.set_defaults(func=cmd_fit)

    w = sub.add_parser("welfare", parents=[shared], help="compensating surplus from a saved fit")
    w.add_argument("--fit", help="JSON written by 'dualcv fit'")
    w.add_argument("--shadow-ratio", type=float, default=DEFAULT_SHADOW_RATIO)
    w.add_argument("--wage-mode", choices=("respondent", "global"), default="respondent")
    w.add_argument("--truncate-negative", action="store_true")
    w.add_argument("--sim-draws", type=int, default=0, help="parameter draws for simulation intervals (0: off)")
    w.set_defaults(func=cmd_welfare)

    d = sub.add_parser("diagnose", parents=[shared], help="anchoring and endowment checks")
    d.add_argument("--variables", nargs="+", help="variables to compare across response patterns")
    d.add_argument("--bonferroni", action="store_true")
    d.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("simulate", parents=[shared], help="Monte Carlo from a data-generating config")
    s.add_argument("--config", help="DGP config JSON (default: built-in survey-like profile)")
    s.add_argument("--reps", type=int, default=200)
    s.add_argument("--n", type=int)
    s.add_argument("--rho", type=float)
    s.add_argument("--joint-only", action="store_true", help="skip the univariate fits")
    s.add_argument("--write-data", metavar="DIR", help="also write each replication's CSV and a schema")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", parents=[shared], help="descriptive statistics")
    r.add_argument("--exclusions", help="write excluded records as JSON lines (needs --filter)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise InputError("command: required (fit, welfare, diagnose, simulate, report)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
        if args.threads < 1:
            raise InputError("threads: must be >= 1")
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DualCVError, ValueError, KeyError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
