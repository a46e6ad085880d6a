"""Command-line entry point: ``censored-nbe <subcommand> [flags]``.

Failures print one JSON object on stderr, e.g.
``{"error": "usage", "message": "...", "exit_code": 2}``. Usage problems
(unknown flags or fields, missing config file) exit with 2, runtime
failures with 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import config_from_dict, load_config
from .exceptions import CensoredNBEError, InvalidArgument
from .harness import (
    bootstrap_estimates, cpl_handle, evaluate_risk, make_test_set, nbe_handle, run_experiment,
    scatter_csv, template_spec,
)
from .io import export_replicates_csv, load_replicates, load_weights, save_replicates, save_weights
from .likelihood import MODELS, CplConfig, cpl_fit
from .processes import simulate
from .spatial import grid_preset, make_rng
from .training import PriorSpec, estimate, train

__all__ = ["main", "build_parser"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p):
    g = p.add_argument_group("common options")
    g.add_argument("--config", help="JSON experiment config file")
    g.add_argument("--seed", type=int, help="random seed (overrides config)")
    g.add_argument("--out", help="output file or directory")
    g.add_argument("--tau", type=float, help="censoring level in [0, 1)")
    g.add_argument("--grid", help="grid preset: g16, g8, g6 or g4")
    g.add_argument("--family", help="gp, msp, imsp, rpareto or hw")
    g.add_argument("--m", type=int, help="replicates per set")
    g.add_argument("--k", type=int, dest="K", help="training parameter sets K")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="censored-nbe",
                     description="Censored neural Bayes estimators for spatial extremes.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate one replicate set to a binary file")
    _common(p)
    p.add_argument("--theta", type=float, nargs="+",
                   help="parameter vector (default: prior centre)")
    p.add_argument("--csv", help="also export the replicates as CSV")

    p = sub.add_parser("train", help="train an estimator; writes checkpoint and log")
    _common(p)
    p.add_argument("--max-epochs", type=int, help="epoch budget per ladder stage")

    p = sub.add_parser("estimate", help="estimate parameters from a replicate file")
    _common(p)
    p.add_argument("--data", required=True, help="replicate set written by simulate")
    p.add_argument("--checkpoint", help="trained estimator (default: pairwise likelihood)")
    p.add_argument("--h-max", type=float, default=3.0, help="likelihood distance cutoff")

    p = sub.add_parser("evaluate", help="marginal test risk of a trained estimator")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n-test", type=int, help="number of test parameter vectors")

    p = sub.add_parser("bootstrap", help="bootstrap estimates and 95%% bands")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--B", type=int, default=1000, help="bootstrap resamples")

    p = sub.add_parser("compare", help="estimator versus pairwise likelihood risk report")
    _common(p)
    p.add_argument("--checkpoint", help="trained estimator (default: train one first)")
    p.add_argument("--n-test", type=int, help="number of test parameter vectors")
    p.add_argument("--max-epochs", type=int, help="epoch budget per ladder stage when training")
    p.add_argument("--deterministic", action="store_true",
                   help="write nan timings so reruns are byte-identical")
    return parser


def _config(args):
    overrides = {k: getattr(args, k, None) for k in ("seed", "tau", "grid", "family", "m", "K")}
    if getattr(args, "n_test", None) is not None:
        overrides["n_test"] = args.n_test
    if args.config:
        if not Path(args.config).is_file():
            raise UsageError(f"config file not found: {args.config}")
        try:
            return load_config(args.config, **overrides)
        except InvalidArgument as exc:
            raise UsageError(str(exc)) from None
    try:
        return config_from_dict({}, **overrides)
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from None


def _emit(obj, out=None):
    text = json.dumps(obj, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def cmd_simulate(args):
    cfg = _config(args)
    prior = cfg.prior_spec()
    template = template_spec(cfg.family, grid_preset(cfg.grid), prior)
    theta = prior.center if args.theta is None else np.array(args.theta)
    spec = template.with_theta(theta)
    rset = simulate(spec, cfg.m, make_rng(cfg.seed))
    out = args.out or "replicates.bin"
    save_replicates(rset, out)
    if args.csv:
        export_replicates_csv(rset, args.csv)
    _emit({"file": out, "family": spec.family, "m": rset.m, "d": rset.d,
           "theta": spec.theta.tolist()})


def cmd_train(args):
    cfg = _config(args)
    if args.max_epochs is not None:
        cfg.train["max_epochs"] = args.max_epochs
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    prior = cfg.prior_spec()
    template = template_spec(cfg.family, grid_preset(cfg.grid), prior)
    result = train(cfg.train_config(), template, cfg.scheme())
    save_weights(result.weights, out / "estimator.ckpt")
    (out / "training_log.csv").write_text(result.log_csv())
    _emit({"checkpoint": str(out / "estimator.ckpt"), "epochs": len(result.log),
           "best_val_risk": min(r["val_risk"] for r in result.log)})


def cmd_estimate(args):
    rset = load_replicates(args.data)
    family = rset.spec.family
    cfg = _config(args) if args.config else None
    tau = args.tau if args.tau is not None else (cfg.tau if cfg else 0.9)
    if args.checkpoint:
        w = load_weights(args.checkpoint)
        prior = PriorSpec.from_dict(w.metadata["prior"])
        scheme = config_from_dict({"family": family, "tau": tau}).scheme()
        if "scheme" in w.metadata:
            s = w.metadata["scheme"]
            scheme = replace(scheme, margin=s["margin"], c_policy=s["c_policy"]).with_tau(tau)
        theta, secs = estimate(w, rset, scheme, prior)
        method = "nbe"
    else:
        if family not in MODELS:
            raise InvalidArgument(f"no pairwise likelihood for {family}; pass --checkpoint")
        prior = cfg.prior_spec() if cfg else PriorSpec.simulation_study(family)
        fit = cpl_fit(rset, CplConfig(family, tau, prior, h_max=args.h_max,
                                      seed=args.seed or 0))
        theta, secs, method = fit.theta, fit.seconds, f"cpl_h{args.h_max:g}"
    _emit({"method": method, "family": family, "names": list(rset.spec.param_names),
           "theta": [float(v) for v in theta], "seconds": secs}, args.out)


def _weights_and_scheme(args, cfg):
    w = load_weights(args.checkpoint)
    scheme = cfg.scheme()
    if "scheme" in w.metadata:
        s = w.metadata["scheme"]
        scheme = replace(scheme, margin=s["margin"], c_policy=s["c_policy"])
    prior = PriorSpec.from_dict(w.metadata["prior"]) if "prior" in w.metadata else cfg.prior_spec()
    return w, scheme.with_tau(cfg.tau), prior


def _test_set(cfg, prior):
    template = template_spec(cfg.family, grid_preset(cfg.grid), prior)
    tcfg = cfg.train_config()
    tau = cfg.tau if tcfg.tau_mode == "fixed" else tuple(tcfg.tau_range)
    return template, make_test_set(template, prior, cfg.n_test, cfg.m, tau,
                                   make_rng([cfg.seed, 1]))


def cmd_evaluate(args):
    cfg = _config(args)
    w, scheme, prior = _weights_and_scheme(args, cfg)
    template, test = _test_set(cfg, prior)
    report = evaluate_risk(nbe_handle(w, scheme, prior), test, "nbe", cfg.family,
                           list(template.param_names))
    out = args.out or "risk.csv"
    Path(out).write_text(report.to_csv())
    _emit({"risk_csv": out, "n_test": len(test)})


def cmd_bootstrap(args):
    cfg = _config(args)
    w, scheme, prior = _weights_and_scheme(args, cfg)
    rset = load_replicates(args.data)
    res = bootstrap_estimates(w, rset, scheme, args.B, make_rng(cfg.seed), prior)
    names = list(rset.spec.param_names)
    if args.out:
        lines = [",".join(names)]
        lines += [",".join(f"{v:.9g}" for v in row) for row in res.estimates]
        Path(args.out).write_text("\n".join(lines) + "\n")
    _emit({"names": names, "point": res.point.tolist(), "lower": res.lower.tolist(),
           "upper": res.upper.tolist(), "B": args.B})


def cmd_compare(args):
    cfg = _config(args)
    if args.deterministic:
        cfg.deterministic = True
    if args.max_epochs is not None:
        cfg.train["max_epochs"] = args.max_epochs
    if args.out:
        cfg.output_dir = args.out
    if not args.checkpoint:
        out = run_experiment(cfg)
        _emit({"output_dir": str(out)})
        return
    w, scheme, prior = _weights_and_scheme(args, cfg)
    template, test = _test_set(cfg, prior)
    names = list(template.param_names)
    timing = not cfg.deterministic
    report = evaluate_risk(nbe_handle(w, scheme, prior), test, "nbe", cfg.family, names, timing)
    if cfg.family in MODELS:
        for h in cfg.cpl_h_max:
            c = CplConfig(cfg.family, cfg.tau, prior, h_max=h, seed=cfg.seed)
            report = report.merge(evaluate_risk(cpl_handle(c), test, f"cpl_h{h:g}", cfg.family,
                                                names, timing))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "risk.csv").write_text(report.to_csv())
    (out / "scatter.csv").write_text(scatter_csv(report, names))
    _emit({"output_dir": str(out), "methods": report.methods})


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
    "bootstrap": cmd_bootstrap,
    "compare": cmd_compare,
}


def _fail(kind, message, code):
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    except FileNotFoundError as exc:
        return _fail("file_not_found", str(exc), 2)
    except (CensoredNBEError, ValueError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
