"""Risk evaluation, bootstrap uncertainty and end-to-end experiment runs."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .censoring import CensoringScheme
from .config import ExperimentConfig
from .exceptions import InvalidArgument
from .io import save_weights
from .likelihood import MODELS, CplConfig, cpl_fit
from .network import EstimatorWeights
from .processes import ProcessSpec, ReplicateSet, simulate_batch
from .spatial import grid_preset, make_rng
from .training import PriorSpec, estimate, train

__all__ = [
    "TestCase",
    "RiskReport",
    "BootstrapResult",
    "make_test_set",
    "nbe_handle",
    "cpl_handle",
    "evaluate_risk",
    "bootstrap_estimates",
    "run_experiment",
    "template_spec",
]

RISK_COLUMNS = ("method", "family", "parameter", "loss", "risk", "sd", "mean_fit_seconds",
                "n_test")


def _fmt(x) -> str:
    return f"{x:.9g}" if isinstance(x, float) else str(x)


@dataclass
class TestCase:
    rset: ReplicateSet
    theta: np.ndarray
    tau: float

    __test__ = False  # not a pytest class


def template_spec(family: str, grid, prior: PriorSpec) -> ProcessSpec:
    """A valid spec at the prior centre, used as a template for batch simulation."""
    c = prior.center
    delta = float(c[2]) if family == "hw_mixture" else None
    return ProcessSpec(family, grid, float(c[0]), float(c[1]), delta)


def make_test_set(template: ProcessSpec, prior: PriorSpec, n: int, m: int, tau, rng):
    """``n`` parameter vectors from the prior, each with ``m`` replicates.

    ``tau`` is a scalar, a length-``n`` array, or a ``(low, high)`` tuple to
    draw levels uniformly.
    """
    thetas = prior.sample(n, rng)
    if isinstance(tau, tuple):
        taus = rng.uniform(tau[0], tau[1], size=n)
    else:
        taus = np.broadcast_to(np.asarray(tau, dtype=float), (n,))
    raw = simulate_batch(template, thetas, m, rng)
    return [TestCase(ReplicateSet(template.with_theta(th), raw[k]), th, float(taus[k]))
            for k, th in enumerate(thetas)]


def nbe_handle(weights: EstimatorWeights, scheme: CensoringScheme, prior=None):
    """Callable ``(rset, tau) -> (theta_hat, seconds)`` for a trained estimator."""
    def run(rset, tau):
        return estimate(weights, rset, scheme.with_tau(tau), prior)
    return run


def cpl_handle(config: CplConfig):
    """Callable ``(rset, tau) -> (theta_hat, seconds)`` for the pairwise likelihood."""
    def run(rset, tau):
        fit = cpl_fit(rset, replace(config, tau=float(tau)))
        return fit.theta, fit.seconds
    return run


@dataclass
class RiskReport:
    """Marginal risks; ``sd`` is the standard deviation of the per-point losses
    divided by ``sqrt(n_test)`` (the standard error of the reported mean)."""

    rows: list = field(default_factory=list)
    estimates: dict = field(default_factory=dict)

    @property
    def methods(self) -> list:
        return list(dict.fromkeys(r["method"] for r in self.rows))

    def risk(self, method, parameter, loss="absolute") -> float:
        return self._row(method, parameter, loss)["risk"]

    def sd(self, method, parameter, loss="absolute") -> float:
        return self._row(method, parameter, loss)["sd"]

    def _row(self, method, parameter, loss):
        for r in self.rows:
            if (r["method"], r["parameter"], r["loss"]) == (method, parameter, loss):
                return r
        raise KeyError((method, parameter, loss))

    def merge(self, other: "RiskReport") -> "RiskReport":
        return RiskReport(self.rows + other.rows, {**self.estimates, **other.estimates})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RISK_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in RISK_COLUMNS])
        return buf.getvalue()


def evaluate_risk(estimator, test_set, method="nbe", family="", names=None,
                  record_timing=True) -> RiskReport:
    """Marginal absolute and squared risks of ``estimator`` over ``test_set``.

    ``estimator`` maps ``(rset, tau)`` to ``(theta_hat, seconds)``.
    """
    test_set = list(test_set)
    if not test_set:
        raise InvalidArgument("test set is empty")
    p = len(test_set[0].theta)
    names = names or [f"theta{i}" for i in range(p)]
    hats, secs = [], []
    for case in test_set:
        th, s = estimator(case.rset, case.tau)
        th = np.asarray(th, dtype=float)
        if th.shape != (p,):
            raise InvalidArgument(f"estimator returned shape {th.shape}, expected ({p},)")
        hats.append(th)
        secs.append(s)
    hats = np.array(hats)
    truth = np.array([c.theta for c in test_set], dtype=float)
    n = len(test_set)
    mean_secs = math.fsum(secs) / n if record_timing else float("nan")
    rows = []
    for i, name in enumerate(names):
        err = hats[:, i] - truth[:, i]
        for loss, vals in (("absolute", np.abs(err)), ("squared", err * err)):
            # exact summation keeps the report invariant to test-set order
            mean = math.fsum(vals) / n
            var = math.fsum((vals - mean) ** 2) / (n - 1) if n > 1 else 0.0
            rows.append({
                "method": method, "family": family, "parameter": name, "loss": loss,
                "risk": mean, "sd": math.sqrt(var / n), "mean_fit_seconds": mean_secs,
                "n_test": n,
            })
    return RiskReport(rows, {method: hats})


@dataclass
class BootstrapResult:
    point: np.ndarray
    estimates: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    indices: np.ndarray


def bootstrap_estimates(weights: EstimatorWeights, rset: ReplicateSet, scheme: CensoringScheme,
                        B: int, rng=None, prior=None, indices=None,
                        level=(0.025, 0.975)) -> BootstrapResult:
    """Nonparametric bootstrap over replicates.

    Each of ``B`` resamples draws ``m`` replicates with replacement and is
    re-estimated; ``indices`` (shape ``(B, m)``) overrides the resampling.
    """
    if B < 1:
        raise InvalidArgument("B must be at least 1")
    m = rset.m
    if indices is None:
        if m < 2:
            raise InvalidArgument("bootstrap needs at least two replicates")
        indices = make_rng(rng).integers(0, m, size=(B, m))
    indices = np.asarray(indices)
    if indices.shape != (B, m):
        raise InvalidArgument(f"indices must have shape ({B}, {m})")
    point, _ = estimate(weights, rset, scheme, prior)
    est = np.array([estimate(weights, rset.subset(ix), scheme, prior)[0] for ix in indices])
    lower, upper = np.quantile(est, level, axis=0)
    return BootstrapResult(point, est, lower, upper, indices)


def scatter_csv(report: RiskReport, names) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "set_id", *names])
    for method, hats in report.estimates.items():
        for k, row in enumerate(hats):
            w.writerow([method, k, *(_fmt(float(v)) for v in row)])
    return buf.getvalue()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(config: ExperimentConfig, verbose=False) -> Path:
    """Train, test and compare; writes artifacts plus ``manifest.json`` to
    ``config.output_dir`` and returns that directory.

    In deterministic mode wall-clock columns are written as ``nan`` so that
    the same seed reproduces every file byte for byte.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stages: dict[str, str] = {}
    files: list[str] = []
    timing = not config.deterministic

    def write(name, text):
        (out / name).write_text(text)
        files.append(name)

    def finish(complete):
        manifest = {
            "seed": config.seed,
            "config": config.to_dict(),
            "stages": stages,
            "complete": complete,
            "files": {f: _sha256(out / f) for f in files},
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    prior = config.prior_spec()
    scheme = config.scheme()
    tcfg = config.train_config()
    template = template_spec(config.family, grid_preset(config.grid), prior)
    names = list(template.param_names)
    stage = "train"
    try:
        result = train(tcfg, template, scheme, verbose=verbose)
        save_weights(result.weights, out / "estimator.ckpt")
        files.append("estimator.ckpt")
        write("training_log.csv", result.log_csv(timing=timing))
        stages[stage] = "complete"

        stage = "test_set"
        rng = make_rng([config.seed, 1])
        tau = config.tau if tcfg.tau_mode == "fixed" else tuple(tcfg.tau_range)
        test = make_test_set(template, prior, config.n_test, config.m, tau, rng)
        stages[stage] = "complete"

        stage = "evaluate_nbe"
        report = evaluate_risk(nbe_handle(result.weights, scheme, prior), test, "nbe",
                               config.family, names, timing)
        stages[stage] = "complete"
        if config.family in MODELS:
            for h in config.cpl_h_max:
                stage = f"evaluate_cpl_{h:g}"
                cfg = CplConfig(config.family, config.tau, prior, h_max=h, seed=config.seed)
                report = report.merge(evaluate_risk(cpl_handle(cfg), test, f"cpl_h{h:g}",
                                                    config.family, names, timing))
                stages[stage] = "complete"
        stage = "write"
        write("risk.csv", report.to_csv())
        write("scatter.csv", scatter_csv(report, names))
        stages[stage] = "complete"
    except Exception:
        stages[stage] = "failed"
        finish(False)
        raise
    finish(True)
    return out
