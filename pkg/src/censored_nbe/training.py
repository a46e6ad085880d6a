"""Priors, Monte Carlo Bayes risk and simulation-based training of the estimator."""

from __future__ import annotations

import csv
import io
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .censoring import CensoredTensor, CensoringScheme, censor_encode
from .exceptions import InvalidArgument, TrainingFailed
from .margins import transform_values
from .network import (
    Adam, Architecture, EstimatorWeights, desk_architecture, forward, gradient,
    init_weights, loss_value, grid16_architecture,
)
from .processes import NATIVE_MARGIN, ProcessSpec, ReplicateSet, simulate_batch
from .spatial import make_rng

__all__ = [
    "PriorSpec",
    "TrainConfig",
    "TrainResult",
    "mc_bayes_risk",
    "simulate_training_images",
    "train",
    "estimate",
    "default_architecture",
    "draw_taus",
]


@dataclass(frozen=True)
class PriorSpec:
    """Independent uniform priors on a box."""

    names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if not len(self.names) == len(self.lower) == len(self.upper):
            raise InvalidArgument("prior names and bounds differ in length")
        if not all(lo < hi for lo, hi in zip(self.lower, self.upper)):
            raise InvalidArgument("prior lower bounds must be below upper bounds")

    @property
    def p(self) -> int:
        return len(self.names)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lower) + np.array(self.upper))

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (np.array(self.upper) - np.array(self.lower))

    def sample(self, n, rng) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.p))

    def clamp(self, theta) -> np.ndarray:
        return np.clip(theta, self.lower, self.upper)

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def to_dict(self) -> dict:
        return {"names": list(self.names), "lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, d) -> "PriorSpec":
        return cls(tuple(d["names"]), tuple(d["lower"]), tuple(d["upper"]))

    @classmethod
    def simulation_study(cls, family: str) -> "PriorSpec":
        """Default priors for the gridded simulation study."""
        if family == "hw_mixture":
            return cls(("lam", "kappa", "delta"), (2.0, 0.5, 0.0), (10.0, 2.0, 1.0))
        return cls(("lam", "kappa"), (2.0, 0.5), (10.0, 2.0))

    @classmethod
    def application(cls) -> "PriorSpec":
        """Default priors for the anisotropic application-scale model."""
        return cls(("lam", "kappa", "A", "omega"), (20.0, 0.1, 0.5, -np.pi / 2),
                   (1000.0, 4.0, 3.5, 0.0))


TAU_MODES = ("fixed", "random", "sequence")


@dataclass
class TrainConfig:
    """Training settings.

    ``tau_mode`` is ``fixed`` (use ``tau``), ``random`` (uniform on
    ``tau_range``, redrawn with the parameters) or ``sequence`` (a regular
    grid of ``K`` values on ``tau_range``). ``refresh_period`` redraws the
    training parameters every that many epochs; ``None`` keeps them fixed
    while the data are resimulated every epoch.
    """

    prior: PriorSpec
    K: int = 5000
    m_ladder: tuple[int, ...] = (10, 50)
    loss: str = "absolute"
    J: int = 1
    tau_mode: str = "fixed"
    tau: float = 0.9
    tau_range: tuple[float, float] = (0.85, 0.95)
    refresh_period: int | None = None
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 10
    channels: int = 2
    seed: int = 0
    architecture: Architecture | None = None

    def __post_init__(self):
        self.m_ladder = tuple(int(v) for v in self.m_ladder)
        if not self.m_ladder or any(b <= a for a, b in zip(self.m_ladder, self.m_ladder[1:])):
            raise InvalidArgument(f"m ladder must be strictly increasing, got {self.m_ladder}")
        if self.m_ladder[0] < 1:
            raise InvalidArgument("replicate counts must be positive")
        if self.loss not in ("absolute", "squared"):
            raise InvalidArgument(f"unknown loss {self.loss!r}")
        if self.J != 1:
            raise InvalidArgument("only J = 1 is supported")
        if self.tau_mode not in TAU_MODES:
            raise InvalidArgument(f"tau_mode must be one of {TAU_MODES}")
        if self.K < 5:
            raise InvalidArgument("K must be at least 5")
        if self.K % 5:
            warnings.warn(f"K={self.K} not divisible by 5; validation size rounded down",
                          RuntimeWarning, stacklevel=2)
        if self.channels not in (1, 2):
            raise InvalidArgument("channels must be 1 or 2")

    @property
    def m(self) -> int:
        return self.m_ladder[-1]

    @property
    def n_val(self) -> int:
        return self.K // 5

    @property
    def tau_input(self) -> bool:
        return self.tau_mode != "fixed"


@dataclass
class TrainResult:
    weights: EstimatorWeights
    log: list = field(default_factory=list)

    def log_csv(self, timing=True) -> str:
        """Training log as CSV; ``timing=False`` writes ``nan`` seconds."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "stage_m", "train_risk", "val_risk", "seconds"])
        for r in self.log:
            secs = r["seconds"] if timing else float("nan")
            w.writerow([r["epoch"], r["stage_m"], f"{r['train_risk']:.9g}",
                        f"{r['val_risk']:.9g}", f"{secs:.9g}"])
        return buf.getvalue()


def default_architecture(side_length: int, w: int, p: int, tau_input: bool) -> Architecture:
    if side_length == 16:
        return grid16_architecture(w, p, tau_input)
    if side_length == 8:
        return desk_architecture(w, p, tau_input)
    # small grids: a single full-width convolution
    from .network import ConvSpec, DenseSpec
    k = max(1, side_length - 1)
    return Architecture(side_length, w, (ConvSpec(k, 64),), (DenseSpec(128),), p, tau_input)


def simulate_training_images(template: ProcessSpec, thetas, m, taus, scheme: CensoringScheme,
                             channels, rng) -> np.ndarray:
    """Simulate, standardize and censor ``m`` replicates per parameter row.

    Returns float32 images ``(K, m, G, G, channels)``.
    """
    raw = simulate_batch(template, thetas, m, rng)
    native = NATIVE_MARGIN[template.family]
    if native is not scheme.margin:
        raw = transform_values(raw, native, scheme.margin)
    taus = np.broadcast_to(np.asarray(taus, float), (raw.shape[0],))
    G = template.grid.side_length
    # per-row thresholds and constants, so every set may carry its own tau
    thr = np.asarray(scheme.margin.quantile(taus), dtype=float)[:, None, None]
    const = {"zero": 0.0, "plus_quantile": thr, "minus_quantile": -thr}[scheme.c_policy]
    ind = raw > thr
    out = np.empty((*raw.shape[:2], G, G, channels), dtype=np.float32)
    out[..., 0] = np.where(ind, raw, const).reshape(-1, m, G, G)
    if channels == 2:
        out[..., 1] = ind.reshape(-1, m, G, G)
    return out


def _predict_images(weights, images, taus, chunk=64):
    n = images.shape[0]
    out = np.empty((n, weights.arch.p))
    taus = None if taus is None else np.broadcast_to(np.asarray(taus, float), (n,))
    for s in range(0, n, chunk):
        t = None if taus is None else taus[s:s + chunk]
        out[s:s + chunk] = forward(weights, images[s:s + chunk], tau=t)
    return out


def mc_bayes_risk(estimator, eval_set, loss="absolute", scale=None) -> float:
    """Monte Carlo Bayes risk ``K^-1 sum_k L(theta_k, hat theta(Z_k))`` with one
    data draw per parameter.

    ``estimator`` is ``EstimatorWeights`` or any callable mapping a
    ``CensoredTensor`` (or array) to an estimate. ``eval_set`` is a sequence of
    ``(data, theta)`` pairs.
    """
    eval_set = list(eval_set)
    if not eval_set:
        raise InvalidArgument("evaluation set is empty")
    thetas, hats = [], []
    for data, theta in eval_set:
        if isinstance(estimator, EstimatorWeights):
            hats.append(forward(estimator, data))
        else:
            hats.append(estimator(data))
        thetas.append(theta)
    return float(loss_value(np.array(thetas, float), np.array(hats, float), loss, scale).mean())


def draw_taus(config: TrainConfig, n, rng) -> np.ndarray:
    """Censoring levels for ``n`` training sets under ``config.tau_mode``."""
    a, b = config.tau_range
    if config.tau_mode == "fixed":
        return np.full(n, config.tau)
    if config.tau_mode == "random":
        return rng.uniform(a, b, size=n)
    return np.linspace(a, b, n)


def train(config: TrainConfig, template: ProcessSpec, scheme: CensoringScheme,
          weights: EstimatorWeights | None = None, verbose=False) -> TrainResult:
    """Train by simulation-on-the-fly over the pre-training ladder.

    Each epoch resimulates data at the current training parameters; each
    ladder stage warm-starts from the best weights of the previous stage,
    keeps a fixed validation set, and stops after ``patience`` epochs without
    validation improvement. The loss is computed on errors divided by the
    prior half-widths so that parameters on different scales weigh alike.
    """
    rng = make_rng(config.seed)
    prior = config.prior
    if prior.p != len(template.param_names):
        raise InvalidArgument(
            f"prior has {prior.p} parameters, process expects {len(template.param_names)}"
        )
    G = template.grid.side_length
    if weights is None:
        arch = config.architecture or default_architecture(G, config.channels, prior.p,
                                                           config.tau_input)
        weights = init_weights(arch, rng, out_center=prior.center, out_scale=prior.half_width)
    arch = weights.arch
    if arch.side_length != G or arch.in_channels != config.channels or arch.p != prior.p:
        raise InvalidArgument("architecture does not match grid, channels or prior")
    if arch.tau_input != config.tau_input:
        raise InvalidArgument("tau input flag of the architecture does not match tau_mode")
    scale = prior.half_width
    opt = Adam(arch.n_params, lr=config.lr)
    log = []
    epoch = 0
    best = weights.copy()
    for m in config.m_ladder:
        theta_val = prior.sample(config.n_val, rng)
        tau_val = draw_taus(config, config.n_val, rng)
        x_val = simulate_training_images(template, theta_val, m, tau_val, scheme,
                                         config.channels, rng)
        tv = tau_val if config.tau_input else None

        def val_risk(w):
            return float(loss_value(theta_val, _predict_images(w, x_val, tv),
                                    config.loss, scale).mean())

        best_val = val_risk(weights)
        initial = best_val
        best = weights.copy()
        stale = bad = 0
        theta_tr = taus_tr = None
        for stage_epoch in range(config.max_epochs):
            t0 = time.perf_counter()
            if theta_tr is None or (config.refresh_period and
                                    stage_epoch % config.refresh_period == 0):
                theta_tr = prior.sample(config.K, rng)
                taus_tr = draw_taus(config, config.K, rng)
            x_tr = simulate_training_images(template, theta_tr, m, taus_tr, scheme,
                                            config.channels, rng)
            order = rng.permutation(config.K)
            total = 0.0
            for s in range(0, config.K, config.batch_size):
                idx = order[s:s + config.batch_size]
                tb = taus_tr[idx] if config.tau_input else None
                value, g = gradient(weights, x_tr[idx], theta_tr[idx], config.loss,
                                    tau=tb, scale=scale)
                if not np.isfinite(value) or not np.all(np.isfinite(g)):
                    raise TrainingFailed(f"non-finite loss at epoch {epoch}", log)
                opt.step(weights.params, g)
                total += value * len(idx)
            v = val_risk(weights)
            epoch += 1
            rec = {"epoch": epoch, "stage_m": m, "train_risk": total / config.K,
                   "val_risk": v, "seconds": time.perf_counter() - t0}
            log.append(rec)
            if verbose:
                print(rec, flush=True)
            if not np.isfinite(v) or v > 10 * initial:
                bad += 1
                if bad >= config.patience or not np.isfinite(v):
                    raise TrainingFailed(f"validation risk diverged at epoch {epoch}", log)
            else:
                bad = 0
            if v < best_val:
                best_val, best, stale = v, weights.copy(), 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
        weights = best.copy()
    best.metadata.update({
        "family": template.family,
        "grid": [G, *template.grid.extent],
        "prior": prior.to_dict(),
        "scheme": {"tau": scheme.tau, "margin": scheme.margin.value,
                   "c_policy": scheme.c_policy},
        "tau_mode": config.tau_mode,
        "m": config.m,
        "epoch": epoch,
        "seed": config.seed,
    })
    return TrainResult(best, log)


def estimate(weights: EstimatorWeights, rset: ReplicateSet, scheme: CensoringScheme,
             prior: PriorSpec | None = None):
    """Point estimate for one replicate set, truncated into the prior box.

    Returns ``(theta_hat, seconds)``.
    """
    if rset.grid.side_length != weights.arch.side_length:
        raise InvalidArgument(
            f"estimator expects a {weights.arch.side_length}-side grid, got "
            f"{rset.grid.side_length}"
        )
    if prior is None and "prior" in weights.metadata:
        prior = PriorSpec.from_dict(weights.metadata["prior"])
    t0 = time.perf_counter()
    if rset.margin is not scheme.margin:
        data = transform_values(rset.data, rset.margin, scheme.margin)
        rset = ReplicateSet(rset.spec, data, scheme.margin)
    tensor: CensoredTensor = censor_encode(rset, scheme)
    theta = forward(weights, tensor, tau=scheme.tau if weights.arch.tau_input else None)
    if prior is not None:
        theta = prior.clamp(theta)
    return theta, time.perf_counter() - t0

