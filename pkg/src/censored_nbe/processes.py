"""Simulators and marginal/analytic utilities for the five process families.

Families and their native margins:

==================== ============== ==========================
family               parameters     margins
==================== ============== ==========================
``gp``               lam, kappa     Unif(0, 1)
``msp_brown_resnick``  lam, kappa     unit Frechet
``imsp_brown_resnick`` lam, kappa     Exp(1)
``r_pareto_max``     lam, kappa     unit-Pareto scale (risk ``max`` is unit Pareto)
``hw_mixture``       lam, kappa, delta  unit Pareto
==================== ============== ==========================

For ``gp`` and ``hw_mixture`` ``kappa`` is the Matern smoothness; for the
Brown-Resnick families it is the power-variogram exponent. Any family may
carry anisotropy ``(A, omega)``, appended to the parameter vector.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from .bivariate import hr_exponent_V
from .exceptions import InvalidArgument, InvalidData, NotApplicable, SamplerError
from .margins import MarginTag, as_margin, transform_values
from .spatial import (
    AnisotropyParams,
    CovarianceModel,
    Grid,
    IncrementSampler,
    batched_cholesky,
    matern_correlation,
    pairwise_distances,
)

__all__ = [
    "FAMILIES",
    "ProcessSpec",
    "ReplicateSet",
    "canonical_family",
    "simulate",
    "simulate_batch",
    "simulate_gp_uniform",
    "simulate_brown_resnick",
    "simulate_inverted_msp",
    "simulate_r_pareto_max",
    "simulate_hw",
    "hw_marginal_cdf",
    "hw_marginal_sf",
    "marginal_transform",
    "chi_analytic",
    "empirical_chi",
]

FAMILIES = {
    "gp": 0,
    "msp_brown_resnick": 1,
    "imsp_brown_resnick": 2,
    "r_pareto_max": 3,
    "hw_mixture": 4,
}
_FAMILY_ALIASES = {
    "msp": "msp_brown_resnick",
    "br": "msp_brown_resnick",
    "imsp": "imsp_brown_resnick",
    "rpareto": "r_pareto_max",
    "r_pareto": "r_pareto_max",
    "hw": "hw_mixture",
}
NATIVE_MARGIN = {
    "gp": MarginTag.UNIFORM,
    "msp_brown_resnick": MarginTag.UNIT_FRECHET,
    "imsp_brown_resnick": MarginTag.EXPONENTIAL,
    "r_pareto_max": MarginTag.UNIT_PARETO,
    "hw_mixture": MarginTag.UNIT_PARETO,
}
MIN_ACCEPTANCE = 1e-4


def canonical_family(name) -> str:
    if isinstance(name, (int, np.integer)):
        for fam, code in FAMILIES.items():
            if code == name:
                return fam
        raise InvalidArgument(f"unknown family id {name}")
    key = str(name).lower()
    key = _FAMILY_ALIASES.get(key, key)
    if key not in FAMILIES:
        raise InvalidArgument(f"unknown process family {name!r}")
    return key


@dataclass(frozen=True)
class ProcessSpec:
    family: str
    grid: Grid
    lam: float
    kappa: float
    delta: float | None = None
    aniso: AnisotropyParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", canonical_family(self.family))
        if not self.lam > 0:
            raise InvalidArgument(f"range lam must be positive, got {self.lam}")
        if self.family in ("gp", "hw_mixture"):
            if not self.kappa > 0:
                raise InvalidArgument(f"Matern smoothness must be positive, got {self.kappa}")
        elif not 0 < self.kappa <= 2:
            raise InvalidArgument(f"variogram exponent must lie in (0, 2], got {self.kappa}")
        if (self.delta is not None) != (self.family == "hw_mixture"):
            raise InvalidArgument("delta is required for, and only for, hw_mixture")
        if self.delta is not None and not 0 <= self.delta <= 1:
            raise InvalidArgument(f"delta must lie in [0, 1], got {self.delta}")

    @property
    def param_names(self) -> tuple[str, ...]:
        return param_names(self.family, self.aniso is not None)

    @property
    def theta(self) -> np.ndarray:
        vals = [self.lam, self.kappa]
        if self.delta is not None:
            vals.append(self.delta)
        if self.aniso is not None:
            vals += [self.aniso.A, self.aniso.omega]
        return np.array(vals, dtype=float)

    @property
    def margin(self) -> MarginTag:
        return NATIVE_MARGIN[self.family]

    def with_theta(self, theta) -> "ProcessSpec":
        theta = np.asarray(theta, dtype=float)
        names = self.param_names
        if theta.shape != (len(names),):
            raise InvalidArgument(f"expected {len(names)} parameters {names}, got {theta.shape}")
        kw = dict(zip(names, theta.tolist()))
        aniso = AnisotropyParams(kw["A"], kw["omega"]) if "A" in kw else None
        return replace(self, lam=kw["lam"], kappa=kw["kappa"], delta=kw.get("delta"), aniso=aniso)

    def covariance_model(self) -> CovarianceModel:
        kind = "matern_correlation" if self.family in ("gp", "hw_mixture") else "power_variogram"
        return CovarianceModel(kind, self.lam, self.kappa)


def param_names(family, anisotropic=False) -> tuple[str, ...]:
    family = canonical_family(family)
    names = ("lam", "kappa", "delta") if family == "hw_mixture" else ("lam", "kappa")
    return names + (("A", "omega") if anisotropic else ())


@dataclass
class ReplicateSet:
    """``m`` independent fields on ``spec.grid``, stored as an ``(m, d)`` array.

    r-Pareto sets are on the unit-Pareto scale but individual sites can fall
    below 1; only the field maximum is unit Pareto.
    """

    spec: ProcessSpec
    data: np.ndarray
    margin: MarginTag = field(default=None)

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data))
        if self.margin is None:
            self.margin = self.spec.margin
        self.margin = as_margin(self.margin)
        if self.data.ndim != 2 or self.data.shape[1] != self.spec.grid.d:
            raise InvalidArgument(
                f"data must have shape (m, {self.spec.grid.d}), got {self.data.shape}"
            )
        if self.data.shape[0] < 1:
            raise InvalidArgument("a replicate set needs m >= 1")

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def grid(self) -> Grid:
        return self.spec.grid

    def as_images(self) -> np.ndarray:
        G = self.spec.grid.side_length
        return self.data.reshape(self.m, G, G)

    def subset(self, idx) -> "ReplicateSet":
        return ReplicateSet(self.spec, self.data[np.asarray(idx)], self.margin)


# --------------------------------------------------------------------------- GP


def _matern_factors(grid: Grid, thetas: np.ndarray, aniso_cols=False) -> np.ndarray:
    """Cholesky factors of the Matern correlation matrices, one per parameter row."""
    K = thetas.shape[0]
    d = grid.d
    if not aniso_cols:
        h = pairwise_distances(grid)
        uniq, inv = np.unique(np.round(h, 12), return_inverse=True)
        corr = matern_correlation(uniq[None, :], thetas[:, [0]], thetas[:, [1]])
        C = corr[:, inv.ravel()].reshape(K, d, d)
    else:
        C = np.empty((K, d, d))
        for i, th in enumerate(thetas):
            h = pairwise_distances(grid, AnisotropyParams(th[-2], th[-1]))
            C[i] = matern_correlation(h, th[0], th[1])
    return batched_cholesky(C)


def _gp_normal_batch(grid, thetas, m, rng, anisotropic=False, chunk=512):
    """Standard-normal-margin Matern fields, shape ``(K, m, d)``."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    K, d = thetas.shape[0], grid.d
    out = np.empty((K, m, d))
    for start in range(0, K, chunk):
        sl = slice(start, min(start + chunk, K))
        L = _matern_factors(grid, thetas[sl], anisotropic)
        z = rng.standard_normal((L.shape[0], m, d))
        out[sl] = z @ np.swapaxes(L, -1, -2)
    return out


def simulate_gp_uniform(spec: ProcessSpec, m: int, rng) -> ReplicateSet:
    """Matern Gaussian process mapped through the normal CDF to Unif(0, 1) margins."""
    if spec.family != "gp":
        raise InvalidArgument(f"simulate_gp_uniform needs family gp, got {spec.family}")
    G = _gp_normal_batch(spec.grid, spec.theta, m, rng, spec.aniso is not None)[0]
    return ReplicateSet(spec, _to_uniform(G), MarginTag.UNIFORM)


def _to_uniform(G):
    # keep 1 - U strictly positive so downstream quantile maps stay finite
    return np.minimum(ndtr(G), _U_MAX)


_U_MAX = 1.0 - 2.0**-53


# ------------------------------------------------------------------ Brown-Resnick


def _brown_resnick_frechet(spec: ProcessSpec, m: int, rng) -> np.ndarray:
    """Exact simulation via extremal functions, swept site by site.

    For site ``j`` a Poisson cascade ``zeta = 1/(E_1 + E_2 + ...)`` proposes
    ``zeta * Y_j`` with ``Y_j`` the spectral function anchored at ``j``.
    A proposal is kept only if it does not exceed the running maximum at
    the sites already processed; the cascade stops once ``zeta`` falls
    below the current value at ``j``.
    """
    variogram = CovarianceModel("power_variogram", spec.lam, spec.kappa)
    sampler = IncrementSampler(variogram, spec.grid, spec.aniso)
    d = sampler.d
    Z = np.zeros((m, d))
    for j in range(d):
        E = rng.standard_exponential(m)
        zeta = 1.0 / E
        active = np.flatnonzero(zeta > Z[:, j])
        while active.size:
            Y = sampler.spectral(active.size, j, rng)
            prop = zeta[active, None] * Y
            if j > 0:
                ok = np.all(prop[:, :j] < Z[active, :j], axis=1)
            else:
                ok = np.ones(active.size, dtype=bool)
            rows = active[ok]
            Z[rows] = np.maximum(Z[rows], prop[ok])
            E[active] += rng.standard_exponential(active.size)
            zeta[active] = 1.0 / E[active]
            active = active[zeta[active] > Z[active, j]]
    return Z


def simulate_brown_resnick(spec: ProcessSpec, m: int, rng) -> ReplicateSet:
    if spec.family != "msp_brown_resnick":
        raise InvalidArgument(f"expected msp_brown_resnick, got {spec.family}")
    return ReplicateSet(spec, _brown_resnick_frechet(spec, m, rng), MarginTag.UNIT_FRECHET)


def simulate_inverted_msp(spec: ProcessSpec, m: int, rng) -> ReplicateSet:
    """``Y = 1/Z`` sitewise for a Brown-Resnick draw ``Z``; Exp(1) margins."""
    if spec.family != "imsp_brown_resnick":
        raise InvalidArgument(f"expected imsp_brown_resnick, got {spec.family}")
    Z = _brown_resnick_frechet(spec, m, rng)
    return ReplicateSet(spec, 1.0 / Z, MarginTag.EXPONENTIAL)


# ----------------------------------------------------------------------- r-Pareto


def simulate_r_pareto_max(spec: ProcessSpec, m: int, rng, max_batches=10_000) -> ReplicateSet:
    """r-Pareto process with risk ``r(x) = max_i x(s_i)`` and Brown-Resnick angular part.

    Anchor-``j`` spectral functions with ``j`` uniform give the sum-risk
    angular law; accepting each with probability ``max(Y) / sum(Y)`` tilts
    it to the max-risk law. The result is ``R * Y / max(Y)`` with ``R``
    unit Pareto.
    """
    if spec.family != "r_pareto_max":
        raise InvalidArgument(f"expected r_pareto_max, got {spec.family}")
    variogram = CovarianceModel("power_variogram", spec.lam, spec.kappa)
    sampler = IncrementSampler(variogram, spec.grid, spec.aniso)
    d = sampler.d
    chunks, n_acc, n_prop = [], 0, 0
    batch = max(2 * m, 64)
    for _ in range(max_batches):
        anchors = rng.integers(d, size=batch)
        Y = sampler.spectral(batch, anchors, rng)
        ymax = Y.max(axis=1)
        acc = rng.random(batch) < ymax / Y.sum(axis=1)
        n_prop += batch
        n_acc += int(acc.sum())
        chunks.append(Y[acc] / ymax[acc, None])
        if n_acc >= m:
            break
        if n_prop >= 10_000 and n_acc / n_prop < MIN_ACCEPTANCE:
            raise SamplerError(
                f"r-Pareto acceptance rate {n_acc / n_prop:.2e} below {MIN_ACCEPTANCE:g}; "
                "check for pathological variogram parameters"
            )
    else:
        raise SamplerError("r-Pareto sampler exhausted its proposal budget")
    W = np.concatenate(chunks)[:m]
    R = np.exp(rng.standard_exponential(m))
    return ReplicateSet(spec, R[:, None] * W, MarginTag.UNIT_PARETO)


# ----------------------------------------------------------------------------- HW


def hw_marginal_sf(z, delta):
    """Survival function of ``R**delta * W**(1-delta)`` for independent unit Pareto ``R, W``.

    With ``a = delta`` and ``b = 1 - delta``, ``log`` of the product is a sum of
    exponentials with means ``a`` and ``b``, giving
    ``(a z^{-1/a} - b z^{-1/b}) / (a - b)``; at ``a = b = 1/2`` the limit
    is ``z^{-2} (1 + 2 log z)``. Values ``z < 1`` have survival 1.
    """
    z, delta = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(delta, dtype=float))
    if np.any((delta < 0) | (delta > 1)):
        raise InvalidArgument("delta must lie in [0, 1]")
    t = np.log(np.maximum(z, 1.0))
    a, b = delta, 1.0 - delta
    out = np.empty(z.shape)
    edge = (a == 0) | (b == 0)
    half = ~edge & (np.abs(a - b) < 1e-7)
    gen = ~edge & ~half
    out[edge] = np.exp(-t[edge])
    out[half] = np.exp(-2.0 * t[half]) * (1.0 + 2.0 * t[half])
    ag, bg, tg = a[gen], b[gen], t[gen]
    out[gen] = (ag * np.exp(-tg / ag) - bg * np.exp(-tg / bg)) / (ag - bg)
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def hw_marginal_cdf(z, delta):
    """Exact CDF of ``R**delta * W**(1-delta)``; returns 0 for ``z < 1`` by convention."""
    out = 1.0 - np.asarray(hw_marginal_sf(z, delta))
    return out if out.ndim else float(out)


def simulate_hw(spec: ProcessSpec, m: int, rng) -> ReplicateSet:
    """``R**delta * W**(1-delta)`` restandardised to unit Pareto margins.

    ``W`` is the Matern GP on unit Pareto margins and ``R`` an independent
    unit Pareto variable shared by all sites of a replicate.
    """
    if spec.family != "hw_mixture":
        raise InvalidArgument(f"expected hw_mixture, got {spec.family}")
    gp = replace(spec, family="gp", delta=None)
    U = simulate_gp_uniform(gp, m, rng).data
    W = transform_values(U, MarginTag.UNIFORM, MarginTag.UNIT_PARETO)
    R = np.exp(rng.standard_exponential(m))[:, None]
    return ReplicateSet(spec, _hw_combine(W, R, spec.delta), MarginTag.UNIT_PARETO)


def _hw_combine(W, R, delta):
    if delta == 0:
        return W
    if delta == 1:
        return np.broadcast_to(R, W.shape).copy()
    logZ = delta * np.log(R) + (1.0 - delta) * np.log(W)
    return 1.0 / hw_marginal_sf(np.exp(logZ), delta)


# ---------------------------------------------------------------------- dispatch

_SIMULATORS = {
    "gp": simulate_gp_uniform,
    "msp_brown_resnick": simulate_brown_resnick,
    "imsp_brown_resnick": simulate_inverted_msp,
    "r_pareto_max": simulate_r_pareto_max,
    "hw_mixture": simulate_hw,
}


def simulate(spec: ProcessSpec, m: int, rng) -> ReplicateSet:
    if int(m) != m or m < 1:
        raise InvalidArgument(f"m must be a positive integer, got {m}")
    return _SIMULATORS[spec.family](spec, int(m), rng)


def simulate_batch(template: ProcessSpec, thetas, m: int, rng) -> np.ndarray:
    """Simulate ``m`` replicates for every row of ``thetas``; returns ``(K, m, d)``.

    Matern-based families share one batched Cholesky pass; the others loop.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    aniso = template.aniso is not None
    if template.family in ("gp", "hw_mixture"):
        G = _gp_normal_batch(template.grid, thetas[:, [0, 1] + ([-2, -1] if aniso else [])],
                             m, rng, aniso)
        U = _to_uniform(G)
        if template.family == "gp":
            return U
        W = transform_values(U, MarginTag.UNIFORM, MarginTag.UNIT_PARETO)
        R = np.exp(rng.standard_exponential((thetas.shape[0], m)))
        out = np.empty_like(W)
        for i, th in enumerate(thetas):
            out[i] = _hw_combine(W[i], R[i][:, None], th[2])
        return out
    out = np.empty((thetas.shape[0], m, template.grid.d))
    for i, th in enumerate(thetas):
        out[i] = simulate(template.with_theta(th), m, rng).data
    return out


# ---------------------------------------------------------------- transforms, chi


def marginal_transform(rset: ReplicateSet, target) -> ReplicateSet:
    """Sitewise probability-integral transform to ``target`` margins (rank preserving)."""
    target = as_margin(target)
    data = transform_values(rset.data, rset.margin, target)
    return ReplicateSet(rset.spec, data, target)


def chi_analytic(spec: ProcessSpec, h) -> np.ndarray | float:
    """Brown-Resnick tail correlation ``chi(h) = 2 - V(1, 1)`` at lag ``h``."""
    if spec.family not in ("msp_brown_resnick", "r_pareto_max"):
        raise NotApplicable(f"no closed-form chi for family {spec.family}")
    gamma = (np.asarray(h, dtype=float) / spec.lam) ** spec.kappa
    chi = 2.0 - np.asarray(hr_exponent_V(1.0, 1.0, gamma))
    chi = np.clip(chi, 0.0, 1.0)
    return chi if chi.ndim else float(chi)


def empirical_chi(data, pair, q: float) -> float:
    """Rank-based ``P(F_i(Z_i) > q | F_j(Z_j) > q)``; NaN when site ``j`` never exceeds ``q``."""
    X = data.data if isinstance(data, ReplicateSet) else np.asarray(data, dtype=float)
    if not 0 < q < 1:
        raise InvalidArgument(f"q must lie in (0, 1), got {q}")
    i, j = pair
    m = X.shape[0]
    if m * (1.0 - q) < 20:
        warnings.warn(
            f"only {m * (1 - q):.1f} exceedances expected at q={q}; chi estimate unreliable",
            RuntimeWarning,
            stacklevel=2,
        )
    ui = _pseudo_uniform(X[:, i])
    uj = _pseudo_uniform(X[:, j])
    cond = uj > q
    n = int(cond.sum())
    if n == 0:
        return float("nan")
    return float(np.count_nonzero(ui[cond] > q) / n)


def _pseudo_uniform(x):
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    ranks[order] = np.arange(1, len(x) + 1)
    return ranks / (len(x) + 1.0)


def check_support(rset: ReplicateSet):
    """Raise ``InvalidData`` if a set's values leave its margin's support."""
    if rset.spec.family == "r_pareto_max":
        ok = np.all(rset.data > 0)
    else:
        ok = np.all(rset.margin.in_support(rset.data))
    if not ok:
        raise InvalidData(f"values outside the {rset.margin.value} support")
