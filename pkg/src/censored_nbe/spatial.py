"""Grids, anisotropy, covariance kernels and Gaussian-process sampling.

Sites are ordered row-major: site ``k`` sits at column ``k % G`` (x varies
fastest) and row ``k // G``. Lattices are corner-anchored, so a ``G x G``
grid on ``[0, L]`` has spacing ``L / (G - 1)``.

Every stochastic function takes an explicit ``numpy.random.Generator``;
nothing here touches global random state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .exceptions import InvalidArgument, NotPositiveDefinite

__all__ = [
    "Grid",
    "AnisotropyParams",
    "CovarianceModel",
    "SpdFactor",
    "make_rng",
    "build_grid",
    "single_site_grid",
    "grid_preset",
    "GRID_PRESETS",
    "anisotropy_transform",
    "pairwise_distances",
    "kernel_eval",
    "matern_correlation",
    "cholesky_spd",
    "gp_sample",
    "IncrementSampler",
    "conditional_gp_increment",
]

JITTER_START = 1e-10
JITTER_FACTOR = 10.0
JITTER_CAP = 1e-4


def make_rng(seed=None):
    """Counter-based (Philox) generator; pass the result explicitly everywhere."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class Grid:
    side_length: int
    extent: tuple[float, float, float, float]  # x_min, x_max, y_min, y_max
    sites: np.ndarray = field(repr=False, compare=False)

    @property
    def d(self) -> int:
        return self.side_length**2

    @property
    def spacing(self) -> tuple[float, float]:
        x0, x1, y0, y1 = self.extent
        g = self.side_length - 1
        return ((x1 - x0) / g, (y1 - y0) / g) if g else (0.0, 0.0)

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.side_length == other.side_length
            and np.allclose(self.extent, other.extent)
        )

    def __hash__(self):
        return hash((self.side_length, tuple(self.extent)))


def build_grid(G, extent=(0.0, 16.0, 0.0, 16.0)) -> Grid:
    """Regular ``G x G`` lattice over ``extent = (x_min, x_max, y_min, y_max)``."""
    if int(G) != G or G < 2:
        raise InvalidArgument(f"grid side length must be an integer >= 2, got {G}")
    G = int(G)
    x0, x1, y0, y1 = (float(v) for v in extent)
    if not (x1 > x0 and y1 > y0):
        raise InvalidArgument(f"degenerate extent {extent}")
    xs = np.linspace(x0, x1, G)
    ys = np.linspace(y0, y1, G)
    xx, yy = np.meshgrid(xs, ys)  # rows follow y, columns follow x
    sites = np.column_stack([xx.ravel(), yy.ravel()])
    sites.setflags(write=False)
    return Grid(G, (x0, x1, y0, y1), sites)


def single_site_grid(extent=(0.0, 0.0, 0.0, 0.0)) -> Grid:
    """Degenerate one-site "grid"; only useful for marginal checks."""
    sites = np.array([[extent[0], extent[2]]], dtype=float)
    sites.setflags(write=False)
    return Grid(1, tuple(float(v) for v in extent), sites)


GRID_PRESETS = {
    "g16": (16, (0.0, 16.0, 0.0, 16.0)),
    "g8": (8, (0.0, 16.0, 0.0, 16.0)),
    "g6": (6, (0.0, 16.0, 0.0, 16.0)),
    "g4": (4, (0.0, 16.0, 0.0, 16.0)),
}


def grid_preset(name: str) -> Grid:
    try:
        G, extent = GRID_PRESETS[name]
    except KeyError:
        raise InvalidArgument(
            f"unknown grid preset {name!r}; choose from {sorted(GRID_PRESETS)}"
        ) from None
    return build_grid(G, extent)


@dataclass(frozen=True)
class AnisotropyParams:
    A: float
    omega: float

    def __post_init__(self):
        if not self.A > 0:
            raise InvalidArgument(f"stretch A must be positive, got {self.A}")
        if not (-np.pi / 2 - 1e-12 <= self.omega <= 1e-12):
            raise InvalidArgument(f"rotation omega must lie in [-pi/2, 0], got {self.omega}")

    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.omega), np.sin(self.omega)
        return np.array([[1.0, 0.0], [0.0, 1.0 / self.A]]) @ np.array([[c, -s], [s, c]])


def anisotropy_transform(s, params: AnisotropyParams) -> np.ndarray:
    """Rotate by ``omega`` then shrink the second axis by ``1/A``.

    Works on a single pair or an ``(n, 2)`` array of coordinates.
    """
    s = np.asarray(s, dtype=float)
    return s @ params.matrix().T


def pairwise_distances(grid: Grid, aniso: AnisotropyParams | None = None) -> np.ndarray:
    sites = grid.sites if aniso is None else anisotropy_transform(grid.sites, aniso)
    diff = sites[:, None, :] - sites[None, :, :]
    h = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(h, 0.0)
    return h


@dataclass(frozen=True)
class CovarianceModel:
    """``matern_correlation`` (unit variance, smoothness ``kappa``) or
    ``power_variogram`` ``gamma(h) = (h / lam) ** kappa`` with ``kappa`` in (0, 2]."""

    kind: str
    lam: float
    kappa: float

    def __post_init__(self):
        if self.kind not in ("matern_correlation", "power_variogram"):
            raise InvalidArgument(f"unknown covariance kind {self.kind!r}")
        if not self.lam > 0:
            raise InvalidArgument(f"range must be positive, got {self.lam}")
        if self.kind == "power_variogram" and not 0 < self.kappa <= 2:
            raise InvalidArgument(f"variogram exponent must lie in (0, 2], got {self.kappa}")
        if self.kind == "matern_correlation" and not self.kappa > 0:
            raise InvalidArgument(f"Matern smoothness must be positive, got {self.kappa}")

    def __call__(self, h):
        return kernel_eval(self, h)


def matern_correlation(h, lam, nu):
    """Unit-variance Matern correlation; broadcasts over ``h``, ``lam`` and ``nu``."""
    h, lam, nu = np.broadcast_arrays(
        np.asarray(h, dtype=float), np.asarray(lam, dtype=float), np.asarray(nu, dtype=float)
    )
    x = h / lam
    out = np.ones(x.shape)
    pos = x > 0
    if np.any(pos):
        xp, nup = x[pos], nu[pos]
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            val = np.exp(
                (1.0 - nup) * np.log(2.0) - special.gammaln(nup) + nup * np.log(xp)
            ) * special.kv(nup, xp)
        val = np.where(np.isfinite(val), val, 0.0)
        out[pos] = np.clip(val, 0.0, 1.0)
    return out if out.ndim else float(out)


def kernel_eval(model: CovarianceModel, h):
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0):
        raise InvalidArgument("distances must be non-negative")
    if model.kind == "matern_correlation":
        return matern_correlation(h_arr, model.lam, model.kappa)
    out = (h_arr / model.lam) ** model.kappa
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class SpdFactor:
    L: np.ndarray
    jitter: float

    @property
    def d(self) -> int:
        return self.L.shape[0]


def cholesky_spd(M, jitter_start=JITTER_START, jitter_factor=JITTER_FACTOR,
                 jitter_cap=JITTER_CAP) -> SpdFactor:
    """Lower Cholesky factor of ``M + jitter * I``.

    Tries ``jitter = 0`` first, then ``jitter_start`` multiplied by
    ``jitter_factor`` until ``jitter_cap``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgument(f"expected a square matrix, got shape {M.shape}")
    if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
        raise InvalidArgument("matrix is not symmetric")
    eye = np.eye(M.shape[0])
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(M + jitter * eye)
            if np.all(np.diag(L) > 0):
                return SpdFactor(L, jitter)
        except np.linalg.LinAlgError:
            pass
        if jitter >= jitter_cap:
            raise NotPositiveDefinite(
                f"matrix not positive definite at jitter {jitter:g}", jitter
            )
        jitter = jitter_start if jitter == 0.0 else min(jitter * jitter_factor, jitter_cap)


def batched_cholesky(M: np.ndarray) -> np.ndarray:
    """Cholesky of a stack ``(..., d, d)``; falls back to the jitter ladder per matrix."""
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        flat = M.reshape(-1, *M.shape[-2:])
        out = np.empty_like(flat)
        for i, Mi in enumerate(flat):
            out[i] = cholesky_spd(Mi).L
        return out.reshape(M.shape)


def gp_sample(factor: SpdFactor, rng, size=None) -> np.ndarray:
    """``L z`` with ``z`` standard normal; ``size`` adds leading replicate axes."""
    if size is None:
        z = rng.standard_normal(factor.d)
        return factor.L @ z
    shape = (size,) if np.isscalar(size) else tuple(size)
    z = rng.standard_normal((*shape, factor.d))
    return z @ factor.L.T


class IncrementSampler:
    """Draws the Gaussian process with semivariogram ``gamma`` pinned to zero at site 0.

    ``Var(X(s_i) - X(s_k)) = 2 gamma(s_i, s_k)``. Increments relative to any other
    anchor ``j`` are ``X - X[j]``, which share the same law, so one factor
    serves every anchor.
    """

    def __init__(self, variogram: CovarianceModel, grid: Grid, aniso=None):
        if variogram.kind != "power_variogram":
            raise InvalidArgument("increment process needs a power variogram")
        h = pairwise_distances(grid, aniso)
        self.gamma = kernel_eval(variogram, h)
        self.d = grid.d
        if self.d > 1:
            g0 = self.gamma[0, 1:]
            C = g0[:, None] + g0[None, :] - self.gamma[1:, 1:]
            self.factor = cholesky_spd(0.5 * (C + C.T))
        else:
            self.factor = None

    def draw(self, n, rng) -> np.ndarray:
        out = np.zeros((n, self.d))
        if self.factor is not None:
            out[:, 1:] = gp_sample(self.factor, rng, size=n)
        return out

    def spectral(self, n, anchors, rng) -> np.ndarray:
        """Log-Gaussian spectral functions ``exp{X - X[j] - gamma(., s_j)}``, equal to 1 at ``s_j``."""
        X = self.draw(n, rng)
        anchors = np.broadcast_to(np.asarray(anchors), (n,))
        rows = np.arange(n)
        logY = X - X[rows, anchors][:, None] - self.gamma[anchors]
        logY[rows, anchors] = 0.0
        return np.exp(logY)


def conditional_gp_increment(variogram: CovarianceModel, anchor_index: int, grid: Grid, rng,
                             size=None, aniso=None) -> np.ndarray:
    """Intrinsic Gaussian increment field that is exactly zero at ``anchor_index`` (0-based)."""
    d = grid.d
    if not 0 <= anchor_index < d:
        raise InvalidArgument(f"anchor index {anchor_index} outside 0..{d - 1}")
    sampler = IncrementSampler(variogram, grid, aniso)
    X = sampler.draw(1 if size is None else size, rng)
    X = X - X[:, [anchor_index]]
    X[:, anchor_index] = 0.0
    return X[0] if size is None else X
