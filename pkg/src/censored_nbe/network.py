"""A small numpy DeepSets network with hand-written reverse-mode gradients.

The estimator is ``phi(pool_t psi(x_t) [, tau])`` where ``psi`` is a stack of
valid (unpadded), unit-stride convolutions with ReLU acting on each replicate
image, ``pool`` is the replicate mean, and ``phi`` is a dense stack ending in
an identity layer followed by a fixed (non-trainable) affine map.

All parameters live in one flat vector; layers hold views into it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import InvalidArgument, NumericalError

__all__ = [
    "ConvSpec",
    "DenseSpec",
    "Architecture",
    "EstimatorWeights",
    "init_weights",
    "forward",
    "gradient",
    "loss_value",
    "Adam",
    "grid16_architecture",
    "desk_architecture",
]


@dataclass(frozen=True)
class ConvSpec:
    kernel: int
    filters: int


@dataclass(frozen=True)
class DenseSpec:
    units: int


@dataclass(frozen=True)
class Architecture:
    """Layer specs for the inner (``psi``) and outer (``phi``) networks.

    ``phi`` is given by its hidden widths; the final identity layer of width
    ``p`` is appended automatically. ``tau_input`` appends the censoring
    level to the pooled summary.
    """

    side_length: int
    in_channels: int
    conv: tuple[ConvSpec, ...]
    dense: tuple[DenseSpec, ...]
    p: int
    tau_input: bool = False

    def __post_init__(self):
        if self.in_channels not in (1, 2):
            raise InvalidArgument(f"input channels must be 1 or 2, got {self.in_channels}")
        if self.p < 1:
            raise InvalidArgument("output width must be positive")
        size = self.side_length
        for c in self.conv:
            size = size - c.kernel + 1
            if size < 1:
                raise InvalidArgument(
                    f"convolution stack shrinks a {self.side_length}-pixel image below one pixel"
                )

    @property
    def conv_output_shape(self) -> tuple[int, int, int]:
        size = self.side_length
        for c in self.conv:
            size = size - c.kernel + 1
        ch = self.conv[-1].filters if self.conv else self.in_channels
        return size, size, ch

    @property
    def q(self) -> int:
        """Width of the pooled summary."""
        return int(np.prod(self.conv_output_shape))

    def layer_shapes(self) -> list[tuple[str, tuple, tuple]]:
        """``(kind, weight shape, bias shape)`` for each trainable layer in order."""
        out = []
        c_in = self.in_channels
        for c in self.conv:
            out.append(("conv", (c.kernel, c.kernel, c_in, c.filters), (c.filters,)))
            c_in = c.filters
        n_in = self.q + (1 if self.tau_input else 0)
        for d in self.dense:
            out.append(("dense", (n_in, d.units), (d.units,)))
            n_in = d.units
        out.append(("dense", (n_in, self.p), (self.p,)))
        return out

    def layer_param_counts(self) -> list[int]:
        return [int(np.prod(w)) + int(np.prod(b)) for _, w, b in self.layer_shapes()]

    @property
    def n_params(self) -> int:
        return sum(self.layer_param_counts())

    def to_dict(self) -> dict:
        return {
            "side_length": self.side_length,
            "in_channels": self.in_channels,
            "conv": [[c.kernel, c.filters] for c in self.conv],
            "dense": [d.units for d in self.dense],
            "p": self.p,
            "tau_input": self.tau_input,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(
            int(d["side_length"]),
            int(d["in_channels"]),
            tuple(ConvSpec(int(k), int(f)) for k, f in d["conv"]),
            tuple(DenseSpec(int(u)) for u in d["dense"]),
            int(d["p"]),
            bool(d.get("tau_input", False)),
        )

    def fingerprint(self) -> bytes:
        """32-byte SHA-256 of the canonical layer spec."""
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).digest()


def grid16_architecture(w: int = 2, p: int = 2, tau_input: bool = False) -> Architecture:
    """Canonical 16 x 16 estimator: conv 10/64, 5/128, 3/256, dense 500, dense p."""
    return Architecture(
        16, w,
        (ConvSpec(10, 64), ConvSpec(5, 128), ConvSpec(3, 256)),
        (DenseSpec(500),), p, tau_input,
    )


def desk_architecture(w: int = 2, p: int = 2, tau_input: bool = False) -> Architecture:
    """Two-convolution preset sized for 8 x 8 grids."""
    return Architecture(
        8, w, (ConvSpec(3, 32), ConvSpec(6, 64)), (DenseSpec(128),), p, tau_input,
    )


@dataclass
class EstimatorWeights:
    """Flat parameter store with per-layer ``(W, b)`` views.

    ``out_center`` and ``out_scale`` define the fixed output map
    ``theta = center + scale * y``; they are not trained.
    """

    arch: Architecture
    params: np.ndarray
    out_center: np.ndarray = None
    out_scale: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params)
        if self.params.ndim != 1 or self.params.size != self.arch.n_params:
            raise InvalidArgument(
                f"parameter vector has {self.params.size} entries, architecture needs "
                f"{self.arch.n_params}"
            )
        p = self.arch.p
        self.out_center = np.zeros(p) if self.out_center is None else np.asarray(self.out_center, float)
        self.out_scale = np.ones(p) if self.out_scale is None else np.asarray(self.out_scale, float)
        self.layers = _views(self.arch, self.params)

    @property
    def dtype(self):
        return self.params.dtype

    def copy(self) -> "EstimatorWeights":
        return EstimatorWeights(self.arch, self.params.copy(), self.out_center.copy(),
                                self.out_scale.copy(), dict(self.metadata))

    def astype(self, dtype) -> "EstimatorWeights":
        return EstimatorWeights(self.arch, self.params.astype(dtype), self.out_center.copy(),
                                self.out_scale.copy(), dict(self.metadata))

    def fingerprint(self) -> bytes:
        return self.arch.fingerprint()


def _views(arch: Architecture, flat: np.ndarray):
    out, off = [], 0
    for kind, ws, bs in arch.layer_shapes():
        nw, nb = int(np.prod(ws)), int(np.prod(bs))
        W = flat[off:off + nw].reshape(ws)
        b = flat[off + nw:off + nw + nb]
        out.append((kind, W, b))
        off += nw + nb
    return out


def init_weights(arch: Architecture, rng, dtype=np.float32, out_center=None,
                 out_scale=None) -> EstimatorWeights:
    """He-uniform weights (bound ``sqrt(6 / fan_in)``), zero biases."""
    flat = np.zeros(arch.n_params, dtype=dtype)
    w = EstimatorWeights(arch, flat, out_center, out_scale)
    n_layers = len(w.layers)
    for i, (kind, W, b) in enumerate(w.layers):
        fan_in = int(np.prod(W.shape[:-1]))
        # plain Glorot-style bound on the identity output layer
        bound = np.sqrt((6.0 if i < n_layers - 1 else 3.0) / fan_in)
        W[...] = rng.uniform(-bound, bound, size=W.shape).astype(dtype)
    return w


# ---------------------------------------------------------------- primitives


def _im2col(X, k):
    """``(B, H, W, C)`` -> ``(B, Ho, Wo, k*k*C)`` with ``(kh, kw, C)`` ordering."""
    win = sliding_window_view(X, (k, k), axis=(1, 2))  # B, Ho, Wo, C, kh, kw
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(
        *win.shape[:3], k * k * X.shape[-1]
    )


def _col2im(dcols, k, H, W, C):
    B, Ho, Wo, _ = dcols.shape
    d = dcols.reshape(B, Ho, Wo, k, k, C)
    dX = np.zeros((B, H, W, C), dtype=dcols.dtype)
    for i in range(k):
        for j in range(k):
            dX[:, i:i + Ho, j:j + Wo, :] += d[:, :, :, i, j, :]
    return dX


def _check_finite(x, layer):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite activation in layer {layer}", layer)


def _pool_mean(S, n_sets, m):
    """Replicate mean of ``(n_sets * m, q)`` summaries.

    Summaries are sorted along the replicate axis and summed in float64, which
    makes the result exactly invariant to replicate order.
    """
    S3 = S.reshape(n_sets, m, -1)
    if m > 1:
        S3 = np.sort(S3, axis=1)
    return (S3.sum(axis=1, dtype=np.float64) / m).astype(S.dtype)


def _as_batch(x, arch):
    """Accept ``(m, G, G, w)`` or ``(n_sets, m, G, G, w)``; returns 5-D array."""
    x = np.asarray(x)
    if x.ndim == 4:
        x = x[None]
    G = arch.side_length
    if x.ndim != 5 or x.shape[2:] != (G, G, arch.in_channels):
        raise InvalidArgument(
            f"input shape {x.shape} does not match architecture ({G}, {G}, {arch.in_channels})"
        )
    if x.shape[1] < 1:
        raise InvalidArgument("need at least one replicate")
    return x


def _run(weights: EstimatorWeights, x, tau, keep: bool):
    arch = weights.arch
    x = _as_batch(x, arch).astype(weights.dtype, copy=False)
    n_sets, m = x.shape[:2]
    h = x.reshape(n_sets * m, *x.shape[2:])
    cache = []
    li = 0
    n_conv = len(arch.conv)
    for li in range(n_conv):
        _, W, b = weights.layers[li]
        k = W.shape[0]
        cols = _im2col(h, k)
        z = cols @ W.reshape(-1, W.shape[-1]) + b
        _check_finite(z, li)
        a = np.maximum(z, 0)
        if keep:
            cache.append((cols, h.shape, z > 0))
        h = a
    S = h.reshape(n_sets * m, -1)
    T = _pool_mean(S, n_sets, m)
    if arch.tau_input:
        if tau is None:
            raise InvalidArgument("architecture expects a censoring level tau")
        tau = np.broadcast_to(np.asarray(tau, dtype=T.dtype).reshape(-1), (n_sets,))
        T = np.concatenate([T, tau[:, None]], axis=1)
    h = T
    n_layers = len(weights.layers)
    for li in range(n_conv, n_layers):
        _, W, b = weights.layers[li]
        z = h @ W + b
        _check_finite(z, li)
        last = li == n_layers - 1
        a = z if last else np.maximum(z, 0)
        if keep:
            cache.append((h, None, None if last else z > 0))
        h = a
    meta = (n_sets, m, S.shape)
    return h, cache, meta


def forward(weights: EstimatorWeights, x, tau=None) -> np.ndarray:
    """Estimates for one replicate set ``(m, G, G, w)`` -> ``(p,)``, or a batch
    ``(n_sets, m, G, G, w)`` -> ``(n_sets, p)``.

    ``x`` may also be a ``CensoredTensor``; its own ``tau`` is then used.
    """
    single = False
    if hasattr(x, "indicator"):
        tau = x.tau if tau is None else tau
        x = x.image(weights.arch.in_channels, weights.dtype)
    if np.ndim(x) == 4:
        single = True
    y, _, _ = _run(weights, x, tau, keep=False)
    theta = weights.out_center + weights.out_scale * y.astype(np.float64)
    return theta[0] if single else theta


_LOSSES = ("absolute", "squared")


def loss_value(theta, theta_hat, loss="absolute", scale=None) -> np.ndarray:
    """Per-set loss summed over components, ``sum_i L((theta_i - hat_i) / s_i)``."""
    if loss not in _LOSSES:
        raise InvalidArgument(f"loss must be one of {_LOSSES}, got {loss!r}")
    e = np.asarray(theta_hat, float) - np.asarray(theta, float)
    if scale is not None:
        e = e / np.asarray(scale, float)
    return (np.abs(e) if loss == "absolute" else e * e).sum(axis=-1)


def gradient(weights: EstimatorWeights, x, theta, loss="absolute", tau=None, scale=None):
    """Mean batch loss and its exact gradient with respect to the flat parameters.

    ``x`` is ``(n_sets, m, G, G, w)`` and ``theta`` is ``(n_sets, p)``. The
    absolute-loss subgradient at zero error is taken as zero.
    """
    if loss not in _LOSSES:
        raise InvalidArgument(f"loss must be one of {_LOSSES}, got {loss!r}")
    arch = weights.arch
    x = _as_batch(x, arch)
    y, cache, (n_sets, m, s_shape) = _run(weights, x, tau, keep=True)
    dt = weights.dtype
    theta = np.asarray(theta, dtype=np.float64).reshape(n_sets, arch.p)
    s = np.ones(arch.p) if scale is None else np.asarray(scale, float)
    # theta_hat = c + a * y; error measured as (theta_hat - theta) / s
    a = weights.out_scale / s
    e = (weights.out_center + weights.out_scale * y.astype(np.float64) - theta) / s
    if loss == "absolute":
        value = np.abs(e).sum(axis=1).mean()
        dy = np.sign(e) * a / n_sets
    else:
        value = (e * e).sum(axis=1).mean()
        dy = 2.0 * e * a / n_sets
    g = np.zeros_like(weights.params)
    gl = _views(arch, g)
    n_conv = len(arch.conv)
    delta = dy.astype(dt)
    for li in range(len(weights.layers) - 1, n_conv - 1, -1):
        _, W, _ = weights.layers[li]
        h_in, _, mask = cache[li]
        if mask is not None:
            delta = delta * mask
        gl[li][2][...] = delta.sum(axis=0)
        gl[li][1][...] = h_in.T @ delta
        delta = delta @ W.T
        _check_finite(delta, li)
    if arch.tau_input:
        delta = delta[:, :-1]
    # mean pooling backward
    dS = np.repeat(delta / dt.type(m), m, axis=0).reshape(s_shape)
    ho, wo, c = arch.conv_output_shape
    delta = dS.reshape(n_sets * m, ho, wo, c)
    for li in range(n_conv - 1, -1, -1):
        _, W, _ = weights.layers[li]
        cols, in_shape, mask = cache[li]
        delta = delta * mask
        F = W.shape[-1]
        d2 = delta.reshape(-1, F)
        gl[li][2][...] = d2.sum(axis=0)
        gl[li][1][...] = (cols.reshape(-1, cols.shape[-1]).T @ d2).reshape(W.shape)
        if li > 0:
            dcols = (d2 @ W.reshape(-1, F).T).reshape(cols.shape)
            delta = _col2im(dcols, W.shape[0], in_shape[1], in_shape[2], in_shape[3])
            _check_finite(delta, li)
    return float(value), g


class Adam:
    """Adaptive-moment optimizer acting in place on a flat parameter vector."""

    def __init__(self, n, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray):
        self.t += 1
        g = grad.astype(np.float64)
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mh = self.m / (1 - self.beta1**self.t)
        vh = self.v / (1 - self.beta2**self.t)
        params -= (self.lr * mh / (np.sqrt(vh) + self.eps)).astype(params.dtype)
