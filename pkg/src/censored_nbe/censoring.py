"""Censoring thresholds and the two-channel network input.

Values at or below the marginal ``tau``-quantile of the working margin are
censored: they are replaced by a constant ``c*`` and flagged 0 in the
indicator channel, while exceedances keep their value and are flagged 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgument, InvalidData
from .margins import MarginTag, as_margin
from .processes import ReplicateSet, canonical_family

__all__ = [
    "CensoringScheme",
    "CensoredTensor",
    "C_POLICIES",
    "PRESETS",
    "preset_scheme",
    "censoring_threshold",
    "censor_encode",
    "censor_decode",
    "censoring_stats",
    "encode_array",
]

C_POLICIES = ("zero", "plus_quantile", "minus_quantile")


@dataclass(frozen=True)
class CensoringScheme:
    tau: float
    margin: MarginTag = MarginTag.EXPONENTIAL
    c_policy: str = "zero"

    def __post_init__(self):
        object.__setattr__(self, "margin", as_margin(self.margin))
        if not 0 <= self.tau < 1:
            raise InvalidArgument(f"censoring level tau must lie in [0, 1), got {self.tau}")
        if self.c_policy not in C_POLICIES:
            raise InvalidArgument(f"c_policy must be one of {C_POLICIES}, got {self.c_policy!r}")

    @property
    def threshold(self) -> float:
        return float(self.margin.quantile(self.tau))

    @property
    def constant(self) -> float:
        """The substitute value ``c*`` for censored entries."""
        if self.c_policy == "zero":
            return 0.0
        q = self.threshold
        return q if self.c_policy == "plus_quantile" else -q

    def with_tau(self, tau) -> "CensoringScheme":
        return CensoringScheme(float(tau), self.margin, self.c_policy)


# Per-family defaults: the working margin and constant that performed best.
PRESETS = {
    "gp": (MarginTag.EXPONENTIAL, "zero"),
    "imsp_brown_resnick": (MarginTag.EXPONENTIAL, "zero"),
    "msp_brown_resnick": (MarginTag.UNIT_FRECHET, "zero"),
    "r_pareto_max": (MarginTag.UNIT_PARETO, "plus_quantile"),
    "hw_mixture": (MarginTag.UNIT_PARETO, "zero"),
}


def preset_scheme(family, tau) -> CensoringScheme:
    margin, policy = PRESETS[canonical_family(family)]
    return CensoringScheme(tau, margin, policy)


@dataclass
class CensoredTensor:
    """Encoded values and indicator, both ``(m, G, G)``, with the censoring level."""

    values: np.ndarray
    indicator: np.ndarray
    tau: float
    scheme: CensoringScheme

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def side_length(self) -> int:
        return self.values.shape[-1]

    def image(self, channels: int = 2, dtype=np.float32) -> np.ndarray:
        """Network input, ``(m, G, G, channels)`` (channels-last)."""
        if channels == 1:
            return self.values[..., None].astype(dtype)
        if channels == 2:
            return np.stack([self.values, self.indicator], axis=-1).astype(dtype)
        raise InvalidArgument(f"channels must be 1 or 2, got {channels}")

    def check_invariants(self) -> bool:
        ind = self.indicator
        if not np.all((ind == 0) | (ind == 1)):
            return False
        cens = ind == 0
        c, thr = self.scheme.constant, self.scheme.threshold
        return bool(np.all(self.values[cens] == c) and np.all(self.values[~cens] > thr))

    def subset(self, idx) -> "CensoredTensor":
        idx = np.asarray(idx)
        return CensoredTensor(self.values[idx], self.indicator[idx], self.tau, self.scheme)


def censoring_threshold(scheme: CensoringScheme) -> float:
    """``F*^{-1}(tau)`` on the working margin."""
    if not 0 <= scheme.tau < 1:
        raise InvalidArgument(f"tau must lie in [0, 1), got {scheme.tau}")
    return scheme.threshold


def encode_array(values: np.ndarray, scheme: CensoringScheme):
    """Censor a raw array of working-margin values; returns ``(encoded, indicator)``."""
    thr = scheme.threshold
    ind = values > thr
    enc = np.where(ind, values, scheme.constant)
    return enc, ind.astype(np.uint8)


def censor_encode(rset: ReplicateSet, scheme: CensoringScheme) -> CensoredTensor:
    """Encode a replicate set already on ``scheme.margin``.

    Apply ``marginal_transform`` first if the set lives on other margins.
    """
    if rset.margin is not scheme.margin:
        raise InvalidData(
            f"replicate margins are {rset.margin.value}, scheme expects {scheme.margin.value}; "
            "apply marginal_transform first"
        )
    if not np.all(np.isfinite(rset.data)):
        raise InvalidData("replicate set contains non-finite values")
    enc, ind = encode_array(rset.data, scheme)
    G = rset.grid.side_length
    return CensoredTensor(enc.reshape(-1, G, G), ind.reshape(-1, G, G), scheme.tau, scheme)


def censor_decode(tensor: CensoredTensor, spec) -> ReplicateSet:
    """Value channel back as a replicate set (censored entries stay at ``c*``)."""
    return ReplicateSet(spec, tensor.values.reshape(tensor.m, -1), tensor.scheme.margin)


@dataclass(frozen=True)
class CensoringSummary:
    uncensored_counts: np.ndarray
    fraction: float


def censoring_stats(tensor: CensoredTensor) -> CensoringSummary:
    counts = tensor.indicator.reshape(tensor.m, -1).sum(axis=1).astype(int)
    total = tensor.indicator.size
    return CensoringSummary(counts, float(counts.sum() / total) if total else 0.0)
