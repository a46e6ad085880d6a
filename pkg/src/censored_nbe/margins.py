"""Closed-form standard margins: Unif(0,1), Exp(1), unit Pareto and unit Frechet."""

from __future__ import annotations

from enum import Enum

import numpy as np

from .exceptions import InvalidArgument, InvalidData

__all__ = ["MarginTag", "as_margin", "transform_values"]


class MarginTag(str, Enum):
    UNIFORM = "uniform"
    EXPONENTIAL = "exponential"
    UNIT_PARETO = "unit_pareto"
    UNIT_FRECHET = "unit_frechet"

    @property
    def code(self) -> int:
        return _CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "MarginTag":
        for tag, c in _CODES.items():
            if c == code:
                return tag
        raise InvalidArgument(f"unknown margin code {code}")

    @property
    def lower(self) -> float:
        return {"uniform": 0.0, "exponential": 0.0, "unit_pareto": 1.0, "unit_frechet": 0.0}[
            self.value
        ]

    @property
    def upper(self) -> float:
        return 1.0 if self is MarginTag.UNIFORM else np.inf

    def in_support(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return (z >= self.lower) & (z <= self.upper)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            if self is MarginTag.UNIFORM:
                out = np.clip(z, 0.0, 1.0)
            elif self is MarginTag.EXPONENTIAL:
                out = np.where(z > 0, -np.expm1(-np.maximum(z, 0.0)), 0.0)
            elif self is MarginTag.UNIT_PARETO:
                out = np.where(z > 1, 1.0 - 1.0 / np.maximum(z, 1.0), 0.0)
            else:
                out = np.where(z > 0, np.exp(-1.0 / np.maximum(z, 1e-300)), 0.0)
        return out

    def sf(self, z):
        """Survival function, computed directly for tail accuracy."""
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            if self is MarginTag.UNIFORM:
                out = 1.0 - np.clip(z, 0.0, 1.0)
            elif self is MarginTag.EXPONENTIAL:
                out = np.exp(-np.maximum(z, 0.0))
            elif self is MarginTag.UNIT_PARETO:
                out = 1.0 / np.maximum(z, 1.0)
            else:
                out = np.where(z > 0, -np.expm1(-1.0 / np.maximum(z, 1e-300)), 1.0)
        return out

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            if self is MarginTag.UNIFORM:
                return u.copy() if u.ndim else float(u)
            if self is MarginTag.EXPONENTIAL:
                return -np.log1p(-u)
            if self is MarginTag.UNIT_PARETO:
                return 1.0 / (1.0 - u)
            return -1.0 / np.log(u)

    def quantile_from_sf(self, s):
        """Quantile at ``1 - s``; exact in the upper tail."""
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            if self is MarginTag.UNIFORM:
                return 1.0 - s
            if self is MarginTag.EXPONENTIAL:
                return -np.log(s)
            if self is MarginTag.UNIT_PARETO:
                return 1.0 / s
            return -1.0 / np.log1p(-s)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        inside = self.in_support(z)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if self is MarginTag.UNIFORM:
                out = np.ones_like(z)
            elif self is MarginTag.EXPONENTIAL:
                out = np.exp(-z)
            elif self is MarginTag.UNIT_PARETO:
                out = 1.0 / z**2
            else:
                out = np.exp(-1.0 / z) / z**2
        return np.where(inside, np.nan_to_num(out, nan=0.0), 0.0)


_CODES = {
    MarginTag.UNIFORM: 0,
    MarginTag.EXPONENTIAL: 1,
    MarginTag.UNIT_PARETO: 2,
    MarginTag.UNIT_FRECHET: 3,
}

_ALIASES = {
    "unif": MarginTag.UNIFORM,
    "exp": MarginTag.EXPONENTIAL,
    "pareto": MarginTag.UNIT_PARETO,
    "frechet": MarginTag.UNIT_FRECHET,
}


def as_margin(tag) -> MarginTag:
    if isinstance(tag, MarginTag):
        return tag
    key = str(tag).lower()
    if key in _ALIASES:
        return _ALIASES[key]
    try:
        return MarginTag(key)
    except ValueError:
        raise InvalidArgument(f"unknown margin {tag!r}") from None


def transform_values(z, source, target) -> np.ndarray:
    """Probability-integral transform ``F_target^{-1}(F_source(z))``, elementwise."""
    source, target = as_margin(source), as_margin(target)
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z) & source.in_support(z)):
        raise InvalidData(f"values outside the {source.value} support")
    if source is target:
        return z.copy()
    if target is MarginTag.UNIFORM:
        return source.cdf(z)
    return target.quantile_from_sf(source.sf(z))
