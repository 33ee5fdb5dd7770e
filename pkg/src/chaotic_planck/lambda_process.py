"""Log-normal law of the fluctuating action scale |lambda| and seeded path sampling.

Random numbers come from counter-addressed Philox streams keyed on
``(seed, index)``.  Step ``k`` of stream ``index`` always consumes the
``k``-th 64-bit output of that stream, so a path can be generated in pieces,
in any order, by any number of workers, and still be bit-identical.

Only |lambda| is sampled.  The distribution of the signed parameter is
symmetric, ``P(lambda) = P(-lambda)``, and the evolution depends on the
magnitude alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtri

from .errors import NonPositiveLambda, ValidationError, ZeroSigma

_TWO_M53 = 2.0 ** -53


@dataclass(frozen=True)
class LambdaParams:
    """Parameters of ``ln|lambda| ~ Normal(mu, sigma^2)`` held for ``tau_lambda``.

    ``ar1`` is an optional lag-1 correlation of ``ln|lambda|`` between
    consecutive intervals; 0 gives the independent, identically distributed
    process.
    """

    mu: float = 0.0
    sigma: float = 0.0
    tau_lambda: float = 1.0
    ar1: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValidationError(f"mu must be finite, got {self.mu}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")
        if not (self.tau_lambda > 0 and math.isfinite(self.tau_lambda)):
            raise ValidationError(f"tau_lambda must be > 0, got {self.tau_lambda}")
        if not -1.0 < self.ar1 < 1.0:
            raise ValidationError(f"ar1 must lie in (-1, 1), got {self.ar1}")

    @property
    def hbar(self) -> float:
        return math.exp(self.mu)

    @classmethod
    def from_hbar(cls, hbar: float = 1.0, **kw) -> "LambdaParams":
        if hbar <= 0:
            raise NonPositiveLambda(f"hbar must be positive, got {hbar}")
        return cls(mu=math.log(hbar), **kw)


@dataclass(frozen=True, eq=False)
class LambdaPath:
    values: np.ndarray
    tau_lambda: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 1 or v.size < 1:
            raise ValidationError("a lambda path needs at least one value")
        if not np.all(v > 0):
            raise NonPositiveLambda("lambda path values must be strictly positive")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    @property
    def duration(self) -> float:
        return len(self) * self.tau_lambda

    def concat(self, other: "LambdaPath") -> "LambdaPath":
        return LambdaPath(np.concatenate([self.values, other.values]), self.tau_lambda)

    @classmethod
    def constant(cls, value: float, n: int, tau_lambda: float) -> "LambdaPath":
        return cls(np.full(n, float(value)), tau_lambda)


def lambda_pdf(p: LambdaParams, lam):
    """One-sided log-normal density of |lambda| on (0, inf)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise NonPositiveLambda("lambda must be > 0")
    if p.sigma == 0:
        raise ZeroSigma("sigma = 0 gives a delta at exp(mu); use the exact quantum mode")
    s2 = p.sigma ** 2
    out = np.exp(-((np.log(lam) - p.mu) ** 2) / (2 * s2)) / (lam * math.sqrt(2 * math.pi * s2))
    return out if out.ndim else float(out)


def lambda_mode(p: LambdaParams) -> float:
    return math.exp(p.mu - p.sigma ** 2)


def sample_lambda(p: LambdaParams, rng: np.random.Generator) -> float:
    """Single draw ``exp(mu + sigma z)``; returns ``exp(mu)`` exactly when sigma is 0."""
    if p.sigma == 0:
        return p.hbar
    return math.exp(p.mu + p.sigma * rng.standard_normal())


class LambdaStream:
    """Counter-addressable source of standard normals for one path index."""

    def __init__(self, seed: int, index: int = 0):
        if seed < 0 or index < 0:
            raise ValidationError("seed and index must be non-negative")
        self.seed = int(seed)
        self.index = int(index)

    def normals(self, start: int, n: int) -> np.ndarray:
        return stream_normals(self.seed, self.index, start, n)

    def generator(self) -> np.random.Generator:
        """An ordinary numpy Generator on this stream's key, for non-path draws."""
        return np.random.Generator(np.random.Philox(key=[self.seed, self.index]))


def stream_normals(seed: int, index: int, start: int, n: int) -> np.ndarray:
    bg = np.random.Philox(key=[seed, index])
    block, skip = divmod(start, 4)
    if block:
        bg.advance(block)
    raw = bg.random_raw(skip + n)[skip:]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53
    return ndtri(u)


def _correlate(z: np.ndarray, ar1: float) -> np.ndarray:
    # stationary AR(1) along the last axis with unit marginal variance
    if ar1 == 0.0:
        return z
    z = np.array(z, dtype=float, copy=True)
    first = z[..., :1].copy()
    z *= math.sqrt(1.0 - ar1 * ar1)
    z[..., :1] = first
    return lfilter([1.0], [1.0, -ar1], z, axis=-1)


def log_lambda_block(p: LambdaParams, seed: int, indices, n: int, start: int = 0) -> np.ndarray:
    """``ln|lambda|`` for steps ``start .. start+n-1`` of each stream index, shape (len(indices), n)."""
    indices = np.asarray(indices, dtype=np.int64)
    if p.sigma == 0:
        return np.full((indices.size, n), p.mu)
    if p.ar1 == 0.0:
        z = np.stack([stream_normals(seed, int(i), start, n) for i in indices]) if indices.size else np.empty((0, n))
    else:
        z = np.stack([stream_normals(seed, int(i), 0, start + n) for i in indices])
        z = _correlate(z, p.ar1)[:, start:]
    return p.mu + p.sigma * z


def sample_path(p: LambdaParams, n: int, stream: LambdaStream, start: int = 0) -> LambdaPath:
    """Steps ``start .. start+n-1`` of the lambda path carried by ``stream``."""
    if n < 1:
        raise ValidationError(f"path needs n >= 1 steps, got {n}")
    if p.sigma == 0:
        return LambdaPath.constant(p.hbar, n, p.tau_lambda)
    x = log_lambda_block(p, stream.seed, [stream.index], n, start)[0]
    return LambdaPath(np.exp(x), p.tau_lambda)
