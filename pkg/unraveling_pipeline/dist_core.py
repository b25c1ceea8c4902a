"""
Continuous type distributions and seeded order-statistic sampling.

Both supported families are stored as a piecewise-linear CDF through a list of
knots (x, p); `uniform` is the two-knot special case. That keeps `cdf`,
`cdf_integral` and `quantile` closed form and vectorised over numpy arrays,
which the stability engine relies on when it precomputes integrals at every
realised type.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np

from unraveling_pipeline.errors import ConfigurationError, DomainError

LOGGER = logging.getLogger("TypeDistribution")

ArrayLike = Union[float, np.ndarray]

FAMILIES = ("uniform", "piecewise_linear_cdf")


def _scalar_or_array(value: np.ndarray, like: Any) -> ArrayLike:
    if np.ndim(like) == 0:
        return float(value)
    return value


@dataclass(frozen=True)
class TypeDistribution:
    """
    A continuous type law on [lower, upper].

    `knots` is a tuple of (x, p) pairs with x strictly increasing, p strictly
    increasing from 0 to 1 (strictly, so that the density is positive on the
    interior of the support).
    """

    family: str
    knots: Tuple[Tuple[float, float], ...]
    _xs: np.ndarray = field(init=False, repr=False, compare=False)
    _ps: np.ndarray = field(init=False, repr=False, compare=False)
    _area: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigurationError(f"family: unknown distribution family {self.family!r}")
        if len(self.knots) < 2:
            raise ConfigurationError("knots: at least two knots are required")
        try:
            xs = np.array([float(x) for x, _ in self.knots])
            ps = np.array([float(p) for _, p in self.knots])
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"knots: every knot must be a pair of reals ({exc})") from exc
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ps))):
            raise ConfigurationError("knots: values must be finite")
        if np.any(np.diff(xs) <= 0):
            raise ConfigurationError("knots: x values must be strictly increasing")
        if abs(ps[0]) > 1e-12 or abs(ps[-1] - 1.0) > 1e-12:
            raise ConfigurationError("knots: CDF must start at 0 and end at 1")
        if np.any(np.diff(ps) <= 0):
            raise ConfigurationError("knots: CDF must be strictly increasing (positive density)")
        ps[0], ps[-1] = 0.0, 1.0
        # ∫ CDF over each segment is a trapezoid
        segment_area = np.diff(xs) * (ps[:-1] + ps[1:]) / 2.0
        area = np.concatenate([[0.0], np.cumsum(segment_area)])
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_ps", ps)
        object.__setattr__(self, "_area", area)

    # -------- constructors -------- #
    @classmethod
    def uniform(cls, lower: float = 0.0, upper: float = 1.0) -> "TypeDistribution":
        if not lower < upper:
            raise ConfigurationError("upper: must be greater than lower")
        return cls("uniform", ((float(lower), 0.0), (float(upper), 1.0)))

    @classmethod
    def piecewise_linear(cls, knots: Sequence[Sequence[float]]) -> "TypeDistribution":
        return cls("piecewise_linear_cdf", tuple((float(x), float(p)) for x, p in knots))

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "TypeDistribution":
        family = payload.get("family")
        if family == "uniform":
            return cls.uniform(payload.get("lower", 0.0), payload.get("upper", 1.0))
        if family == "piecewise_linear_cdf":
            if "knots" not in payload:
                raise ConfigurationError("knots: required for piecewise_linear_cdf")
            return cls.piecewise_linear(payload["knots"])
        raise ConfigurationError(f"family: unknown distribution family {family!r}")

    def to_dict(self) -> Dict[str, Any]:
        if self.family == "uniform":
            return {"family": "uniform", "lower": self.lower, "upper": self.upper}
        return {"family": self.family, "knots": [list(k) for k in self.knots]}

    # -------- support -------- #
    @property
    def lower(self) -> float:
        return float(self._xs[0])

    @property
    def upper(self) -> float:
        return float(self._xs[-1])

    @property
    def support(self) -> Tuple[float, float]:
        return self.lower, self.upper

    def contains(self, t: ArrayLike) -> bool:
        t = np.asarray(t, dtype=float)
        return bool(np.all((t >= self.lower) & (t <= self.upper)))

    # -------- law -------- #
    def cdf(self, t: ArrayLike) -> ArrayLike:
        """F(t); values outside the support clamp to 0 / 1."""
        arr = np.asarray(t, dtype=float)
        return _scalar_or_array(np.interp(arr, self._xs, self._ps), t)

    def density(self, t: ArrayLike) -> ArrayLike:
        arr = np.asarray(t, dtype=float)
        slopes = np.diff(self._ps) / np.diff(self._xs)
        idx = np.clip(np.searchsorted(self._xs, arr, side="right") - 1, 0, len(slopes) - 1)
        inside = (arr >= self.lower) & (arr <= self.upper)
        return _scalar_or_array(np.where(inside, slopes[idx], 0.0), t)

    def cdf_integral(self, t: ArrayLike) -> ArrayLike:
        """∫_{lower}^{t} F(x) dx, with t clamped into the support."""
        arr = np.clip(np.asarray(t, dtype=float), self.lower, self.upper)
        idx = np.clip(np.searchsorted(self._xs, arr, side="right") - 1, 0, len(self._xs) - 2)
        at_t = np.interp(arr, self._xs, self._ps)
        value = self._area[idx] + (arr - self._xs[idx]) * (self._ps[idx] + at_t) / 2.0
        return _scalar_or_array(value, t)

    def quantile(self, p: ArrayLike) -> ArrayLike:
        """Smallest t with F(t) >= p."""
        arr = np.asarray(p, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any((arr < 0.0) | (arr > 1.0)):
            raise DomainError("p: probability must lie in [0, 1]")
        return _scalar_or_array(np.interp(arr, self._ps, self._xs), p)


@dataclass(frozen=True)
class SeededSampler:
    """
    Counter-based stream: (master_seed, stream_index) names one independent
    numpy PCG64 stream through SeedSequence(master_seed, spawn_key=(stream_index,)).
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self) -> None:
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigurationError("seed: master seed must be a non-negative 64-bit integer")
        if int(self.stream_index) < 0:
            raise ConfigurationError("stream_index: must be non-negative")

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_index),))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed_sequence())

    def stream(self, index: int) -> "SeededSampler":
        return SeededSampler(self.master_seed, index)

    def block_generator(self, block: int) -> np.random.Generator:
        """Sub-stream `block` of this stream, for work split into fixed-size blocks."""
        key = (int(self.stream_index), int(block))
        return np.random.default_rng(np.random.SeedSequence(int(self.master_seed), spawn_key=key))


# ---------------------------------------------------------------------------#
#                       MODULE OPERATIONS                                     #
# ---------------------------------------------------------------------------#
def cdf(d: TypeDistribution, t: ArrayLike) -> ArrayLike:
    return d.cdf(t)


def cdf_integral(d: TypeDistribution, t: ArrayLike) -> ArrayLike:
    return d.cdf_integral(t)


def quantile(d: TypeDistribution, p: ArrayLike) -> ArrayLike:
    return d.quantile(p)


def draw_sorted(d: TypeDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws from `d`, ascending, by inverse transform of sorted uniforms."""
    if n < 0:
        raise DomainError("n: sample size must be non-negative")
    u = np.sort(rng.random(n))
    return np.asarray(d.quantile(u), dtype=float)


def sample_sorted(d: TypeDistribution, n: int, s: SeededSampler) -> np.ndarray:
    return draw_sorted(d, n, s.generator())
