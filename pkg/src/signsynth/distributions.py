"""Scalar distributions used by every config section.

All distributions sample by inverse CDF from exactly one uniform draw. That
keeps the number of draws per field constant, so pinning one field to a
constant never shifts the draws of the fields that follow it in a stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special


class DistributionError(ValueError):
    pass


@dataclass(frozen=True)
class Const:
    value: float

    def ppf(self, u: float) -> float:
        return float(self.value)

    def cdf(self, x):
        return np.where(np.asarray(x) >= self.value, 1.0, 0.0)

    @property
    def mean(self) -> float:
        return float(self.value)

    @property
    def std(self) -> float:
        return 0.0

    @property
    def support(self) -> tuple[float, float]:
        return (float(self.value), float(self.value))

    def validate(self, name: str) -> None:
        if not math.isfinite(self.value):
            raise DistributionError(f"{name}: constant must be finite")


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def ppf(self, u: float) -> float:
        return self.low + u * (self.high - self.low)

    def cdf(self, x):
        if self.high == self.low:
            return np.where(np.asarray(x) >= self.low, 1.0, 0.0)
        return np.clip((np.asarray(x, dtype=float) - self.low) / (self.high - self.low), 0.0, 1.0)

    @property
    def mean(self) -> float:
        return 0.5 * (self.low + self.high)

    @property
    def std(self) -> float:
        return (self.high - self.low) / math.sqrt(12.0)

    @property
    def support(self) -> tuple[float, float]:
        return (self.low, self.high)

    def validate(self, name: str) -> None:
        if not (math.isfinite(self.low) and math.isfinite(self.high)) or self.high < self.low:
            raise DistributionError(f"{name}: uniform needs finite low <= high, got [{self.low}, {self.high}]")


@dataclass(frozen=True)
class LogUniform:
    low: float
    high: float

    def ppf(self, u: float) -> float:
        a, b = math.log(self.low), math.log(self.high)
        return math.exp(a + u * (b - a))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.high == self.low:
            return np.where(x >= self.low, 1.0, 0.0)
        a, b = math.log(self.low), math.log(self.high)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (np.log(np.maximum(x, 1e-300)) - a) / (b - a)
        return np.clip(t, 0.0, 1.0)

    @property
    def mean(self) -> float:
        if self.high == self.low:
            return self.low
        return (self.high - self.low) / math.log(self.high / self.low)

    @property
    def std(self) -> float:
        if self.high == self.low:
            return 0.0
        second = (self.high**2 - self.low**2) / (2.0 * math.log(self.high / self.low))
        return math.sqrt(max(second - self.mean**2, 0.0))

    @property
    def support(self) -> tuple[float, float]:
        return (self.low, self.high)

    def validate(self, name: str) -> None:
        if not (0.0 < self.low <= self.high < math.inf):
            raise DistributionError(f"{name}: log-uniform needs 0 < low <= high, got [{self.low}, {self.high}]")


@dataclass(frozen=True)
class Normal:
    """Normal distribution, optionally truncated to ``[low, high]``."""

    mean_: float
    std_: float
    low: float = -math.inf
    high: float = math.inf

    def _bounds(self) -> tuple[float, float]:
        a = special.ndtr((self.low - self.mean_) / self.std_)
        b = special.ndtr((self.high - self.mean_) / self.std_)
        return float(a), float(b)

    def ppf(self, u: float) -> float:
        if self.std_ == 0.0:
            return float(self.mean_)
        a, b = self._bounds()
        p = min(max(a + u * (b - a), 1e-300), 1.0 - 1e-16)
        x = self.mean_ + self.std_ * float(special.ndtri(p))
        return min(max(x, self.low), self.high)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.std_ == 0.0:
            return np.where(x >= self.mean_, 1.0, 0.0)
        a, b = self._bounds()
        c = special.ndtr((x - self.mean_) / self.std_)
        return np.clip((c - a) / (b - a), 0.0, 1.0)

    @property
    def mean(self) -> float:
        if self.std_ == 0.0:
            return self.mean_
        alpha = (self.low - self.mean_) / self.std_
        beta = (self.high - self.mean_) / self.std_
        z = special.ndtr(beta) - special.ndtr(alpha)
        phi = lambda t: 0.0 if math.isinf(t) else math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)  # noqa: E731
        return self.mean_ + self.std_ * (phi(alpha) - phi(beta)) / z

    @property
    def std(self) -> float:
        if self.std_ == 0.0:
            return 0.0
        alpha = (self.low - self.mean_) / self.std_
        beta = (self.high - self.mean_) / self.std_
        z = special.ndtr(beta) - special.ndtr(alpha)
        phi = lambda t: 0.0 if math.isinf(t) else math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)  # noqa: E731
        ta = 0.0 if math.isinf(alpha) else alpha * phi(alpha)
        tb = 0.0 if math.isinf(beta) else beta * phi(beta)
        var = 1.0 + (ta - tb) / z - ((phi(alpha) - phi(beta)) / z) ** 2
        return self.std_ * math.sqrt(max(var, 0.0))

    @property
    def support(self) -> tuple[float, float]:
        if self.std_ == 0.0:
            return (self.mean_, self.mean_)
        return (self.low, self.high)

    def validate(self, name: str) -> None:
        if not math.isfinite(self.mean_) or not (self.std_ >= 0.0 and math.isfinite(self.std_)):
            raise DistributionError(f"{name}: normal needs finite mean and std >= 0")
        if not self.low < self.high:
            raise DistributionError(f"{name}: truncation needs low < high")
        if self.std_ > 0 and not (self.low <= self.mean_ + 8 * self.std_ and self.high >= self.mean_ - 8 * self.std_):
            raise DistributionError(f"{name}: truncation interval carries no probability mass")
        if self.std_ == 0 and not (self.low <= self.mean_ <= self.high):
            raise DistributionError(f"{name}: point mass outside truncation interval")


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def ppf(self, u: float) -> float:
        return float(special.betaincinv(self.a, self.b, u))

    def cdf(self, x):
        return special.betainc(self.a, self.b, np.clip(np.asarray(x, dtype=float), 0.0, 1.0))

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    @property
    def std(self) -> float:
        s = self.a + self.b
        return math.sqrt(self.a * self.b / (s * s * (s + 1.0)))

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, 1.0)

    def validate(self, name: str) -> None:
        if not (self.a > 0 and self.b > 0):
            raise DistributionError(f"{name}: beta needs a > 0 and b > 0")


@dataclass(frozen=True)
class IntUniform:
    """Integers ``low..high`` inclusive, equally likely."""

    low: int
    high: int

    def ppf(self, u: float) -> float:
        k = self.low + int(math.floor(u * (self.high - self.low + 1)))
        return float(min(k, self.high))

    def cdf(self, x):
        x = np.floor(np.asarray(x, dtype=float))
        return np.clip((x - self.low + 1) / (self.high - self.low + 1), 0.0, 1.0)

    @property
    def mean(self) -> float:
        return 0.5 * (self.low + self.high)

    @property
    def std(self) -> float:
        n = self.high - self.low + 1
        return math.sqrt((n * n - 1) / 12.0)

    @property
    def support(self) -> tuple[float, float]:
        return (float(self.low), float(self.high))

    def validate(self, name: str) -> None:
        if self.high < self.low:
            raise DistributionError(f"{name}: integer range needs low <= high")


Dist = Const | Uniform | LogUniform | Normal | Beta | IntUniform


def draw(dist: Dist, rng: np.random.Generator) -> float:
    """Sample ``dist`` consuming exactly one uniform from ``rng``."""
    return dist.ppf(float(rng.random()))


def draw_int(dist: Dist, rng: np.random.Generator) -> int:
    return int(round(draw(dist, rng)))


def to_dict(dist: Dist) -> dict | float:
    # floats throughout so that a saved and reloaded config hashes identically
    f = float
    if isinstance(dist, Const):
        return {"dist": "const", "value": f(dist.value)}
    if isinstance(dist, Uniform):
        return {"dist": "uniform", "low": f(dist.low), "high": f(dist.high)}
    if isinstance(dist, LogUniform):
        return {"dist": "loguniform", "low": f(dist.low), "high": f(dist.high)}
    if isinstance(dist, Normal):
        out = {"dist": "normal", "mean": f(dist.mean_), "std": f(dist.std_)}
        if math.isfinite(dist.low):
            out["low"] = f(dist.low)
        if math.isfinite(dist.high):
            out["high"] = f(dist.high)
        return out
    if isinstance(dist, Beta):
        return {"dist": "beta", "a": f(dist.a), "b": f(dist.b)}
    if isinstance(dist, IntUniform):
        return {"dist": "intuniform", "low": int(dist.low), "high": int(dist.high)}
    raise TypeError(f"not a distribution: {dist!r}")


def from_dict(obj, name: str = "distribution") -> Dist:
    """Parse a distribution; a bare number is a point mass."""
    if isinstance(obj, (Const, Uniform, LogUniform, Normal, Beta, IntUniform)):
        return obj
    if isinstance(obj, bool):
        raise DistributionError(f"{name}: booleans are not distributions")
    if isinstance(obj, (int, float)):
        return Const(float(obj))
    if not isinstance(obj, dict) or "dist" not in obj:
        raise DistributionError(f"{name}: expected a number or an object with a 'dist' key, got {obj!r}")
    kind = obj["dist"]
    keys = set(obj) - {"dist"}
    try:
        if kind == "const":
            d = Const(float(obj["value"]))
            allowed = {"value"}
        elif kind == "uniform":
            d = Uniform(float(obj["low"]), float(obj["high"]))
            allowed = {"low", "high"}
        elif kind == "loguniform":
            d = LogUniform(float(obj["low"]), float(obj["high"]))
            allowed = {"low", "high"}
        elif kind == "normal":
            d = Normal(
                float(obj["mean"]),
                float(obj["std"]),
                float(obj.get("low", -math.inf)),
                float(obj.get("high", math.inf)),
            )
            allowed = {"mean", "std", "low", "high"}
        elif kind == "beta":
            d = Beta(float(obj["a"]), float(obj["b"]))
            allowed = {"a", "b"}
        elif kind == "intuniform":
            d = IntUniform(int(obj["low"]), int(obj["high"]))
            allowed = {"low", "high"}
        else:
            raise DistributionError(f"{name}: unknown distribution kind {kind!r}")
    except KeyError as exc:
        raise DistributionError(f"{name}: missing parameter {exc.args[0]!r} for {kind}") from None
    extra = keys - allowed
    if extra:
        raise DistributionError(f"{name}: unexpected keys {sorted(extra)} for {kind}")
    d.validate(name)
    return d


def is_distribution(obj) -> bool:
    return isinstance(obj, (Const, Uniform, LogUniform, Normal, Beta, IntUniform))
