"""
decay_kernel.py — clamped decay functions over visit age

A decay is defined over age a = (t_now - t) / 60 in minutes, so δ(0) = 1 at
"now" and weights fall off into the past. Built-in kinds integrate in closed
form; tabulated decays use scipy quadrature and require an explicit horizon
beyond which δ = 0.

Spec string grammar (CLI, REST, config)
---------------------------------------
  exp:<rate>          rate per minute > 0          δ(a) = e^(-rate·a)
  halflife:<minutes>  same as exp:<ln 2 / minutes>
  linear:<horizon>    minutes > 0                  δ(a) = 1 - a/horizon
  window:<width>      minutes > 0                  δ(a) = 1 for a ≤ width
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from modules.errors import DivergentDecayError, InvalidDecayError

EXPONENTIAL = "exponential"
LINEAR = "linear"
WINDOW = "window"
TABULATED = "tabulated"

_QUAD_ABS_TOL = 1e-9


def age_minutes(now: int, t: int) -> float:
    """Convert an epoch second to an age in minutes relative to `now`."""
    return (now - t) / 60.0


def _positive(value, label: str) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise InvalidDecayError(f"{label} must be a number, got {value!r}.") from None
    if math.isnan(value) or value < 0:
        raise InvalidDecayError(f"{label} must be > 0, got {value}.")
    if value == 0:
        # rate 0 is a decay identically 1; width/horizon 0 has zero area.
        if label == "rate":
            raise DivergentDecayError("Decay rate 0 never decays; its normalisation diverges.")
        raise InvalidDecayError(f"{label} must be > 0.")
    if math.isinf(value):
        if label == "rate":
            raise InvalidDecayError("Decay rate must be finite.")
        raise DivergentDecayError(f"Unbounded {label} makes the normalisation diverge.")
    return value


@dataclass(frozen=True)
class DecaySpec:
    kind: str
    param: float = 0.0
    ages: Optional[tuple] = None
    values: Optional[tuple] = None

    # -- constructors --------------------------------------------------------

    @classmethod
    def exponential(cls, rate: float) -> "DecaySpec":
        return cls(EXPONENTIAL, _positive(rate, "rate"))

    @classmethod
    def half_life(cls, minutes: float) -> "DecaySpec":
        return cls.exponential(math.log(2) / _positive(minutes, "half-life"))

    @classmethod
    def linear(cls, horizon: float) -> "DecaySpec":
        return cls(LINEAR, _positive(horizon, "horizon"))

    @classmethod
    def window(cls, width: float) -> "DecaySpec":
        return cls(WINDOW, _positive(width, "width"))

    @classmethod
    def tabulated(cls, ages, values, horizon: Optional[float] = None) -> "DecaySpec":
        """
        Raw δ′ sampled at `ages` (minutes, increasing) and linearly
        interpolated. Values must be strictly decreasing; they are clamped
        into [0, 1] on evaluation.
        """
        if horizon is None:
            raise DivergentDecayError("A tabulated decay needs an explicit horizon.")
        horizon = _positive(horizon, "horizon")
        ages_arr = np.asarray(ages, dtype=float)
        values_arr = np.asarray(values, dtype=float)
        if ages_arr.ndim != 1 or ages_arr.size < 2 or ages_arr.shape != values_arr.shape:
            raise InvalidDecayError("Tabulated decay needs two equally long sequences of ≥ 2 samples.")
        if ages_arr[0] < 0 or np.any(np.diff(ages_arr) <= 0):
            raise InvalidDecayError("Tabulated ages must be non-negative and strictly increasing.")
        if np.any(np.diff(values_arr) >= 0):
            raise InvalidDecayError("Tabulated values must be strictly decreasing.")
        return cls(TABULATED, horizon, tuple(ages_arr.tolist()), tuple(values_arr.tolist()))

    # -- evaluation ----------------------------------------------------------

    @property
    def support(self) -> float:
        """Age beyond which δ = 0 (inf for exponential)."""
        if self.kind == EXPONENTIAL:
            return math.inf
        return self.param

    @property
    def characteristic_scale(self) -> float:
        return 1.0 / self.param if self.kind == EXPONENTIAL else self.param

    def weight(self, age: float) -> float:
        if age < 0:
            raise InvalidDecayError(f"Age must be ≥ 0, got {age}.")
        if self.kind == EXPONENTIAL:
            raw = math.exp(-self.param * age)
        elif self.kind == LINEAR:
            raw = 1.0 - age / self.param
        elif self.kind == WINDOW:
            raw = 1.0 if age <= self.param else 0.0
        else:
            raw = float(np.interp(age, self.ages, self.values)) if age <= self.param else 0.0
        return min(1.0, max(0.0, raw))

    def integrate(self, from_age: float, to_age: float) -> float:
        """∫ δ(a) da over [from_age, to_age], in minutes."""
        if from_age < 0 or to_age < 0:
            raise InvalidDecayError(f"Integration bounds must be ≥ 0, got [{from_age}, {to_age}].")
        if from_age > to_age:
            raise InvalidDecayError(f"Reversed integration bounds [{from_age}, {to_age}].")
        if from_age == to_age:
            return 0.0

        if self.kind == EXPONENTIAL:
            rate = self.param
            # -expm1 keeps precision for short spans near now.
            return math.exp(-rate * from_age) * -math.expm1(-rate * (to_age - from_age)) / rate

        upper = min(to_age, self.param)
        if from_age >= upper:
            return 0.0
        if self.kind == WINDOW:
            return upper - from_age
        if self.kind == LINEAR:
            return (upper - from_age) - (upper * upper - from_age * from_age) / (2.0 * self.param)
        return self._quadrature(from_age, upper, to_age - from_age)

    def _quadrature(self, lo: float, hi: float, span: float) -> float:
        breaks = [a for a in self.ages if lo < a < hi]
        value, _ = integrate.quad(
            self.weight, lo, hi,
            epsabs=_QUAD_ABS_TOL * (span + 1.0), epsrel=0.0,
            points=breaks or None, limit=max(200, 4 * len(breaks)),
        )
        return max(0.0, value)

    def normalization(self) -> float:
        """∫₀^∞ δ(a) da."""
        if self.kind == EXPONENTIAL:
            return 1.0 / self.param
        if self.kind == LINEAR:
            return self.param / 2.0
        if self.kind == WINDOW:
            return self.param
        area = self.integrate(0.0, self.param)
        if area <= 0:
            raise DivergentDecayError("Tabulated decay has zero area; presence cannot be normalised.")
        return area

    # -- text form -----------------------------------------------------------

    def to_string(self) -> str:
        if self.kind == TABULATED:
            raise InvalidDecayError("Tabulated decays have no string form.")
        prefix = {EXPONENTIAL: "exp", LINEAR: "linear", WINDOW: "window"}[self.kind]
        return f"{prefix}:{self.param!r}"

    def __str__(self) -> str:
        if self.kind == TABULATED:
            return f"tabulated(horizon={self.param})"
        return self.to_string()


_PARSERS = {
    "exp": DecaySpec.exponential,
    "halflife": DecaySpec.half_life,
    "linear": DecaySpec.linear,
    "window": DecaySpec.window,
}


def parse_decay(text: str) -> DecaySpec:
    if not isinstance(text, str) or ":" not in text:
        raise InvalidDecayError(f"Decay spec must look like 'exp:<rate>', got {text!r}.")
    kind, _, value = text.strip().partition(":")
    parser = _PARSERS.get(kind.strip().lower())
    if parser is None:
        raise InvalidDecayError(f"Unknown decay kind {kind!r}; expected one of {sorted(_PARSERS)}.")
    return parser(value.strip())
