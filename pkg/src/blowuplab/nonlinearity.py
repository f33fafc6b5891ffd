"""The two nonlinearities ``f(t) = t_+^p`` and ``f(t) = exp(a t)``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, ParameterError

EXP_ARGUMENT_LIMIT = 700.0


@dataclass(frozen=True)
class NonlinearitySpec:
    kind: str  # "power" | "exponential"
    p: float | None = None
    a: float | None = None

    def __post_init__(self):
        if self.kind == "power":
            if self.p is None or not self.p > 1:
                raise ParameterError(f"power nonlinearity requires p > 1, got p={self.p}")
        elif self.kind == "exponential":
            a = 1.0 if self.a is None else self.a
            if not a > 0:
                raise ParameterError(f"exponential nonlinearity requires a > 0, got a={a}")
            object.__setattr__(self, "a", float(a))
        else:
            raise ParameterError(f"unknown nonlinearity kind {self.kind!r}")

    @classmethod
    def power(cls, p: float) -> "NonlinearitySpec":
        return cls("power", p=float(p))

    @classmethod
    def exponential(cls, a: float = 1.0) -> "NonlinearitySpec":
        return cls("exponential", a=float(a))

    @property
    def is_power(self) -> bool:
        return self.kind == "power"

    @property
    def gamma(self) -> float:
        """Blow-up exponent of ``u``: ``2/(p-1)``; the exponential case has none."""
        if not self.is_power:
            raise ParameterError("gamma is defined for the power nonlinearity only")
        return 2.0 / (self.p - 1.0)

    @property
    def beta(self) -> float:
        """Blow-up exponent of ``f(u)``: ``2p/(p-1)`` or 2."""
        return 2.0 * self.p / (self.p - 1.0) if self.is_power else 2.0

    def f(self, t):
        t = np.asarray(t, dtype=float)
        if self.is_power:
            return np.maximum(t, 0.0) ** self.p
        arg = self.a * t
        if np.any(arg > EXP_ARGUMENT_LIMIT) or np.any(np.isnan(arg)):
            raise DivergenceError("exponential nonlinearity overflow: argument exceeds "
                                  f"{EXP_ARGUMENT_LIMIT}; lower the boundary data or damp Newton")
        return np.exp(arg)

    def fprime(self, t):
        t = np.asarray(t, dtype=float)
        if self.is_power:
            return self.p * np.maximum(t, 0.0) ** (self.p - 1.0)
        return self.a * self.f(t)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p} if self.is_power else {"kind": self.kind, "a": self.a}
