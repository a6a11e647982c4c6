"""Disorder laws and the intermediate-disorder coupling windows.

Every window is pinned to its defining identity for the chaos variance
``sigma^2 = exp(lambda(2 beta) - 2 lambda(beta)) - 1``:

* critical        ``sigma^2 = (1 + theta / log N) / R_N``
* quasi-critical  ``sigma^2 = (1 - |theta_N| / log N) / R_N``
* sub-critical    ``sigma^2 = beta_hat^2 / R_N``

and ``beta`` is then obtained by inverting the monotone map ``beta -> sigma^2``.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

from .walk import overlap

BETA_MAX = 5.0
BISECT_ITERS = 200


class Law(str, enum.Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"


@dataclass(frozen=True)
class DisorderSpec:
    """Zero-mean, unit-variance disorder law with a closed-form log-MGF."""

    law: Law = Law.GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "law", Law(self.law))

    @property
    def beta_max(self) -> float:
        return BETA_MAX

    def sup_sigma2(self) -> float:
        """Supremum of the chaos variance over ``0 <= beta <= BETA_MAX``."""
        return chaos_variance(self, BETA_MAX)


GAUSSIAN = DisorderSpec(Law.GAUSSIAN)
RADEMACHER = DisorderSpec(Law.RADEMACHER)


def _log_cosh(b: float) -> float:
    b = abs(b)
    return b + math.log1p(math.exp(-2.0 * b)) - math.log(2.0)


def log_mgf(spec: DisorderSpec, beta: float) -> float:
    """``lambda(beta) = log E[exp(beta omega)]``."""
    if not math.isfinite(beta) or abs(beta) > 2 * BETA_MAX:
        raise ValueError(f"beta={beta} outside the supported range |beta| <= {2 * BETA_MAX}")
    if spec.law is Law.GAUSSIAN:
        return 0.5 * beta * beta
    return _log_cosh(beta)


def chaos_variance(spec: DisorderSpec, beta: float) -> float:
    """``sigma_beta^2 = exp(lambda(2 beta) - 2 lambda(beta)) - 1``."""
    if spec.law is Law.GAUSSIAN:
        return math.expm1(beta * beta)
    return math.expm1(log_mgf(spec, 2 * beta) - 2 * log_mgf(spec, beta))


def solve_beta(spec: DisorderSpec, target: float) -> float:
    """Invert ``beta -> sigma_beta^2`` on ``[0, BETA_MAX]``.

    Gaussian disorder uses the closed form ``sqrt(log(1 + sigma^2))``; other
    laws use bisection.  Rademacher chaos variance equals ``tanh(beta)^2`` and
    therefore never reaches 1.
    """
    if not target > 0:
        raise ValueError(f"chaos variance target must be positive, got {target}")
    if spec.law is Law.GAUSSIAN:
        beta = math.sqrt(math.log1p(target))
        if beta > BETA_MAX:
            raise ValueError(f"target {target} needs beta={beta:.3f} > {BETA_MAX}")
        return beta
    top = chaos_variance(spec, BETA_MAX)
    if target > top:
        raise ValueError(f"target {target} unattainable: {spec.law.value} variance is at most {top:.12g}")
    lo, hi = 0.0, BETA_MAX
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if chaos_variance(spec, mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# regimes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Critical:
    theta: float

    name = "critical"

    def sigma2(self, N: int, R_N: float) -> float:
        return (1.0 + self.theta / math.log(N)) / R_N

    def params(self):
        return {"theta": self.theta}


@dataclass(frozen=True)
class QuasiCritical:
    theta_N: float

    name = "quasi-critical"

    def sigma2(self, N: int, R_N: float) -> float:
        t = abs(self.theta_N)
        if not 0 < t < math.log(N):
            raise ValueError(f"quasi-critical window needs 0 < |theta_N| < log N = {math.log(N):.4f}, got {self.theta_N}")
        return (1.0 - t / math.log(N)) / R_N

    def params(self):
        return {"theta_N": self.theta_N}


@dataclass(frozen=True)
class SubCritical:
    beta_hat: float

    name = "sub-critical"

    def sigma2(self, N: int, R_N: float) -> float:
        if not 0 < self.beta_hat <= 1:
            raise ValueError(f"sub-critical window needs 0 < beta_hat <= 1, got {self.beta_hat}")
        return self.beta_hat**2 / R_N

    def params(self):
        return {"beta_hat": self.beta_hat}


Regime = Critical | QuasiCritical | SubCritical


def regime_from_dict(d: dict) -> Regime:
    kind = d["regime"]
    if kind == "critical":
        return Critical(float(d["theta"]))
    if kind == "quasi-critical":
        return QuasiCritical(float(d["theta_N"]))
    if kind == "sub-critical":
        return SubCritical(float(d["beta_hat"]))
    raise ValueError(f"unknown regime {kind!r}")


@dataclass(frozen=True)
class CouplingWindow:
    """A regime resolved at system size ``N`` to a concrete ``(beta, sigma^2)``."""

    regime: Regime
    N: int
    beta: float
    sigma2: float
    spec: DisorderSpec = GAUSSIAN

    def to_dict(self) -> dict:
        d = {"regime": self.regime.name, "N": self.N}
        d.update(self.regime.params())
        d.update(beta=self.beta, sigma2=self.sigma2, law=self.spec.law.value)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "CouplingWindow":
        return cls(regime_from_dict(d), int(d["N"]), float(d["beta"]), float(d["sigma2"]),
                   DisorderSpec(d.get("law", "gaussian")))

    @classmethod
    def from_json(cls, s: str) -> "CouplingWindow":
        return cls.from_dict(json.loads(s))


def resolve_window(regime: Regime, N: int, spec: DisorderSpec = GAUSSIAN) -> CouplingWindow:
    """Pin ``sigma^2`` to the exact window identity and solve for ``beta``."""
    if N < 2:
        raise ValueError("N must be >= 2")
    target = regime.sigma2(N, overlap(N))
    if not target > 0:
        raise ValueError(f"{regime.name} window gives sigma^2 = {target:.6g} <= 0 at N={N}")
    beta = solve_beta(spec, target)
    return CouplingWindow(regime, int(N), beta, target, spec)


def delta_scale(theta_N: float) -> float:
    """``delta_N = exp(-|theta_N| / 2)``."""
    if not theta_N > 0:
        raise ValueError("theta_N must be positive")
    return math.exp(-abs(theta_N) / 2.0)
