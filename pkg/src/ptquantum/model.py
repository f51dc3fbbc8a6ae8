"""System variants, derived damping/amplification rates and EP geometry.

Five variants of the two-mode system are supported.  They share the linear
coupling ``epsilon`` and the down-conversion coupling ``kappa`` and differ
in how the base rate ``gamma`` is distributed over the two modes:

====  ==============  =======================
kind  gamma1, gamma2  reservoir noise
====  ==============  =======================
ad    g, -g           l1 = 2g, l2~ = 2g
d     g, 0            l1 = 2g
a     0, -g           l2~ = 2g
dd    2g, 0           l1 = 4g
aa    0, -2g          l2~ = 4g
====  ==============  =======================

A damped mode couples to a ground-state reservoir (``l = 2 gamma_j``,
``l~ = 0``); an amplified mode to an inverted one (``l = 0``,
``l~ = 2 |gamma_j|``).  This is exactly what keeps ``[a_j, a_j^+] = 1``.
"""

from __future__ import annotations

import cmath
import enum
from dataclasses import dataclass

import numpy as np

# |mu| * t below which the exceptional-point limit formulas are used
EP_THRESHOLD = 1e-6


class SystemKind(str, enum.Enum):
    STANDARD = "ad"
    DAMPED_ONLY = "d"
    AMPLIFIED_ONLY = "a"
    PASSIVE = "dd"
    ACTIVE = "aa"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, value: "str | SystemKind") -> "SystemKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = "|".join(k.value for k in cls)
            raise ValueError(f"unknown system kind {value!r} (expected {choices})") from None


@dataclass(frozen=True)
class SystemConfig:
    """Coupling constants and variant of the two-mode system.

    ``epsilon`` sets the frequency unit; all rates share its units.
    """

    kappa: float
    gamma: float
    kind: SystemKind = SystemKind.STANDARD
    epsilon: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SystemKind.parse(self.kind))
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class SystemRates:
    """Mode damping rates (negative = amplification) and noise strengths.

    ``l1``/``l2`` multiply ``delta(t - t')`` in ``<l_j l_j^+>``,
    ``l1t``/``l2t`` in ``<l_j^+ l_j>``.
    """

    gamma1: float
    gamma2: float
    l1: float = 0.0
    l1t: float = 0.0
    l2: float = 0.0
    l2t: float = 0.0

    @property
    def gamma_plus(self) -> float:
        return 0.5 * (self.gamma1 + self.gamma2)

    @property
    def gamma_minus(self) -> float:
        return 0.5 * (self.gamma1 - self.gamma2)


@dataclass(frozen=True)
class EpGeometry:
    mu: complex
    mu_squared: float

    @property
    def ep_distance(self) -> float:
        """Signed distance from the EP curve (zero on it, negative in the broken phase)."""
        return self.mu_squared


def _mode_rates(rate: float) -> tuple[float, float]:
    # (l, l~) for a mode with damping rate ``rate``
    if rate >= 0:
        return 2.0 * rate, 0.0
    return 0.0, -2.0 * rate


def derive_rates(config: SystemConfig) -> SystemRates:
    g = config.gamma
    kind = config.kind
    if kind is SystemKind.STANDARD:
        g1, g2 = g, -g
    elif kind is SystemKind.DAMPED_ONLY:
        g1, g2 = g, 0.0
    elif kind is SystemKind.AMPLIFIED_ONLY:
        g1, g2 = 0.0, -g
    elif kind is SystemKind.PASSIVE:
        g1, g2 = 2.0 * g, 0.0
    else:
        g1, g2 = 0.0, -2.0 * g
    l1, l1t = _mode_rates(g1)
    l2, l2t = _mode_rates(g2)
    return SystemRates(g1 + 0.0, g2 + 0.0, l1, l1t, l2, l2t)


def effective_frequency(epsilon: float, kappa: float, gamma_minus: float) -> tuple[complex, float]:
    """Return ``(mu, mu**2)`` with ``mu`` the principal root (Im mu >= 0)."""
    mu2 = epsilon**2 - kappa**2 - gamma_minus**2
    return cmath.sqrt(complex(mu2, 0.0)), mu2


def ep_geometry(config: SystemConfig) -> EpGeometry:
    rates = derive_rates(config)
    mu, mu2 = effective_frequency(config.epsilon, config.kappa, rates.gamma_minus)
    return EpGeometry(mu=mu, mu_squared=mu2)


def ep_curve(kind: "SystemKind | str", n_points: int = 101) -> list[tuple[float, float]]:
    """Sample the EP curve as ``(gamma/epsilon, kappa/epsilon)`` pairs.

    kappa/epsilon runs uniformly over [0, 1], plus the point kappa/epsilon =
    0.8 (where gamma_minus/epsilon = 0.6) if the grid misses it.  For ad, dd
    and aa the curve is the unit circle; for the single-channel variants
    gamma_minus = gamma/2, which stretches it to
    ``(kappa/eps)^2 + (gamma/2eps)^2 = 1``.
    """
    kind = SystemKind.parse(kind)
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    kappas = np.linspace(0.0, 1.0, n_points)
    if not np.any(np.isclose(kappas, 0.8, rtol=0, atol=1e-12)):
        kappas = np.sort(np.append(kappas, 0.8))
    scale = 2.0 if kind in (SystemKind.DAMPED_ONLY, SystemKind.AMPLIFIED_ONLY) else 1.0
    # (1 - k)(1 + k) keeps full precision near kappa = 1
    gammas = scale * np.sqrt(np.clip((1.0 - kappas) * (1.0 + kappas), 0.0, None))
    return [(float(g), float(k)) for g, k in zip(gammas, kappas)]
