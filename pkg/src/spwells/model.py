"""Power nonlinearity f(s) = (s+)^q, its cutoff and the penalized g(x, s)."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class ModelError(ValueError):
    pass


def cutoff_constants(delta: float, q: float) -> tuple[float, float]:
    """Return ``(nu, a_cut)`` with nu = 1 - delta and f(a_cut)/a_cut = nu."""
    if not 0.0 < delta < 1.0:
        raise ModelError(f"coercivity constant must lie in (0, 1), got {delta}")
    if not 3.0 < q < 5.0:
        raise ModelError(f"exponent q must lie in (3, 5), got {q}")
    nu = 1.0 - delta
    a_cut = nu ** (1.0 / (q - 1.0))
    if abs(f_eval(a_cut, q) / a_cut - nu) > 1e-14:
        raise ModelError("cutoff level does not satisfy f(a)/a = nu")  # pragma: no cover
    return nu, a_cut


@dataclass(frozen=True)
class ModelParams:
    q: float = 4.0
    delta: float = 0.5
    lam: float = 1.0

    def __post_init__(self):
        cutoff_constants(self.delta, self.q)
        if self.lam < 0:
            raise ModelError(f"lambda must be non-negative, got {self.lam}")

    @property
    def nu(self) -> float:
        return 1.0 - self.delta

    @property
    def a_cut(self) -> float:
        return cutoff_constants(self.delta, self.q)[1]

    @property
    def theta(self) -> float:
        return self.q + 1.0

    def with_lambda(self, lam: float) -> "ModelParams":
        return replace(self, lam=float(lam))


def f_eval(s, q):
    return np.maximum(s, 0.0) ** q


def F_eval(s, q):
    return np.maximum(s, 0.0) ** (q + 1.0) / (q + 1.0)


def f_tilde(s, p: ModelParams):
    s = np.asarray(s, dtype=np.float64)
    return np.where(s <= p.a_cut, f_eval(s, p.q), p.nu * s)


def F_tilde(s, p: ModelParams):
    s = np.asarray(s, dtype=np.float64)
    a = p.a_cut
    above = F_eval(a, p.q) + 0.5 * p.nu * (s * s - a * a)
    return np.where(s <= a, F_eval(s, p.q), above)


def g_eval(inside, s, p: ModelParams):
    """f(s) where ``inside`` (x in Ω'_Υ), f̃(s) elsewhere."""
    return np.where(inside, f_eval(s, p.q), f_tilde(s, p))


def G_eval(inside, s, p: ModelParams):
    return np.where(inside, F_eval(s, p.q), F_tilde(s, p))
