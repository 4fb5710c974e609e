"""Spectrally positive alpha-stable noise.

Convention: the Levy measure is ``nu(dz) = C z^(-1-alpha) dz`` on z > 0 with
``C = 1/(alpha*Gamma(-alpha))``, the process is compensated to mean zero, and

    E[exp(-u Z_t)] = exp(t u^alpha / alpha),   u >= 0.

In the (scale sigma, skewness 1, shift 0) parameterization of
Samorodnitsky-Taqqu this is ``S_alpha(sigma, 1, 0)`` with
``sigma^alpha = -cos(pi*alpha/2)/alpha``; for alpha in (1,2) the shift 0 law
already has mean zero. At alpha = 2 the same formula gives standard Brownian
increments, which :func:`noise_increment` uses.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DomainError, ParameterError


@dataclass(frozen=True)
class StableLaw:
    alpha: float
    c_alpha: float = float("nan")

    def __post_init__(self):
        a = float(self.alpha)
        if not (1.0 < a < 2.0):
            raise ParameterError(f"alpha must lie in (1,2), got {self.alpha}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "c_alpha", levy_constant(a))

    @property
    def scale(self) -> float:
        """CMS scale sigma of Z_1."""
        return (-np.cos(np.pi * self.alpha / 2) / self.alpha) ** (1.0 / self.alpha)

    def laplace_exponent(self, u):
        return np.asarray(u, dtype=float) ** self.alpha / self.alpha


def levy_constant(alpha: float) -> float:
    return 1.0 / (alpha * gamma_fn(-alpha))


def _cms_standard(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Chambers-Mallows-Stuck draw of S_alpha(1, 1, 0), alpha != 1."""
    v = rng.uniform(-np.pi / 2, np.pi / 2, size)
    w = rng.standard_exponential(size)
    t = np.tan(np.pi * alpha / 2)
    b = np.arctan(t) / alpha
    s = (1.0 + t * t) ** (1.0 / (2 * alpha))
    ab = alpha * (v + b)
    return s * np.sin(ab) / np.cos(v) ** (1.0 / alpha) * (np.cos(v - ab) / w) ** ((1.0 - alpha) / alpha)


def sample_stable_increment(law: StableLaw, dt: float, rng: np.random.Generator, size=None):
    """Increment Z_dt of the mean-zero spectrally positive stable process."""
    if not isinstance(law, StableLaw):
        raise ParameterError("law must be a StableLaw")
    if not dt > 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    x = _cms_standard(law.alpha, size, rng) * (law.scale * dt ** (1.0 / law.alpha))
    return float(x) if size is None else x


def noise_increment(alpha: float, dt: float, rng: np.random.Generator, size=None):
    """Stable increment for alpha in (1,2); standard Brownian increment at alpha = 2."""
    if alpha == 2.0:
        x = rng.normal(0.0, np.sqrt(dt), size)
        return float(x) if size is None else x
    return sample_stable_increment(StableLaw(alpha), dt, rng, size)


def _check_cut(z0, name):
    if not z0 > 0:
        raise DomainError(f"{name} must be > 0, got {z0}")


def levy_tail_mass(law: StableLaw, z0: float) -> float:
    """nu((z0, inf))."""
    _check_cut(z0, "z0")
    return law.c_alpha * z0 ** (-law.alpha) / law.alpha


def levy_tail_first_moment(law: StableLaw, z0: float) -> float:
    """int_{z0}^inf z nu(dz)."""
    _check_cut(z0, "z0")
    return law.c_alpha * z0 ** (1.0 - law.alpha) / (law.alpha - 1.0)


def levy_small_jump_variance(law: StableLaw, eps: float) -> float:
    """int_0^eps z^2 nu(dz)."""
    _check_cut(eps, "eps")
    return law.c_alpha * eps ** (2.0 - law.alpha) / (2.0 - law.alpha)
