"""Compensated Levy integrals  int_0^inf h(z) nu_alpha(dz)  for piecewise-smooth h.

The half line is split into
  [0, z_s]           second-order Taylor term h2*z^2 (closed form) plus an error bound,
  [z_s, k_1], ...    adaptive Gauss-Kronrod between consecutive kinks,
  [z_tail, inf)      closed-form tail when h is affine there (h = A z + B),
                     otherwise adaptive quadrature on the infinite interval.
"""

from dataclasses import dataclass
import warnings

import numpy as np
from scipy import integrate

from .errors import NumericAccuracyError
from .stable import StableLaw, levy_small_jump_variance, levy_tail_first_moment, levy_tail_mass


@dataclass(frozen=True)
class QuadratureConfig:
    epsabs: float = 1e-12
    epsrel: float = 1e-9
    limit: int = 200
    # Taylor cutoff relative to the first kink / local scale
    small_frac: float = 1e-3

    def tighter(self, factor: float = 10.0) -> "QuadratureConfig":
        return QuadratureConfig(self.epsabs / factor, self.epsrel / factor, self.limit * 2, self.small_frac)


def _quad(fn, lo, hi, cfg: QuadratureConfig):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(fn, lo, hi, epsabs=cfg.epsabs, epsrel=cfg.epsrel, limit=cfg.limit)
        except integrate.IntegrationWarning as w:
            val, err = integrate.quad(fn, lo, hi, epsabs=cfg.epsabs, epsrel=cfg.epsrel, limit=cfg.limit,
                                      full_output=1)[:2]
            tol = max(cfg.epsabs, cfg.epsrel * abs(val))
            if not err <= 100 * tol:
                raise NumericAccuracyError(f"quadrature on [{lo:.3g},{hi:.3g}] failed: {w}", err) from None
    return val, err


def levy_integral(h, law: StableLaw, kinks=(), *, z_small: float, h2: float = 0.0, h2_dev=None,
                  tail=None, cfg: QuadratureConfig = QuadratureConfig()):
    """Return (value, error bound) of int_0^inf h(z) nu(dz).

    h        callable on z > 0 (already compensated, h(z) = O(z^2) at 0)
    kinks    points where h is not smooth
    z_small  Taylor cutoff; on [0, z_small] h(z) ~ h2 * z^2
    h2_dev   callable z -> bound on |h(z)/z^2 - h2| for z <= z_small (error term);
             default estimates it from h itself at a few points
    tail     (z_tail, A, B) with h(z) = A z + B for z >= z_tail, else None
    """
    C, a = law.c_alpha, law.alpha
    dens = lambda z: h(z) * C * z ** (-1.0 - a)
    m2 = levy_small_jump_variance(law, z_small)
    value = h2 * m2
    if h2_dev is None:
        # first-order correction h(z)/z^2 ~ h2 + h3 z fitted at z_small; residual bounds the error
        h3 = (h(z_small) / z_small ** 2 - h2) / z_small
        value += h3 * C * z_small ** (3.0 - a) / (3.0 - a)
        probes = z_small * np.array([0.125, 0.25, 0.5, 0.75])
        dev = max(abs(h(z) / (z * z) - h2 - h3 * z) for z in probes)
        err = 2.0 * dev * m2
    else:
        err = h2_dev(z_small) * m2

    top = tail[0] if tail is not None else np.inf
    pts = sorted({float(k) for k in kinks if z_small < k < top})
    edges = [z_small] + pts + ([top] if np.isfinite(top) and top > z_small else [])
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = _quad(dens, lo, hi, cfg)
        value += v
        err += e
    if tail is None:
        v, e = _quad(dens, edges[-1], np.inf, cfg)
        value += v
        err += e
    else:
        z_tail, A, B = tail
        z_tail = max(z_tail, z_small)
        value += A * levy_tail_first_moment(law, z_tail) + B * levy_tail_mass(law, z_tail)
    return value, err
