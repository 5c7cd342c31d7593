"""Closed-form integrated rates of freely decaying potentials.

For the piecewise-linear rate, a neuron at potential u stays saturated for
s(u) = ln(k u / lambda_star) / alpha (zero when k u <= lambda_star) and then
decays exponentially, so its integrated rate over [0, tau] is
lambda_star * min(tau, s) + c / alpha * (1 - exp(-alpha (tau - s)_+)) with
c = min(k u, lambda_star).
"""

from __future__ import annotations

import logging
import math
import warnings

import numpy as np
from scipy import integrate, optimize

from model.params import ModelParams
from model.rates import PiecewiseLinearRate
from services.errors import ConvergenceError, DomainError, NonExactQuadratureWarning

logger = logging.getLogger(__name__)

INVERSION_RTOL = 1e-12


def residual_integrated_rate(u: float, params: ModelParams) -> float:
    """I(u): the integrated rate of a neuron left alone at potential u forever."""
    if u < 0:
        raise DomainError(f"potential must be non-negative, got {u}")
    if u == 0:
        return 0.0
    rate = params.rate
    alpha = params.alpha
    if isinstance(rate, PiecewiseLinearRate):
        if rate.k * u >= rate.lambda_star:
            return rate.lambda_star / alpha * (math.log(rate.k * u / rate.lambda_star) + 1.0)
        return rate.k * u / alpha
    warnings.warn(
        f"integrated rate of generic rate '{rate.name}' computed by quadrature",
        NonExactQuadratureWarning,
        stacklevel=2,
    )
    # substitution v = u*exp(-alpha*s) turns the infinite horizon into [0, u]
    value, _ = integrate.quad(lambda v: rate.value(v) / (alpha * v), 0.0, u, epsabs=1e-13, epsrel=1e-11, limit=200)
    return float(value)


def _saturation_profile(u: np.ndarray, rate: PiecewiseLinearRate, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    ku = rate.k * u
    saturated = ku > rate.lambda_star
    s = np.zeros_like(u)
    s[saturated] = np.log(ku[saturated] / rate.lambda_star) / alpha
    c = np.minimum(ku, rate.lambda_star)
    return s, c


def total_residual_rate(u: np.ndarray, params: ModelParams) -> float:
    """Sum of I(u_i) over the vector of potentials."""
    rate = params.require_piecewise_linear("total_residual_rate")
    s, c = _saturation_profile(np.asarray(u, dtype=float), rate, params.alpha)
    return float(np.sum(rate.lambda_star * s + c / params.alpha))


def integrated_rate(u: np.ndarray, tau: float, params: ModelParams) -> float:
    """Integral over [0, tau] of the total rate of freely decaying potentials u."""
    rate = params.require_piecewise_linear("integrated_rate")
    alpha = params.alpha
    s, c = _saturation_profile(np.asarray(u, dtype=float), rate, alpha)
    tail = np.maximum(tau - s, 0.0)
    return float(np.sum(rate.lambda_star * np.minimum(tau, s) - c / alpha * np.expm1(-alpha * tail)))


def invert_integrated_rate(u: np.ndarray, target: float, params: ModelParams) -> float:
    """Smallest tau with integrated_rate(u, tau) = target.

    The caller guarantees target < total_residual_rate(u); the integrated rate is
    continuous and strictly increasing while any potential is positive.
    """
    u = np.asarray(u, dtype=float)
    if target <= 0:
        return 0.0
    lam0 = float(np.sum(params.rate.values(u)))
    if lam0 <= 0:
        raise DomainError("cannot invert the integrated rate of a silent system")

    def residual(tau: float) -> float:
        return integrated_rate(u, tau, params) - target

    lo = target / lam0
    hi = 2.0 * lo
    for _ in range(2000):
        if residual(hi) >= 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ConvergenceError(f"could not bracket integrated-rate target {target}")
    if residual(lo) >= 0:
        return lo
    tau = optimize.brentq(residual, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    tol = INVERSION_RTOL * max(target, 1.0)
    if abs(residual(tau)) > tol:
        logger.warning(f"integrated-rate inversion residual {residual(tau):.3e} above {tol:.1e}")
    return float(tau)
