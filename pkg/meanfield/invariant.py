"""Invariant densities of the limit process and the fixed point p*.

For a drift constant a > 0 the limit process has the stationary density

    g_a(x) = p_a / (a - alpha x) * exp(-int_0^x lambda(y) / (a - alpha y) dy),  0 <= x < a/alpha,

with p_a = 1 / Gamma(a). In the scaled variable xi = x / a,

    Gamma(a) = int_0^{1/alpha} exp(-Phi(xi)) / (1 - alpha xi) dxi,
    Phi(xi)  = int_0^xi lambda(a eta) / (1 - alpha eta) d eta,

and the integrand behaves like (1 - alpha xi)^(c - 1) at the endpoint with
c = lambda(a/alpha)/alpha. An equilibrium of the non-linear process is a root
of h p_a = a.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import integrate, optimize, special

from config.settings import get_settings
from model.params import ModelParams
from model.rates import PiecewiseLinearRate
from model.regime import p_star_bracket
from services.errors import ArgumentError, DomainError, NoEquilibriumError, NonExactQuadratureWarning

logger = logging.getLogger(__name__)

QuadMethod = Literal["split", "weighted", "closed"]

# Fraction of the support integrated numerically before the analytic tail
SPLIT_FRACTION = 1.0 - 1e-6


class GammaIntegrand:
    """exp(-Phi(xi)) / (1 - alpha xi) on [0, 1/alpha) for one drift constant a."""

    def __init__(self, a: float, params: ModelParams, quad_tol: float | None = None):
        if not a > 0:
            raise DomainError(f"drift constant a must be positive, got {a}")
        self.a = a
        self.alpha = params.alpha
        self.rate = params.rate
        self.end = 1.0 / params.alpha
        self.quad_tol = quad_tol if quad_tol is not None else get_settings().quad_tol
        # endpoint exponent: integrand ~ (1 - alpha xi)^(c - 1)
        self.c = params.rate.value(a / params.alpha) / params.alpha
        self.exact = isinstance(self.rate, PiecewiseLinearRate)
        if isinstance(self.rate, PiecewiseLinearRate):
            self.xi_sat = min(self.rate.lambda_star / (self.rate.k * a), self.end)
            self.c0 = self.rate.k * a / self.alpha**2
            self.phi_sat = self._phi_linear(self.xi_sat) if self.xi_sat < self.end else math.inf
        else:
            self.xi_sat = self.end

    @property
    def saturates(self) -> bool:
        return self.xi_sat < self.end

    # -- exponent ---------------------------------------------------------

    def _phi_linear(self, xi):
        axi = self.alpha * np.asarray(xi, dtype=float)
        return self.c0 * (-axi - np.log1p(-axi))

    def phi(self, xi):
        """Phi(xi); closed form for the piecewise-linear rate."""
        xi_arr = np.asarray(xi, dtype=float)
        if isinstance(self.rate, PiecewiseLinearRate):
            with np.errstate(divide="ignore"):
                below = self._phi_linear(np.minimum(xi_arr, self.xi_sat))
                if not self.saturates:
                    return below
                excess = -(self.rate.lambda_star / self.alpha) * (
                    np.log1p(-self.alpha * np.maximum(xi_arr, self.xi_sat)) - math.log1p(-self.alpha * self.xi_sat)
                )
            return np.where(xi_arr <= self.xi_sat, below, self.phi_sat + excess)
        return np.vectorize(self._phi_quad)(xi_arr)

    def _phi_quad(self, xi: float) -> float:
        if xi >= self.end:
            return math.inf
        value, _ = integrate.quad(
            lambda eta: self.rate.value(self.a * eta) / (1.0 - self.alpha * eta),
            0.0,
            xi,
            epsabs=self.quad_tol * 1e-2,
            epsrel=self.quad_tol,
            limit=200,
        )
        return value

    def log_value(self, xi):
        xi_arr = np.asarray(xi, dtype=float)
        with np.errstate(divide="ignore"):
            return -np.log1p(-self.alpha * xi_arr) - self.phi(xi_arr)

    def value(self, xi):
        return np.exp(self.log_value(xi))

    def endpoint_limit(self) -> float:
        """Limit of the integrand at xi = 1/alpha (0, finite or +inf)."""
        if self.c > 1.0:
            return 0.0
        if self.c < 1.0:
            return math.inf
        if isinstance(self.rate, PiecewiseLinearRate):
            if self.saturates:
                return math.exp(-self.phi_sat - self.c * math.log1p(-self.alpha * self.xi_sat))
            return math.exp(self.c0)
        probe = self.end * SPLIT_FRACTION
        return float(self.value(probe))

    # -- exact pieces (piecewise-linear rate) -----------------------------

    def _linear_piece(self, lo: float, hi: float) -> float:
        """Integral over [lo, hi] inside the unsaturated stretch, via incomplete gamma functions."""
        c0 = self.c0
        v_hi, v_lo = 1.0 - self.alpha * lo, 1.0 - self.alpha * hi
        log_pref = c0 - c0 * math.log(c0) + special.gammaln(c0) - math.log(self.alpha)
        mass = special.gammaincc(c0, c0 * v_lo) - special.gammaincc(c0, c0 * v_hi)
        return math.exp(log_pref) * mass

    def _saturated_piece(self, lo: float, hi: float) -> float:
        """Integral over [lo, hi] inside the saturated stretch, where the integrand is a pure power."""
        c = self.c
        v_s = 1.0 - self.alpha * self.xi_sat
        log_coef = -self.phi_sat - c * math.log(v_s)
        v_hi, v_lo = 1.0 - self.alpha * lo, max(1.0 - self.alpha * hi, 0.0)
        return math.exp(log_coef) * (v_hi**c - v_lo**c) / (self.alpha * c)

    def exact_piece(self, lo: float, hi: float) -> float:
        if not isinstance(self.rate, PiecewiseLinearRate):
            raise ArgumentError("exact pieces need the piecewise-linear rate")
        total = 0.0
        if lo < self.xi_sat:
            total += self._linear_piece(lo, min(hi, self.xi_sat))
        if hi > self.xi_sat:
            total += self._saturated_piece(max(lo, self.xi_sat), hi)
        return total

    # -- numerical pieces -------------------------------------------------

    def quad_piece(self, lo: float, hi: float) -> float:
        points = [self.xi_sat] if lo < self.xi_sat < hi else None
        value, _ = integrate.quad(
            lambda xi: float(self.value(xi)),
            lo,
            hi,
            points=points,
            epsabs=self.quad_tol * 1e-3,
            epsrel=self.quad_tol,
            limit=500,
        )
        return value

    def tail(self, lo: float) -> float:
        """Integral over [lo, 1/alpha]; exact for the piecewise-linear rate, power-law form otherwise."""
        if isinstance(self.rate, PiecewiseLinearRate):
            return self.exact_piece(lo, self.end)
        warnings.warn(
            f"endpoint tail of generic rate '{self.rate.name}' uses the local power-law form",
            NonExactQuadratureWarning,
            stacklevel=2,
        )
        return float(self.value(lo)) * (1.0 - self.alpha * lo) / (self.alpha * self.c)

    def piece(self, lo: float, hi: float) -> float:
        """Integral over [lo, hi], routing the endpoint cell to the tail formula."""
        if hi >= self.end:
            return self.tail(lo)
        if self.exact:
            return self.exact_piece(lo, hi)
        return self.quad_piece(lo, hi)

    # -- full integral ----------------------------------------------------

    def integral(self, method: QuadMethod = "split") -> float:
        if method == "closed":
            return self.exact_piece(0.0, self.end)
        if method == "split":
            cut = self.end * SPLIT_FRACTION
            return self.quad_piece(0.0, cut) + self.tail(cut)
        if method == "weighted":
            return self._weighted()
        raise ArgumentError(f"unknown quadrature method '{method}'")

    def _weighted(self) -> float:
        """QUADPACK algebraic-weight rule with weight (1/alpha - xi)^(c - 1) on the stretch reaching the endpoint."""
        start = self.xi_sat if self.saturates else 0.0
        head = self.quad_piece(0.0, start) if start > 0 else 0.0

        last = math.nextafter(self.end, 0.0)

        def smooth(xi: float) -> float:
            xi = min(xi, last)
            return math.exp(float(self.log_value(xi)) - (self.c - 1.0) * math.log(self.end - xi))

        tail, _ = integrate.quad(
            smooth,
            start,
            self.end,
            weight="alg",
            wvar=(0.0, self.c - 1.0),
            epsabs=self.quad_tol * 1e-3,
            epsrel=self.quad_tol,
            limit=500,
        )
        return head + tail


def gamma_of_a(a: float, params: ModelParams, quad_tol: float | None = None, method: QuadMethod = "split") -> float:
    """Gamma(a) = 1 / p_a."""
    return GammaIntegrand(a, params, quad_tol).integral(method)


def p_of_a(a: float, params: ModelParams, quad_tol: float | None = None, method: QuadMethod = "split") -> float:
    return 1.0 / gamma_of_a(a, params, quad_tol, method)


@dataclass
class DensityTable:
    """Tabulated invariant density at the fixed point a* = h p*."""

    a_star: float
    p_star: float
    grid: np.ndarray
    values: np.ndarray
    cdf: np.ndarray
    residual: float
    roots: list[float] = field(default_factory=list)
    mass: float = 1.0
    mean_rate: float = 0.0
    method: str = "split"

    @property
    def unique(self) -> bool:
        return len(self.roots) <= 1

    @property
    def support_end(self) -> float:
        return float(self.grid[-1])

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-cdf samples of the tabulated law."""
        return np.interp(rng.random(size), self.cdf, self.grid)

    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.grid.tolist(), self.values.tolist(), self.cdf.tolist(), strict=True))

    def sidecar(self) -> dict:
        return {
            "a_star": self.a_star,
            "p_star": self.p_star,
            "residual": self.residual,
            "roots": list(self.roots),
            "unique": self.unique,
            "mass": self.mass,
            "mean_rate": self.mean_rate,
            "method": self.method,
        }


def _table_grid(integrand: GammaIntegrand, points: int) -> np.ndarray:
    end = integrand.end
    uniform = np.linspace(0.0, end, points, endpoint=False)
    refined = end * (1.0 - np.logspace(-3.0, -12.0, 64))
    extra = [integrand.xi_sat] if integrand.saturates else []
    grid = np.unique(np.concatenate([uniform, refined, extra, [end]]))
    return grid


def tabulate_density(
    a: float,
    params: ModelParams,
    *,
    points: int = 2001,
    quad_tol: float | None = None,
    method: QuadMethod = "split",
    roots: list[float] | None = None,
) -> DensityTable:
    """Density g_a, its cdf and its moments on a grid refined towards a/alpha."""
    integrand = GammaIntegrand(a, params, quad_tol)
    gamma = integrand.integral(method)
    p = 1.0 / gamma
    xi = _table_grid(integrand, points)
    cells = np.array([integrand.piece(float(lo), float(hi)) for lo, hi in zip(xi[:-1], xi[1:], strict=True)])
    cumulative = np.concatenate([[0.0], np.cumsum(cells)])
    mass = p * float(cumulative[-1])
    cdf = cumulative / cumulative[-1]

    values = np.empty(xi.size)
    values[:-1] = p / a * integrand.value(xi[:-1])
    values[-1] = p / a * integrand.endpoint_limit()

    # lambda-weighted cells; the last one uses the antiderivative -exp(-Phi)
    weighted = 0.0
    for lo, hi in zip(xi[:-2], xi[1:-1], strict=True):
        part, _ = integrate.quad(
            lambda s: params.rate.value(a * s) * float(integrand.value(s)),
            float(lo),
            float(hi),
            epsabs=integrand.quad_tol * 1e-3,
            epsrel=integrand.quad_tol,
        )
        weighted += part
    weighted += math.exp(-float(integrand.phi(xi[-2])))
    mean_rate = p * weighted

    return DensityTable(
        a_star=a,
        p_star=p,
        grid=a * xi,
        values=values,
        cdf=cdf,
        residual=abs(params.h * p - a),
        roots=list(roots or [a]),
        mass=mass,
        mean_rate=mean_rate,
        method=method,
    )


def solve_pstar(
    params: ModelParams,
    *,
    scan_points: int | None = None,
    quad_tol: float | None = None,
    method: QuadMethod = "split",
    table_points: int = 2001,
) -> DensityTable:
    """Solve h p_a = a on [a0, h lambda_star] and tabulate the density at the largest root.

    Raises:
        GuardViolation: If kh <= alpha
        NoEquilibriumError: If the scan finds no sign change
    """
    settings = get_settings()
    scan_points = scan_points or settings.pstar_scan_points
    p_lower, p_upper = p_star_bracket(params)
    a_lo, a_hi = params.h * p_lower, params.h * p_upper

    def excess(a: float) -> float:
        return params.h * p_of_a(a, params, quad_tol, method) - a

    scan = np.linspace(a_lo, a_hi, scan_points)
    profile = [(float(a), excess(float(a))) for a in scan]
    roots: list[float] = []
    for (a_left, f_left), (a_right, f_right) in zip(profile[:-1], profile[1:], strict=True):
        if f_left == 0.0:
            roots.append(a_left)
        elif f_left * f_right < 0:
            root = optimize.brentq(excess, a_left, a_right, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200)
            roots.append(float(root))
    if profile[-1][1] == 0.0:
        roots.append(profile[-1][0])
    if not roots:
        raise NoEquilibriumError(f"h*p_a - a keeps one sign on [{a_lo:.6g}, {a_hi:.6g}]", profile=profile)
    if len(roots) > 1:
        logger.warning(f"h*p_a = a has {len(roots)} roots: {roots}; using the largest")
    a_star = max(roots)
    table = tabulate_density(a_star, params, points=table_points, quad_tol=quad_tol, method=method, roots=roots)
    logger.info(f"p* = {table.p_star:.12g} (a* = {a_star:.12g}, residual {table.residual:.2e}, mass {table.mass:.12g})")
    return table
