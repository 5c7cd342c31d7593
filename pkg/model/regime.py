"""Regime classification in the (a, b) plane."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from functools import lru_cache

from scipy import optimize

from model.params import ModelParams
from services.errors import ArgumentError, ConvergenceError, GuardViolation

logger = logging.getLogger(__name__)

ROOT_TOL = 1e-12


def _safeguarded_root(f, x0: float, bracket: tuple[float, float], fprime=None) -> float:
    """Newton (or secant) from x0, falling back to Brent bisection on the bracket."""
    lo, hi = bracket
    try:
        root = optimize.newton(f, x0, fprime=fprime, tol=1e-15, maxiter=100)
        if lo <= root <= hi and abs(f(root)) <= ROOT_TOL:
            return float(root)
    except (RuntimeError, OverflowError, ZeroDivisionError):
        pass
    logger.debug("Newton iteration left the bracket, using brentq")
    root = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * 2.220446049250313e-16, maxiter=500)
    if abs(f(root)) > ROOT_TOL * max(1.0, abs(f(lo)), abs(f(hi))):
        raise ConvergenceError(f"root residual {f(root):.3e} above tolerance")
    return float(root)


@lru_cache
def solve_y0() -> float:
    """Solution of y*e^y = 1 (about 0.567143)."""
    return _safeguarded_root(
        lambda y: y * math.exp(y) - 1.0,
        0.5,
        (0.0, 1.0),
        fprime=lambda y: (1.0 + y) * math.exp(y),
    )


def _y1_equation(y: float) -> float:
    return (y + 1.0) * math.exp(4.0 * (y + 1.0)) - (math.exp(-y) / y - 1.0) * math.exp(-2.0 * y)


@lru_cache
def solve_y1() -> float:
    """Solution of (y+1)e^{4(y+1)} = (e^{-y}/y - 1)e^{-2y} (about 0.016)."""
    return _safeguarded_root(_y1_equation, 0.016, (1e-6, 0.5))


def b_max() -> float:
    return 1.0 - 1.0 / math.sqrt(solve_y0() + 1.0)


def contraction_lhs(a: float, b: float) -> float:
    """Left side of the contraction condition; +inf when 2a + b >= 1."""
    gap = 1.0 - 2.0 * a - b
    if gap <= 0:
        return math.inf
    return (b / gap) * (1.0 + 1.0 / gap)


def exit_lhs(a: float, b: float) -> float:
    """Left side of the exit-time condition; +inf when 2a + b >= 1."""
    gap = 1.0 - 2.0 * a - b
    if gap <= 0:
        return math.inf
    ratio = b / gap
    try:
        return ratio * math.exp(ratio) * (1.0 + (1.0 / gap) * math.exp((4.0 + 2.0 * b) / gap))
    except OverflowError:
        return math.inf


def contraction_boundary(b: float) -> float:
    """Largest a satisfying the contraction condition at this b (negative beyond b_max)."""
    if b <= 0:
        raise ArgumentError(f"b must be positive, got {b}")
    return (1.0 - b) / 2.0 - 1.0 / (math.sqrt(1.0 + 4.0 * solve_y0() / b) - 1.0)


@dataclass(frozen=True)
class RegimeReport:
    """Every parameter condition of the regime diagram for one (a, b)."""

    a: float
    b: float
    delta0_unique_attractive: bool
    delta0_unstable: bool
    exponential_extinction: bool
    contraction_condition: bool
    exit_condition: bool
    contraction_value: float
    exit_value: float
    y0: float
    b_max: float
    y1: float

    def to_dict(self) -> dict:
        return asdict(self)


def classify_ab(a: float, b: float) -> RegimeReport:
    if a <= 0 or b <= 0:
        raise ArgumentError(f"a and b must be positive, got a={a}, b={b}")
    y0 = solve_y0()
    contraction_value = contraction_lhs(a, b)
    exit_value = exit_lhs(a, b)
    return RegimeReport(
        a=a,
        b=b,
        delta0_unique_attractive=a > 1.0,
        delta0_unstable=a < 1.0,
        exponential_extinction=a + b < 1.0,
        contraction_condition=2.0 * a + b < 1.0 and contraction_value <= y0,
        exit_condition=2.0 * a + b < 1.0 and exit_value <= 1.0,
        contraction_value=contraction_value,
        exit_value=exit_value,
        y0=y0,
        b_max=b_max(),
        y1=solve_y1(),
    )


def classify_regime(params: ModelParams) -> RegimeReport:
    params.require_piecewise_linear("classify_regime")
    return classify_ab(params.a, params.b)


def p_star_bracket(params: ModelParams) -> tuple[float, float]:
    """A-priori interval holding every non-zero equilibrium rate.

    Raises:
        GuardViolation: If kh <= alpha (no non-zero equilibrium is expected)
    """
    if params.kh <= params.alpha:
        raise GuardViolation(f"kh={params.kh:g} must exceed alpha={params.alpha:g}")
    lower = params.alpha / params.h * min(params.u_star, (params.kh - params.alpha) / params.lip)
    return lower, params.lambda_star
