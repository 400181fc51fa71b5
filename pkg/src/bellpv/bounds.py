"""Closed-form lower bounds on the violation probability for two qubits,
with two independent oracles: adaptive quadrature of the slice-area integral
and direct Monte Carlo over the (alpha, beta, x) cube.

Geometry: for a maximally entangled pair with two settings per side, the
correlation test reduces to a cube of coordinates alpha = a1.r, beta = a2.r_perp
and x = b1.b2, each uniform on [-1, 1].  A slice at fixed x violates when

    |alpha * sqrt(1 - x) + beta * sqrt(1 + x)| > C(eta_a, eta_b),

cutting two corner triangles out of the square.  The bound is four times the
violating volume fraction.  The threshold carries the no-click completion
with a plus sign,

    C = (2 + 2 (1 - eta_a)(1 - eta_b)) / (sqrt(2) eta_a eta_b),

which reduces to sqrt(2)/eta when either side detects perfectly and fixes
the symmetric validity edge at eta = sqrt(5 + 4 sqrt(2)) - sqrt(2) - 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad

ASYM_ETA_THRESHOLD = 1 / math.sqrt(2)
SYM_ETA_THRESHOLD = math.sqrt(5 + 4 * math.sqrt(2)) - math.sqrt(2) - 1
PERFECT_PV = 2 * (math.pi - 3)

_MC_CHUNK = 1_000_000


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested error estimate."""


class BoundMethod(Enum):
    CLOSED_ASYM = "closed-asym"
    CLOSED_SYM = "closed-sym"
    QUADRATURE = "quadrature"
    GEOMETRIC_MC = "geometric-mc"


@dataclass(frozen=True)
class BoundResult:
    eta_a: float
    eta_b: float
    value: float
    method: BoundMethod
    error_estimate: float


def _check_eta(*etas: float) -> None:
    for eta in etas:
        if not (0.0 <= eta <= 1.0):
            raise ValueError(f"efficiency {eta} outside [0, 1]")


def threshold(eta_a: float, eta_b: float) -> float:
    """Decision value C of the correlation test; no violation when C >= 2."""
    if eta_a == 0.0 or eta_b == 0.0:
        return math.inf
    return (2 + 2 * (1 - eta_a) * (1 - eta_b)) / (math.sqrt(2) * eta_a * eta_b)


def admissible_x(eta_a: float, eta_b: float) -> float:
    """Half-width of the x interval on which the slice triangles exist."""
    c = threshold(eta_a, eta_b)
    if c >= 2.0:
        return 0.0
    return math.sqrt(max(0.0, 1.0 - (c * c - 2.0) ** 2 / 4.0))


def _corner_cuts(x: float, c: float) -> tuple[float, float]:
    """Edge intersections of the violation line with the unit square."""
    return (
        (c - math.sqrt(1.0 - x)) / math.sqrt(1.0 + x),
        (c - math.sqrt(1.0 + x)) / math.sqrt(1.0 - x),
    )


def triangle_area(x: float, eta_a: float, eta_b: float) -> float:
    """Area of one violating corner triangle in the slice at fixed x.

    With cuts p_b and p_h on the square's edges the legs are 1 - p_b and
    1 - p_h, so the area is (sqrt(1+x) + sqrt(1-x) - C)^2 / (2 sqrt(1-x^2)),
    and it vanishes outside the admissible x interval.
    """
    _check_eta(eta_a, eta_b)
    if abs(x) >= 1.0:
        return 0.0
    c = threshold(eta_a, eta_b)
    gap = math.sqrt(1.0 + x) + math.sqrt(1.0 - x) - c
    if gap <= 0.0:
        return 0.0
    return gap * gap / (2.0 * math.sqrt(1.0 - x * x))


def _pv_from_threshold(c: float) -> float:
    """Exact integral of the violating volume fraction, times four.

    Antiderivative of the slice area over x in (-x0, x0):
    (2 + C^2) arcsin(x0) + 2 x0 - 4 C (sqrt(1 + x0) - sqrt(1 - x0)).
    """
    if c >= 2.0:
        return 0.0
    x0 = math.sqrt(max(0.0, 1.0 - (c * c - 2.0) ** 2 / 4.0))
    return (
        (2.0 + c * c) * math.asin(x0)
        + 2.0 * x0
        - 4.0 * c * (math.sqrt(1.0 + x0) - math.sqrt(1.0 - x0))
    )


def pv_bound_asym(eta: float) -> BoundResult:
    """Closed-form bound for eta_A = 1, eta_B = eta; zero at or below 1/sqrt(2)."""
    _check_eta(eta)
    if eta <= ASYM_ETA_THRESHOLD:
        return BoundResult(1.0, eta, 0.0, BoundMethod.CLOSED_ASYM, 0.0)
    value = _pv_from_threshold(math.sqrt(2) / eta)
    return BoundResult(1.0, eta, value, BoundMethod.CLOSED_ASYM, 1e-15)


def pv_bound_sym(eta: float) -> BoundResult:
    """Closed-form bound for eta_A = eta_B = eta; zero at or below the
    symmetric validity edge sqrt(5 + 4 sqrt(2)) - sqrt(2) - 1."""
    _check_eta(eta)
    if eta <= SYM_ETA_THRESHOLD:
        return BoundResult(eta, eta, 0.0, BoundMethod.CLOSED_SYM, 0.0)
    value = _pv_from_threshold(threshold(eta, eta))
    return BoundResult(eta, eta, value, BoundMethod.CLOSED_SYM, 1e-15)


def pv_bound_quadrature(eta_a: float, eta_b: float, max_error: float = 1e-8) -> BoundResult:
    """Bound for general efficiencies by adaptive quadrature of the slice area.

    Integrates 4 * (2 * triangle_area) / 8 over the admissible interval with
    the substitution x = sin(t), which removes the endpoint derivative
    singularity of sqrt(1 -+ x).
    """
    _check_eta(eta_a, eta_b)
    x0 = admissible_x(eta_a, eta_b)
    if x0 == 0.0:
        return BoundResult(eta_a, eta_b, 0.0, BoundMethod.QUADRATURE, 0.0)
    t0 = math.asin(x0)

    def integrand(t: float) -> float:
        return triangle_area(math.sin(t), eta_a, eta_b) * math.cos(t)

    value, err = quad(integrand, -t0, t0, epsabs=1e-12, epsrel=1e-12, limit=200)
    if err > max_error:
        raise QuadratureError(f"achieved error estimate {err:.2e} exceeds {max_error:.2e}")
    return BoundResult(eta_a, eta_b, value, BoundMethod.QUADRATURE, err)


def pv_bound_geometric_mc(eta_a: float, eta_b: float, n: int, seed: int = 0) -> BoundResult:
    """Bound by uniform sampling of the (alpha, beta, x) cube.

    Counts samples beyond the threshold line on either side and scales the
    fraction by four; the reported error estimate is one standard error.
    """
    _check_eta(eta_a, eta_b)
    if n < 1:
        raise ValueError("need at least one sample")
    c = threshold(eta_a, eta_b)
    if c >= 2.0:
        return BoundResult(eta_a, eta_b, 0.0, BoundMethod.GEOMETRIC_MC, 0.0)
    hits = 0
    remaining = n
    children = np.random.SeedSequence(seed).spawn((n + _MC_CHUNK - 1) // _MC_CHUNK)
    for child in children:
        size = min(_MC_CHUNK, remaining)
        remaining -= size
        rng = np.random.default_rng(child)
        alpha = rng.uniform(-1.0, 1.0, size)
        beta = rng.uniform(-1.0, 1.0, size)
        x = rng.uniform(-1.0, 1.0, size)
        lhs = np.abs(alpha * np.sqrt(1.0 - x) + beta * np.sqrt(1.0 + x))
        hits += int((lhs > c).sum())
    frac = hits / n
    value = 4.0 * frac
    stderr = 4.0 * math.sqrt(max(frac * (1.0 - frac), 1e-300) / n)
    return BoundResult(eta_a, eta_b, value, BoundMethod.GEOMETRIC_MC, stderr)
