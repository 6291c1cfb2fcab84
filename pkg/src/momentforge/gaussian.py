"""Standard-Gaussian primitives and discrete moment-matching rules.

Everything downstream leans on this module: the density/CDF/quantile trio,
double-factorial arithmetic, the antiderivative polynomials behind truncated
Gaussian moments, and the symmetric quadrature rules whose node/weight pairs
reproduce the Gaussian moments E[g^k] = (k-1)!! (even k) exactly up to degree
2m-1.  The reduced rule drops the central node at 0 and records the orphaned
weight as "gap mass"; that mass becomes the region where the piecewise-linear
construction is identically zero.

All functions are pure; rules are frozen after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammainc, gammaincc, gammaln, ndtr, ndtri

from .errors import ValidationError

__all__ = [
    "QuadratureRule",
    "ReducedRule",
    "gaussian_density",
    "gaussian_cdf",
    "gaussian_quantile",
    "gaussian_interval_mass",
    "gaussian_moment",
    "double_factorial",
    "double_fact_falling",
    "p_poly",
    "truncated_moment",
    "shifted_truncated_moment",
    "hermite_rule",
    "reduce_rule",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)

# Above this the p_k antiderivative form loses more than ~1e-10 relative to
# cancellation on central intervals; switch to the incomplete-gamma form.
_PK_STABLE_MAX_ORDER = 12
# Above this, fall back to adaptive quadrature of x^k * density.
_CLOSED_FORM_MAX_ORDER = 20


def gaussian_density(x, variance: float = 1.0):
    """Density of N(0, variance) at x (scalar or array)."""
    if not variance > 0.0:
        raise ValidationError(f"variance must be positive, got {variance}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("non-finite input to gaussian_density")
    out = np.exp(-x * x / (2.0 * variance)) / (math.sqrt(variance) * SQRT_2PI)
    return float(out) if out.ndim == 0 else out


def gaussian_cdf(x):
    """Standard normal CDF, accurate in both tails."""
    x = np.asarray(x, dtype=float)
    out = ndtr(x)
    return float(out) if out.ndim == 0 else out


def gaussian_quantile(p: float) -> float:
    """Inverse standard normal CDF with one Newton polish step."""
    if not 0.0 < p < 1.0:
        raise ValidationError(f"quantile requires p in (0,1), got {p}")
    x = float(ndtri(p))
    # One Newton step: phi(x) is safely nonzero for any p representable in (0,1).
    x -= (float(ndtr(x)) - p) / gaussian_density(x)
    return x


def gaussian_interval_mass(a: float, b: float) -> float:
    """P(a <= g <= b) for g ~ N(0,1), stable when both endpoints sit in one tail."""
    if a > b:
        raise ValidationError(f"interval endpoints out of order: {a} > {b}")
    if a >= 0.0:
        return float(ndtr(-a) - ndtr(-b))
    return float(ndtr(b) - ndtr(a))


def double_factorial(n: int) -> int:
    """n!! for n >= -1, with (-1)!! = 0!! = 1."""
    if n < -1:
        raise ValidationError(f"double factorial undefined for n = {n}")
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def gaussian_moment(k: int) -> float:
    """E[g^k] for g ~ N(0,1): (k-1)!! for even k, 0 for odd."""
    if k < 0:
        raise ValidationError("moment order must be nonnegative")
    return float(double_factorial(k - 1)) if k % 2 == 0 else 0.0


def double_fact_falling(m: int, i: int) -> int:
    """Falling double factorial m(m-2)...(m-2i+2); equals 1 when i = 0."""
    if m < 0 or i < 0:
        raise ValidationError("arguments must be nonnegative")
    if i >= 1 and m - 2 * i + 2 < 0:
        raise ValidationError(f"falling product runs negative: m={m}, i={i}")
    out = 1
    for j in range(i):
        out *= m - 2 * j
    return out


def p_poly(k: int, x: float) -> float:
    """Antiderivative polynomial for truncated Gaussian moments.

    p_k(x) = sum_{i=0}^{floor((k-1)/2)} (k-1)^{falling i} x^{k-1-2i}, and
    d/dx[-p_k(x) density(x)] = (x^k - gaussian_moment(k)) density(x).
    p_0 is the empty sum, identically 0.
    """
    if k < 0:
        raise ValidationError("p_poly order must be nonnegative")
    if not math.isfinite(x):
        raise ValidationError("non-finite input to p_poly")
    if k == 0:
        return 0.0
    total = 0.0
    for i in range((k - 1) // 2 + 1):
        total += double_fact_falling(k - 1, i) * x ** (k - 1 - 2 * i)
    return total


def _pk_boundary_term(k: int, x: float) -> float:
    """p_k(x) * density(x), with the correct 0 limit at infinite x."""
    if math.isinf(x):
        return 0.0
    return p_poly(k, x) * gaussian_density(x)


def _truncated_moment_pk(k: int, a: float, b: float) -> tuple[float, float]:
    """Closed form via p_k; returns (value, magnitude of largest term)."""
    term_b = _pk_boundary_term(k, b)
    term_a = _pk_boundary_term(k, a)
    if k % 2 == 1:
        return -(term_b - term_a), max(abs(term_b), abs(term_a))
    lead = double_factorial(k - 1) * _interval_mass_clipped(a, b)
    return lead - (term_b - term_a), max(abs(lead), abs(term_b), abs(term_a))


def _interval_mass_clipped(a: float, b: float) -> float:
    return gaussian_interval_mass(max(a, -40.0), min(b, 40.0)) if a <= b else 0.0


def _truncated_moment_gamma(k: int, lo: float, hi: float) -> float:
    """E[g^k 1{lo <= g <= hi}] for 0 <= lo <= hi via regularized gammas.

    Substituting t = x^2/2 turns the integral into an incomplete-gamma
    difference; the lower tail uses the series branch and the upper tail the
    continued-fraction branch, so the difference stays relatively accurate
    where the p_k form cancels catastrophically.
    """
    s = (k + 1) / 2.0
    t_lo = lo * lo / 2.0
    t_hi = math.inf if math.isinf(hi) else hi * hi / 2.0
    scale = math.exp(((k - 1) / 2.0) * math.log(2.0) + gammaln(s)) / SQRT_2PI
    if t_hi <= s + 1.0:
        return scale * (gammainc(s, t_hi) - gammainc(s, t_lo))
    return scale * (gammaincc(s, t_lo) - (0.0 if math.isinf(t_hi) else gammaincc(s, t_hi)))


def _truncated_moment_split(k: int, a: float, b: float) -> float:
    """Gamma-form moment on [a, b], split at 0 to exploit symmetry.

    For odd k straddling zero the symmetric part cancels analytically, so
    only the one-sided remainder is evaluated.
    """
    if a >= 0.0:
        return _truncated_moment_gamma(k, a, b)
    if b <= 0.0:
        return (-1.0) ** k * _truncated_moment_gamma(k, -b, -a)
    if k % 2 == 1:
        lo, hi = min(-a, b), max(-a, b)
        sign = 1.0 if b >= -a else -1.0
        return sign * _truncated_moment_gamma(k, lo, hi)
    return _truncated_moment_gamma(k, 0.0, -a) + _truncated_moment_gamma(k, 0.0, b)


def truncated_moment(k: int, a: float, b: float) -> float:
    """E[g^k 1{a <= g <= b}] for g ~ N(0,1); a <= b, infinite endpoints allowed.

    Uses the p_k antiderivative form while it is numerically safe, the
    incomplete-gamma form when double-factorial growth would cancel, and
    adaptive quadrature beyond order 20.
    """
    if k < 0:
        raise ValidationError("moment order must be nonnegative")
    if math.isnan(a) or math.isnan(b) or a > b:
        raise ValidationError(f"invalid truncation interval [{a}, {b}]")
    if a == b:
        return 0.0
    if k == 0:
        return _interval_mass_clipped(a, b)
    if k <= _PK_STABLE_MAX_ORDER:
        value, magnitude = _truncated_moment_pk(k, a, b)
        # Cancellation estimate: if the surviving value is many digits below
        # the largest intermediate term, recompute through the gamma route.
        if abs(value) > 1e-6 * magnitude:
            return value
        return _truncated_moment_split(k, a, b)
    if k <= _CLOSED_FORM_MAX_ORDER:
        return _truncated_moment_split(k, a, b)
    lo, hi = max(a, -45.0), min(b, 45.0)
    if lo >= hi:
        return 0.0
    value, _ = integrate.quad(
        lambda x: x**k * gaussian_density(x),
        lo,
        hi,
        points=[0.0] if lo < 0.0 < hi else None,
        epsabs=1e-300,
        epsrel=1e-12,
        limit=400,
    )
    return value


def shifted_truncated_moment(c: float, dshift: float, k: int, a: float, b: float) -> float:
    """E[(c*g + dshift)^k 1{a <= g <= b}] for even k, by binomial expansion."""
    if k < 0 or k % 2 != 0:
        raise ValidationError(f"shifted moment requires even k, got {k}")
    if math.isnan(a) or math.isnan(b) or a > b:
        raise ValidationError(f"invalid truncation interval [{a}, {b}]")
    total = 0.0
    for i in range(k + 1):
        total += math.comb(k, i) * c**i * dshift ** (k - i) * truncated_moment(i, a, b)
    return total


def _shifted_truncated_moment_terms(
    c: float, dshift: float, k: int, a: float, b: float
) -> tuple[float, float]:
    """Like shifted_truncated_moment but also returns the summed |term| mass."""
    total = 0.0
    magnitude = 0.0
    for i in range(k + 1):
        term = math.comb(k, i) * c**i * dshift ** (k - i) * truncated_moment(i, a, b)
        total += term
        magnitude += abs(term)
    return total, magnitude


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric m-point rule reproducing Gaussian moments up to degree 2m-1.

    nodes are ascending, weights are positive and sum to 1; for odd m the
    central node is pinned to exactly 0.
    """

    m: int
    nodes: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if self.m != len(self.nodes) or self.m != len(self.weights):
            raise ValidationError("rule arrays must have length m")
        nodes = np.array(self.nodes)
        weights = np.array(self.weights)
        if np.any(np.diff(nodes) <= 0):
            raise ValidationError("nodes must be strictly ascending")
        if np.any(weights < 0):
            raise ValidationError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValidationError("weights must sum to 1")
        if np.max(np.abs(nodes + nodes[::-1])) > 1e-12:
            raise ValidationError("nodes must be symmetric about 0")

    def moment(self, k: int) -> float:
        """Discrete moment sum_i weight_i * node_i^k.

        Summed in mirror pairs so odd moments vanish exactly (nodes and
        weights are exactly symmetric by construction).
        """
        vals = np.array(self.weights) * np.array(self.nodes) ** k
        return float(0.5 * np.sum(vals + vals[::-1]))

    def node_separation(self) -> float:
        """Smallest gap between adjacent nodes."""
        return float(np.min(np.diff(np.array(self.nodes))))


@dataclass(frozen=True)
class ReducedRule:
    """Parent rule with the central zero node removed.

    gap_mass is the removed central weight; discrete moments for k >= 1 are
    unchanged because the removed node sits at 0.
    """

    m: int
    nodes: tuple[float, ...]
    weights: tuple[float, ...]
    gap_mass: float

    def __post_init__(self):
        if len(self.nodes) != self.m - 1 or len(self.weights) != self.m - 1:
            raise ValidationError("reduced rule must have m-1 entries")
        if not 0.0 < self.gap_mass < 1.0:
            raise ValidationError("gap mass must lie in (0,1)")

    def moment(self, k: int) -> float:
        vals = np.array(self.weights) * np.array(self.nodes) ** k
        return float(0.5 * np.sum(vals + vals[::-1]))


def hermite_rule(m: int) -> QuadratureRule:
    """m-point Gaussian quadrature rule for N(0,1), m odd in [3, 41].

    Computed by diagonalizing the symmetric tridiagonal Jacobi matrix of the
    probabilists' Hermite recurrence (off-diagonal sqrt(1..m-1)); weights are
    squared first eigenvector components.  Nodes are exactly symmetrized and
    the central node pinned to 0 so the reduced rule can peel it off.
    """
    if m % 2 == 0 or not 3 <= m <= 41:
        raise ValidationError(f"rule order must be odd in [3, 41], got {m}")
    eigvals, eigvecs = eigh_tridiagonal(np.zeros(m), np.sqrt(np.arange(1.0, m)))
    nodes = np.asarray(eigvals, dtype=float)
    weights = eigvecs[0, :] ** 2
    order = np.argsort(nodes)
    nodes, weights = nodes[order], weights[order]
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    nodes[(m - 1) // 2] = 0.0
    weights /= weights.sum()
    return QuadratureRule(m=m, nodes=tuple(nodes), weights=tuple(weights))


def reduce_rule(rule: QuadratureRule, tol: float = 1e-12) -> ReducedRule:
    """Drop the central node/weight of an odd rule; record its mass."""
    if rule.m % 2 == 0:
        raise ValidationError("reduction requires an odd rule order")
    center = (rule.m - 1) // 2
    if abs(rule.nodes[center]) > tol:
        raise ValidationError(
            f"central node is {rule.nodes[center]:.3e}, expected 0 within {tol:.0e}"
        )
    nodes = rule.nodes[:center] + rule.nodes[center + 1 :]
    weights = rule.weights[:center] + rule.weights[center + 1 :]
    return ReducedRule(
        m=rule.m, nodes=nodes, weights=weights, gap_mass=rule.weights[center]
    )
