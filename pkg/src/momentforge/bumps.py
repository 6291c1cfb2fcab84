"""Trapezoidal bump functions, their Gaussian pushforward moments, and the
layout that assembles the initial piecewise-linear map.

A bump of height h sits on a plateau [center-half_width, center+half_width]
with linear ramps of width `ramp` on both sides.  An instance is a sum of
m-1 such bumps with pairwise disjoint supports, mirror-symmetric about the
origin, whose plateau masses reproduce the reduced quadrature rule weights.
The pushforward of N(0,1) through an instance therefore matches the Gaussian
moments up to degree 2m-1 exactly in the ramp-free limit, and to measured
accuracy for small positive ramp width.

Moment integrals over the ramps are computed after substituting the ramp onto
the unit interval, which keeps them stable for ramp widths down to 1e-6 where
the printed closed form would cancel catastrophically; the closed form is
retained only as a flagged cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import SupportCollisionError, ValidationError
from .gaussian import (
    ReducedRule,
    _shifted_truncated_moment_terms,
    gaussian_density,
    gaussian_interval_mass,
    gaussian_moment,
    gaussian_quantile,
)

__all__ = [
    "Bump",
    "BumpInstance",
    "ClosedFormMoment",
    "bump_eval",
    "instance_eval",
    "bump_moment",
    "bump_moment_closed",
    "bump_moment_dh",
    "bump_moment_deps",
    "layout",
    "instance_pushforward_moment",
]

# Realistic relative accuracy of one truncated-moment evaluation; feeds the
# closed-form cancellation estimate.
_TERM_RELATIVE_ERROR = 1e-13

# Fixed-order Gauss-Legendre rule on [0,1] for the ramp integrals.
_GL_ORDER = 64
_gl_x, _gl_w = np.polynomial.legendre.leggauss(_GL_ORDER)
_GL_NODES = (_gl_x + 1.0) / 2.0
_GL_WEIGHTS = _gl_w / 2.0


@dataclass(frozen=True)
class Bump:
    """One trapezoid: plateau of height `height` and half-width `half_width`
    centered at `center`, with ramps of width `ramp` on each side.

    ramp = 0 is the indicator-plateau limit (closed plateau, 0 elsewhere).
    """

    center: float
    half_width: float
    height: float
    ramp: float

    def __post_init__(self):
        if self.half_width < 0 or self.ramp < 0:
            raise ValidationError("half_width and ramp must be nonnegative")
        for v in (self.center, self.half_width, self.height, self.ramp):
            if not math.isfinite(v):
                raise ValidationError("bump parameters must be finite")

    @property
    def support(self) -> tuple[float, float]:
        r = self.ramp + self.half_width
        return (self.center - r, self.center + r)

    def mirrored(self) -> "Bump":
        return replace(self, center=-self.center, height=-self.height)


def bump_eval(b: Bump, z):
    """Evaluate the trapezoid at z (scalar or array)."""
    z = np.asarray(z, dtype=float)
    s = z - b.center
    out = np.zeros_like(s)
    if b.ramp == 0.0:
        out = np.where(np.abs(s) <= b.half_width, b.height, 0.0)
        return float(out) if out.ndim == 0 else out
    w, e, h = b.half_width, b.ramp, b.height
    slope = h / e
    up = (s >= -e - w) & (s < -w)
    plateau = (s >= -w) & (s <= w)
    down = (s > w) & (s <= e + w)
    out = np.where(up, slope * (s + e + w), out)
    out = np.where(plateau, h, out)
    out = np.where(down, -slope * (s - e - w), out)
    return float(out) if out.ndim == 0 else out


def bump_moment(b: Bump, k: int) -> float:
    """E[T(g)^k] for g ~ N(0,1), T the bump.

    Plateau term is height^k times the interval mass; each ramp contributes
    ramp * int_0^1 (height*u)^k density(edge +/- ramp*u) du by Gauss-Legendre.
    """
    if k < 1:
        raise ValidationError("moment order must be >= 1")
    c, w, h, e = b.center, b.half_width, b.height, b.ramp
    plateau = h**k * gaussian_interval_mass(c - w, c + w)
    if e == 0.0 or h == 0.0:
        return plateau if h != 0.0 else 0.0
    u = _GL_NODES
    vals = (h * u) ** k * (
        gaussian_density(c - e - w + e * u) + gaussian_density(c + e + w - e * u)
    )
    return plateau + e * float(np.dot(_GL_WEIGHTS, vals))


def bump_moment_dh(b: Bump, k: int) -> float:
    """d/dh of the bump moment: (k/h) * moment, since height factors out."""
    if k < 1:
        raise ValidationError("moment order must be >= 1")
    if b.height == 0.0:
        raise ValidationError("height derivative undefined at height 0")
    return (k / b.height) * bump_moment(b, k)


def bump_moment_deps(b: Bump, k: int) -> float:
    """d/d(ramp) of the bump moment, by differentiating under the integral.

    Satisfies |result| <= |height|^k for even k (moving one edge by d(ramp)
    shifts at most d(ramp)/2 of Gaussian mass under a value bounded by h^k).
    """
    if k < 1:
        raise ValidationError("moment order must be >= 1")
    if b.ramp <= 0.0:
        raise ValidationError("ramp derivative requires a positive ramp width")
    c, w, h, e = b.center, b.half_width, b.height, b.ramp
    if h == 0.0:
        return 0.0
    u = _GL_NODES
    z_lo = c - e - w + e * u
    z_hi = c + e + w - e * u
    base = (h * u) ** k
    first = base * (gaussian_density(z_lo) + gaussian_density(z_hi))
    # d(density)/dx = -x density(x); edge points move at speed (u-1) and (1-u).
    second = base * (u - 1.0) * (
        -z_lo * gaussian_density(z_lo) + z_hi * gaussian_density(z_hi)
    )
    return float(np.dot(_GL_WEIGHTS, first + e * second))


@dataclass(frozen=True)
class ClosedFormMoment:
    """Closed-form bump moment plus a cancellation diagnostic.

    predicted_error estimates the relative precision lost to cancellation;
    reliable is False once that estimate exceeds 1e-3.
    """

    value: float
    predicted_error: float
    reliable: bool


def bump_moment_closed(b: Bump, k: int) -> ClosedFormMoment:
    """Even bump moment via the printed three-part closed form.

    Requires the bump fully right of the origin (center - ramp - half_width
    >= 0), even k, and a positive ramp.  Used only to cross-check
    bump_moment in the regime where (height/ramp)^k is representable.
    """
    if k < 2 or k % 2 != 0:
        raise ValidationError("closed form applies to even k >= 2")
    c, w, h, e = b.center, b.half_width, b.height, b.ramp
    if e <= 0.0:
        raise ValidationError("closed form requires positive ramp width")
    if c - e - w < 0.0:
        raise ValidationError("closed form requires the bump right of the origin")
    plateau = h**k * gaussian_interval_mass(c - w, c + w)
    slope = h / e
    up, up_mag = _shifted_truncated_moment_terms(
        slope, slope * (-c + e + w), k, c - e - w, c - w
    )
    down, down_mag = _shifted_truncated_moment_terms(
        -slope, slope * (c + e + w), k, c + w, c + e + w
    )
    value = plateau + up + down
    magnitude = abs(plateau) + up_mag + down_mag
    # Each binomial term carries the ~1e-13 relative error of a truncated
    # moment over a narrow interval, not bare machine epsilon; the loss is
    # that per-term error amplified by the cancellation ratio.
    predicted = magnitude * _TERM_RELATIVE_ERROR / max(abs(value), np.finfo(float).tiny)
    return ClosedFormMoment(
        value=value, predicted_error=predicted, reliable=predicted <= 1e-3
    )


@dataclass(frozen=True)
class BumpInstance:
    """Sum of m-1 disjoint bumps with shared ramp width and mirror symmetry.

    intervals holds the plateau interval endpoints (a_i, b_i) from the layout;
    gap_mass is the Gaussian mass of the region where the sum is zero in the
    ramp-free limit; nu is the moment tolerance the construction targets.
    """

    m: int
    bumps: tuple[Bump, ...]
    eps: float
    gap_mass: float
    nu: float
    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.m % 2 == 0 or self.m < 3:
            raise ValidationError("instance order m must be odd and >= 3")
        if len(self.bumps) != self.m - 1:
            raise ValidationError(f"expected {self.m - 1} bumps, got {len(self.bumps)}")
        self.validate()

    def validate(self, tol: float = 1e-9):
        """Re-check symmetry, shared ramp, and support separation."""
        n = len(self.bumps)
        for b in self.bumps:
            if abs(b.ramp - self.eps) > 0.0:
                raise ValidationError("all bumps must share the instance ramp width")
        for i in range(n // 2):
            lo, hi = self.bumps[i], self.bumps[n - 1 - i]
            if (
                abs(lo.center + hi.center) > tol
                or abs(lo.half_width - hi.half_width) > tol
                or abs(lo.height + hi.height) > tol
            ):
                raise ValidationError(
                    f"bumps {i} and {n - 1 - i} break the mirror symmetry"
                )
        for i in range(n - 1):
            gap = self.bumps[i + 1].support[0] - self.bumps[i].support[1]
            if gap <= 0.0:
                raise SupportCollisionError(i, i + 1, gap)

    @property
    def half(self) -> int:
        return (self.m - 1) // 2

    def heights(self) -> np.ndarray:
        return np.array([b.height for b in self.bumps])

    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.bumps])

    def half_widths(self) -> np.ndarray:
        return np.array([b.half_width for b in self.bumps])

    def left_heights(self) -> np.ndarray:
        return self.heights()[: self.half]

    def max_slope(self) -> float:
        if self.eps == 0.0:
            return math.inf
        return float(np.max(np.abs(self.heights()))) / self.eps

    def max_endpoint(self) -> float:
        """Largest |center| + half_width + ramp (how far the supports reach)."""
        return max(abs(b.center) + b.half_width + b.ramp for b in self.bumps)

    def support_gaps(self) -> np.ndarray:
        """Gaps between consecutive bump supports (positive while disjoint)."""
        ends = np.array([b.support[1] for b in self.bumps[:-1]])
        starts = np.array([b.support[0] for b in self.bumps[1:]])
        return starts - ends

    def with_state(self, left_heights: np.ndarray, eps: float) -> "BumpInstance":
        """New instance with updated left-half heights (mirrored) and ramp."""
        left_heights = np.asarray(left_heights, dtype=float)
        if left_heights.shape != (self.half,):
            raise ValidationError("left_heights must have length (m-1)/2")
        full = np.concatenate([left_heights, -left_heights[::-1]])
        bumps = tuple(
            replace(b, height=float(h), ramp=float(eps))
            for b, h in zip(self.bumps, full)
        )
        return replace(self, bumps=bumps, eps=float(eps))

    def breakpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Piecewise-linear breakpoints (x, f(x)) for positive ramp width."""
        if self.eps <= 0.0:
            raise ValidationError("breakpoints need a positive ramp width")
        xs, fs = [], []
        for b in self.bumps:
            lo, hi = b.support
            xs += [lo, b.center - b.half_width, b.center + b.half_width, hi]
            fs += [0.0, b.height, b.height, 0.0]
        return np.array(xs), np.array(fs)

    def eval(self, z):
        return instance_eval(self, z)


def instance_eval(inst: BumpInstance, z):
    """Evaluate the bump sum at z; 0 between and outside supports."""
    z = np.asarray(z, dtype=float)
    if inst.eps > 0.0:
        xs, fs = inst.breakpoints()
        out = np.interp(z, xs, fs, left=0.0, right=0.0)
    else:
        out = np.zeros_like(z, dtype=float)
        for b in inst.bumps:
            out = out + bump_eval(b, z)
    return float(out) if out.ndim == 0 else out


def layout(reduced: ReducedRule, eps0: float, nu: float) -> BumpInstance:
    """Assemble the initial instance from a reduced rule.

    Intervals are laid out left to right: a Gaussian mass of gap_mass/m is
    reserved before each left-half interval, interval i receives plateau mass
    weight_i, and the right half mirrors the left.  Heights come from the
    reduced rule nodes and every bump gets the shared ramp width eps0.

    Raises SupportCollisionError if eps0 makes neighboring supports touch,
    and ValidationError if the measured moment error at eps0 exceeds nu/2.
    """
    if not eps0 > 0.0:
        raise ValidationError("eps0 must be positive")
    if not 0.0 < nu < 1.0:
        raise ValidationError("nu must lie in (0,1)")
    m = reduced.m
    half = (m - 1) // 2
    gap_unit = reduced.gap_mass / m

    cum = gap_unit
    left: list[tuple[float, float]] = []
    for i in range(half):
        a = gaussian_quantile(cum)
        cum += reduced.weights[i]
        b = gaussian_quantile(cum)
        cum += gap_unit
        left.append((a, b))
    intervals = left + [(-b, -a) for (a, b) in reversed(left)]

    bumps = []
    for (a, b), h in zip(intervals, reduced.nodes):
        bumps.append(
            Bump(
                center=(a + b) / 2.0,
                half_width=(b - a) / 2.0,
                height=float(h),
                ramp=eps0,
            )
        )
    for i in range(m - 2):
        gap = bumps[i + 1].support[0] - bumps[i].support[1]
        if gap <= 0.0:
            raise SupportCollisionError(i, i + 1, gap)

    inst = BumpInstance(
        m=m,
        bumps=tuple(bumps),
        eps=eps0,
        gap_mass=reduced.gap_mass,
        nu=nu,
        intervals=tuple(intervals),
    )
    worst = max(
        abs(instance_pushforward_moment(inst, k) - gaussian_moment(k))
        for k in range(1, m + 1)
    )
    if worst >= nu / 2.0:
        raise ValidationError(
            f"moment error {worst:.3e} at eps0={eps0:.1e} exceeds nu/2 = {nu / 2:.3e}"
        )
    return inst


def instance_pushforward_moment(inst: BumpInstance, k: int) -> float:
    """E[x^k] for x ~ instance(N(0,1)): bump moments plus zero off-support."""
    if k < 1:
        raise ValidationError("moment order must be >= 1")
    return float(sum(bump_moment(b, k) for b in inst.bumps))
