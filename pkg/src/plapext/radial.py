"""Radial solution family v_a(r) = int_s^r phi^{-1}(a / tau^{n-1}) dtau.

These profiles are the building blocks for the shifted barriers
psi = m + sign * v_a(|x - center|) that trap solutions near punctures.
The integrand blows up like tau^{-(n-1)/(p-1)} at tau = 0, which is
integrable exactly when p > n; the substitution tau = sigma^{(p-1)/(p-n)}
flattens that cell before adaptive quadrature is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .operator_model import OperatorSpec, QuadratureError, phi_inverse


class BarrierError(ValueError):
    """Invalid barrier parameters (e.g. base radius 0 with p <= n)."""


@dataclass(frozen=True)
class RadialBarrier:
    """Shifted radial profile offset + sign * v_a(|x - center|)."""

    spec: OperatorSpec
    a: float
    s: float = 0.0
    center: tuple = (0.0, 0.0)
    offset: float = 0.0
    sign: int = 1

    def __post_init__(self):
        if not self.a > 0.0:
            raise BarrierError(f"flux constant a must be positive, got {self.a}")
        if self.s < 0.0:
            raise BarrierError(f"base radius s must be nonnegative, got {self.s}")
        if self.sign not in (1, -1):
            raise BarrierError("sign must be +1 or -1")
        if self.s == 0.0 and self.spec.p <= self.spec.n:
            raise BarrierError(
                f"s = 0 needs p > n for an integrable profile (p = {self.spec.p}, n = {self.spec.n})"
            )


def _quad_checked(f, lo, hi, what):
    val, _, *rest = quad(f, lo, hi, epsabs=1e-300, epsrel=1e-11, limit=200, full_output=1)
    if len(rest) > 1:
        raise QuadratureError(f"{what}: quadrature did not converge on [{lo:g}, {hi:g}]: {rest[1]}")
    return val


def _profile_integral(spec: OperatorSpec, a: float, s: float, r: float) -> float:
    """int_max(s, 0)^r phi^{-1}(a / tau^{n-1}) dtau, clamped to 0 for r <= s."""
    if r <= s:
        return 0.0
    n1 = spec.n - 1
    if s > 0.0:
        f = lambda tau: phi_inverse(spec, a / tau ** n1)
        return _quad_checked(f, s, r, "radial profile")
    if spec.p <= spec.n:
        raise BarrierError(
            f"radial profile with s = 0 diverges for p <= n (p = {spec.p}, n = {spec.n})"
        )
    # tau = sigma^q with q = (p-1)/(p-n) turns the singular cell into a
    # bounded integrand (exactly constant for A == const).
    q = (spec.p - 1.0) / (spec.p - spec.n)

    def g(sig):
        if sig <= 0.0:
            raise QuadratureError("substituted integrand evaluated at the endpoint")
        return q * sig ** (q - 1.0) * phi_inverse(spec, a * sig ** (-q * n1))

    return _quad_checked(g, 0.0, r ** (1.0 / q), "radial profile (singular cell)")


def barrier_value(b: RadialBarrier, r):
    """Evaluate offset + sign * v_a(r) to relative tolerance ~1e-9.

    Values at r < s clamp to the offset (the extension by zero inside the
    base ball).
    """
    arr = np.asarray(r, dtype=float)
    flat = np.atleast_1d(arr).ravel()
    out = np.empty(flat.shape)
    for i, ri in enumerate(flat):
        out[i] = b.offset + b.sign * _profile_integral(b.spec, b.a, b.s, ri)
    out = out.reshape(np.atleast_1d(arr).shape)
    return out if arr.ndim else float(out[0])


def envelope_bounds(spec: OperatorSpec, a: float, s: float, r: float):
    """Closed-form two-sided bounds on v_a(r) from delta <= A <= L.

    Integrating (a/L)^{1/(p-1)} tau^{-(n-1)/(p-1)} and the delta analogue
    over [s, r] sandwiches the quadrature value.
    """
    if r <= s:
        return 0.0, 0.0
    alpha = (spec.n - 1.0) / (spec.p - 1.0)
    if s == 0.0 and alpha >= 1.0:
        raise BarrierError(f"s = 0 envelope diverges for p <= n (p = {spec.p}, n = {spec.n})")
    if abs(alpha - 1.0) < 1e-14:
        j = math.log(r / s)
    else:
        j = (r ** (1.0 - alpha) - (s ** (1.0 - alpha) if s > 0.0 else 0.0)) / (1.0 - alpha)
    inv_pm1 = 1.0 / (spec.p - 1.0)
    lower = (a / spec.L_bound) ** inv_pm1 * j
    upper = (a / spec.delta) ** inv_pm1 * j
    return lower, upper


def _envelope_factor(spec: OperatorSpec, s: float, r: float) -> float:
    """J(s, r) = int_s^r tau^{-(n-1)/(p-1)} dtau (the a-independent factor)."""
    alpha = (spec.n - 1.0) / (spec.p - 1.0)
    if abs(alpha - 1.0) < 1e-14:
        if s <= 0.0:
            raise BarrierError("p = n requires a positive base radius")
        return math.log(r / s)
    if s == 0.0 and alpha > 1.0:
        raise BarrierError("s = 0 requires p > n")
    return (r ** (1.0 - alpha) - (s ** (1.0 - alpha) if s > 0.0 else 0.0)) / (1.0 - alpha)


def choose_a_small(spec: OperatorSpec, R: float, eps: float, s: float = 0.0,
                   max_halvings: int = 200) -> float:
    """Deterministic flux constant with v_a(R) < eps.

    Starts from the envelope guess a0 = delta * (eps / J(s, R))^{p-1} and
    halves until the quadrature value passes; monotonicity of v_a in a
    guarantees termination.
    """
    if not R > s:
        raise BarrierError(f"need R > s, got R = {R}, s = {s}")
    if not eps > 0.0:
        raise BarrierError("eps must be positive")
    j = _envelope_factor(spec, s, R)
    a = spec.delta * (eps / j) ** (spec.p - 1.0)
    for _ in range(max_halvings):
        if _profile_integral(spec, a, s, R) < eps:
            return a
        a *= 0.5
    raise RuntimeError("halving schedule exhausted without v_a(R) < eps")


def choose_a_large(spec: OperatorSpec, r0: float, gap: float, s: float = 0.0,
                   max_doublings: int = 200) -> float:
    """Deterministic flux constant with v_a(r0) >= gap.

    Starts from the envelope guess a0 = L * (gap / J(s, r0))^{p-1} and
    doubles until the quadrature value passes.
    """
    if not r0 > s:
        raise BarrierError(f"need r0 > s, got r0 = {r0}, s = {s}")
    if not gap > 0.0:
        raise BarrierError("gap must be positive")
    j = _envelope_factor(spec, s, r0)
    a = spec.L_bound * (gap / j) ** (spec.p - 1.0)
    for _ in range(max_doublings):
        if _profile_integral(spec, a, s, r0) >= gap:
            return a
        a *= 2.0
    raise RuntimeError("doubling schedule exhausted without v_a(r0) >= gap")


def psi_value(spec: OperatorSpec, center, m_i: float, a: float, sign: int, x, s: float = 0.0):
    """Shifted barrier m_i + sign * v_a(|x - center|) at planar points x."""
    b = RadialBarrier(spec=spec, a=a, s=s, center=tuple(center), offset=m_i, sign=sign)
    pts = np.asarray(x, dtype=float)
    r = np.linalg.norm(pts - np.asarray(center, dtype=float), axis=-1)
    return barrier_value(b, r)


def radial_interpolant(spec: OperatorSpec, a: float, s: float, r_max: float,
                       n_pts: int = 512):
    """Monotone interpolant of r -> v_a(r) on [s, r_max] for bulk evaluation.

    Cumulative segment quadrature on a grid graded toward the base radius
    (where the slope blows up), then PCHIP.  Intended for evaluating barriers
    at many mesh nodes; accuracy is a few 1e-8 absolute at n_pts = 512.
    """
    if r_max <= s:
        raise BarrierError("r_max must exceed s")
    u = np.linspace(0.0, 1.0, n_pts)
    radii = s + (r_max - s) * u ** 3
    vals = np.empty(n_pts)
    vals[0] = 0.0
    for i in range(1, n_pts):
        lo, hi = radii[i - 1], radii[i]
        if lo <= s:
            vals[i] = vals[i - 1] + _profile_integral(spec, a, s, hi)
        else:
            f = lambda tau: phi_inverse(spec, a / tau ** (spec.n - 1))
            vals[i] = vals[i - 1] + _quad_checked(f, lo, hi, "radial profile segment")
    interp = PchipInterpolator(radii, vals)

    def evaluate(r):
        arr = np.asarray(r, dtype=float)
        clipped = np.clip(arr, s, r_max)
        out = np.where(arr <= s, 0.0, interp(clipped))
        return out if arr.ndim else float(out)

    return evaluate
