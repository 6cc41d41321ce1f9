"""Scalar profile and flux model for div(|grad u|^{p-2} A(|grad u|) grad u).

The nonlinearity A enters every computation through the scalar profile
phi(t) = t^{p-1} A(t), its inverse, and the primitive G(t) = int_0^t phi(s) ds.
Three parametric families are supported so that the bounds delta <= A <= L are
computable: a constant, the rational family a + b*t/(1+t), and a tabulated
family with shape-preserving (PCHIP) interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq


class OperatorError(ValueError):
    """A nonlinearity family violates the structural hypotheses."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge."""


# ---------------------------------------------------------------------------
# A families

@dataclass(frozen=True)
class ConstantFamily:
    """A(t) = value."""

    value: float
    kind: str = field(default="constant", init=False)

    def A(self, t):
        t = np.asarray(t, dtype=float)
        return np.full(t.shape, self.value) if t.ndim else float(self.value)

    def dA(self, t):
        t = np.asarray(t, dtype=float)
        return np.zeros(t.shape) if t.ndim else 0.0

    def bounds(self):
        return self.value, self.value

    def params(self):
        return {"value": self.value}


@dataclass(frozen=True)
class RationalFamily:
    """A(t) = a + b * t / (1 + t); monotone with range between a and a + b."""

    a: float
    b: float
    kind: str = field(default="rational", init=False)

    def A(self, t):
        t = np.asarray(t, dtype=float)
        out = self.a + self.b * t / (1.0 + t)
        return out if out.ndim else float(out)

    def dA(self, t):
        t = np.asarray(t, dtype=float)
        out = self.b / (1.0 + t) ** 2
        return out if out.ndim else float(out)

    def bounds(self):
        lo = min(self.a, self.a + self.b)
        hi = max(self.a, self.a + self.b)
        return lo, hi

    def params(self):
        return {"a": self.a, "b": self.b}


@dataclass(frozen=True)
class TableFamily:
    """Tabulated A with PCHIP interpolation, held constant past the last knot.

    Knots must start at t = 0; PCHIP preserves the monotone pieces of the
    table, so the sampled extrema equal the data extrema.
    """

    knots: tuple
    values: tuple
    kind: str = field(default="table", init=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if knots.ndim != 1 or knots.shape != vals.shape or knots.size < 2:
            raise OperatorError("table family needs matching 1-D knots/values")
        if knots[0] != 0.0:
            raise OperatorError("table family must start at t = 0")
        if np.any(np.diff(knots) <= 0.0):
            raise OperatorError("table knots must be strictly increasing")
        object.__setattr__(self, "knots", tuple(knots))
        object.__setattr__(self, "values", tuple(vals))
        object.__setattr__(self, "_interp", PchipInterpolator(knots, vals))
        object.__setattr__(self, "_dinterp", self._interp.derivative())

    def A(self, t):
        t = np.asarray(t, dtype=float)
        clipped = np.minimum(t, self.knots[-1])
        out = self._interp(clipped)
        return out if out.ndim else float(out)

    def dA(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t >= self.knots[-1], 0.0, self._dinterp(np.minimum(t, self.knots[-1])))
        return out if out.ndim else float(out)

    def bounds(self):
        sample = np.union1d(np.linspace(0.0, self.knots[-1], 4096), self.knots)
        vals = self._interp(sample)
        return float(np.min(vals)), float(np.max(vals))

    def params(self):
        return {"knots": list(self.knots), "values": list(self.values)}


_FAMILY_KINDS = {"constant": ConstantFamily, "rational": RationalFamily, "table": TableFamily}


def family_from_dict(d: dict):
    try:
        kind = d["kind"]
        cls = _FAMILY_KINDS[kind]
    except (KeyError, TypeError) as exc:
        raise OperatorError(f"unknown A family descriptor: {d!r}") from exc
    params = {k: v for k, v in d.items() if k != "kind"}
    if kind == "table":
        params = {"knots": tuple(params["knots"]), "values": tuple(params["values"])}
    try:
        return cls(**params)
    except TypeError as exc:
        raise OperatorError(f"bad parameters for {kind} family: {params!r}") from exc


# ---------------------------------------------------------------------------
# Operator spec

@dataclass(frozen=True)
class OperatorSpec:
    """Validated operator div(|grad u|^{p-2} A(|grad u|) grad u)."""

    p: float
    n: int
    family: object
    delta: float
    L_bound: float


def make_operator(p: float, n: int, family, grid_points: int = 1201) -> OperatorSpec:
    """Build and validate an operator spec.

    The family may be a family instance or a JSON-style descriptor dict.
    Validation samples a log-spaced grid: A must stay within its positive
    bounds and t -> t^{p-1} A(t) must be strictly increasing.
    """
    if not p > 1.0:
        raise OperatorError(f"exponent p must exceed 1, got {p}")
    if int(n) != n or n < 2:
        raise OperatorError(f"dimension n must be an integer >= 2, got {n}")
    if isinstance(family, dict):
        family = family_from_dict(family)

    a0 = float(np.asarray(family.A(0.0)))
    if not a0 > 0.0:
        raise OperatorError(f"A(0) must be positive, got {a0}")
    delta, L = family.bounds()
    if not delta > 0.0:
        raise OperatorError(
            f"A must be bounded below by a positive constant (inf A = {delta:g}); "
            "otherwise t^{p-1} A(t) stays bounded and its inverse does not cover [0, inf)"
        )
    if not math.isfinite(L):
        raise OperatorError("A must be bounded above")

    grid = np.concatenate([[0.0], np.logspace(-6.0, 6.0, max(grid_points, 1000))])
    avals = np.asarray(family.A(grid))
    tol = 1e-12 * max(1.0, L)
    if np.any(avals <= 0.0):
        t_bad = grid[int(np.argmax(avals <= 0.0))]
        raise OperatorError(f"A(t) <= 0 at t = {t_bad:g}")
    if np.any(avals < delta - tol) or np.any(avals > L + tol):
        raise OperatorError("sampled A leaves its declared [delta, L] envelope")

    tpos = grid[1:]
    phi_vals = tpos ** (p - 1.0) * avals[1:]
    bad = np.flatnonzero(np.diff(phi_vals) <= 0.0)
    if bad.size:
        i = int(bad[0])
        raise OperatorError(
            "t^{p-1} A(t) is not strictly increasing: "
            f"phi({tpos[i]:g}) = {phi_vals[i]:g} >= phi({tpos[i + 1]:g}) = {phi_vals[i + 1]:g}"
        )

    return OperatorSpec(p=float(p), n=int(n), family=family, delta=float(delta), L_bound=float(L))


def spec_to_dict(spec: OperatorSpec) -> dict:
    return {"p": spec.p, "n": spec.n, "family": {"kind": spec.family.kind, **spec.family.params()}}


def spec_from_dict(d: dict) -> OperatorSpec:
    try:
        return make_operator(d["p"], d["n"], d["family"])
    except KeyError as exc:
        raise OperatorError(f"operator descriptor missing field: {exc}") from exc


def with_exponent(spec: OperatorSpec, p: float) -> OperatorSpec:
    """Same nonlinearity with a different exponent (used by continuation in p)."""
    return OperatorSpec(p=float(p), n=spec.n, family=spec.family, delta=spec.delta, L_bound=spec.L_bound)


# ---------------------------------------------------------------------------
# Scalar profile

def phi(spec: OperatorSpec, t):
    """phi(t) = t^{p-1} A(t); strictly increasing with phi(0) = 0."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError("phi requires t >= 0")
    out = arr ** (spec.p - 1.0) * np.asarray(spec.family.A(arr))
    return out if arr.ndim else float(out)


def dphi(spec: OperatorSpec, t):
    """phi'(t) = (p-1) t^{p-2} A(t) + t^{p-1} A'(t), for t > 0."""
    arr = np.asarray(t, dtype=float)
    out = (spec.p - 1.0) * arr ** (spec.p - 2.0) * np.asarray(spec.family.A(arr)) \
        + arr ** (spec.p - 1.0) * np.asarray(spec.family.dA(arr))
    return out if arr.ndim else float(out)


def phi_inverse(spec: OperatorSpec, y: float, max_expansions: int = 60) -> float:
    """Invert phi to relative tolerance ~1e-13.

    The envelope delta t^{p-1} <= phi(t) <= L t^{p-1} brackets the root in
    [(y/L)^{1/(p-1)}, (y/delta)^{1/(p-1)}]; a Brent solve refines it.  The
    constant family is inverted in closed form.
    """
    y = float(y)
    if y < 0.0:
        raise ValueError("phi_inverse requires y >= 0")
    if y == 0.0:
        return 0.0
    inv_pm1 = 1.0 / (spec.p - 1.0)
    if isinstance(spec.family, ConstantFamily):
        return (y / spec.family.value) ** inv_pm1

    lo = (y / spec.L_bound) ** inv_pm1
    hi = (y / spec.delta) ** inv_pm1
    f = lambda t: phi(spec, t) - y
    k = 0
    while f(lo) > 0.0:
        lo *= 0.5
        k += 1
        if k > max_expansions:
            raise OperatorError(f"could not bracket phi_inverse({y:g}) from below")
    k = 0
    while f(hi) < 0.0:
        hi *= 2.0
        k += 1
        if k > max_expansions:
            raise OperatorError(f"phi_inverse({y:g}): y appears to exceed the range of phi")
    if lo == hi:
        return lo
    return float(brentq(f, lo, hi, rtol=1e-15, xtol=1e-300, maxiter=300))


def flux(spec: OperatorSpec, eta):
    """Vector flux |eta|^{p-2} A(|eta|) eta; zero at eta = 0."""
    arr = np.asarray(eta, dtype=float)
    t = np.linalg.norm(arr, axis=-1)
    tpos = np.where(t > 0.0, t, 1.0)
    coef = np.where(t > 0.0, tpos ** (spec.p - 2.0) * np.asarray(spec.family.A(tpos)), 0.0)
    out = coef[..., None] * arr
    return out if arr.ndim > 1 else np.asarray(out, dtype=float)


def energy_density(spec: OperatorSpec, t):
    """G(t) = int_0^t phi(s) ds, the convex primitive with G' = phi.

    Closed form value * t^p / p for the constant family; adaptive quadrature
    otherwise, raising QuadratureError with the offending interval on failure.
    """
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError("energy_density requires t >= 0")
    if isinstance(spec.family, ConstantFamily):
        out = spec.family.value * arr ** spec.p / spec.p
        return out if arr.ndim else float(out)

    flat = np.atleast_1d(arr).ravel()
    out = np.empty(flat.shape)
    integrand = lambda s: phi(spec, s)
    for i, ti in enumerate(flat):
        if ti == 0.0:
            out[i] = 0.0
            continue
        val, _, info, *rest = quad(integrand, 0.0, ti, epsabs=1e-13, epsrel=1e-11,
                                   limit=200, full_output=1)
        if rest:
            raise QuadratureError(f"G quadrature did not converge on [0, {ti:g}]: {rest[0]}")
        out[i] = val
    out = out.reshape(np.atleast_1d(arr).shape)
    return out if arr.ndim else float(out[0])


# ---------------------------------------------------------------------------
# Sampled verification of the structural flux inequalities

@dataclass(frozen=True)
class DamascelliReport:
    """Empirical constants for the flux difference/monotonicity inequalities."""

    c1_est: float
    c2_est: float
    gamma_est: float
    Gamma_est: float
    sample_count: int
    worst_case_pair: tuple

    def to_dict(self) -> dict:
        return {
            "c1_est": self.c1_est,
            "c2_est": self.c2_est,
            "gamma_est": self.gamma_est,
            "Gamma_est": self.Gamma_est,
            "sample_count": self.sample_count,
            "worst_case_pair": [list(self.worst_case_pair[0]), list(self.worst_case_pair[1])],
        }


def verify_damascelli(spec: OperatorSpec, sample_count: int, seed: int) -> DamascelliReport:
    """Sample gradient pairs and estimate the tightest flux constants.

    Pairs are drawn with log-uniform magnitudes in [1e-4, 1e4] and uniform
    directions; each sampled vector is also paired against zero so that the
    pointwise growth and coercivity bounds follow from the estimated
    constants.  Any nonpositive monotonicity ratio fails the run with the
    witness pair.
    """
    if spec.p < 2.0:
        raise OperatorError(f"damascelli sampling requires p >= 2, got p = {spec.p}")
    if sample_count < 1:
        raise OperatorError("sample_count must be positive")

    rng = np.random.default_rng(seed)
    mags = 10.0 ** rng.uniform(-4.0, 4.0, size=(2, sample_count))
    angs = rng.uniform(0.0, 2.0 * np.pi, size=(2, sample_count))
    eta1 = (mags[0] * np.array([np.cos(angs[0]), np.sin(angs[0])])).T
    eta2 = (mags[1] * np.array([np.cos(angs[1]), np.sin(angs[1])])).T

    f1 = flux(spec, eta1)
    f2 = flux(spec, eta2)
    d = eta2 - eta1
    nd = np.linalg.norm(d, axis=1)
    tsum = mags[0] + mags[1]
    keep = nd > 0.0
    denom = tsum[keep] ** (spec.p - 2.0) * nd[keep]
    diff = f2[keep] - f1[keep]
    ratio5 = np.linalg.norm(diff, axis=1) / denom
    ratio6 = np.einsum("ij,ij->i", diff, d[keep]) / (denom * nd[keep])

    if np.any(ratio6 <= 0.0):
        i = int(np.argmin(ratio6))
        raise OperatorError(
            "flux monotonicity fails at the sampled pair "
            f"eta1 = {eta1[keep][i].tolist()}, eta2 = {eta2[keep][i].tolist()}"
        )

    # Zero-paired samples: both difference ratios collapse to A(|eta|).
    all_mags = mags.ravel()
    zero_ratio = np.asarray(spec.family.A(all_mags))

    c1_est = float(max(ratio5.max(), zero_ratio.max()))
    c2_est = float(min(ratio6.min(), zero_ratio.min()))
    if not c2_est > 0.0:
        i = int(np.argmin(zero_ratio))
        raise OperatorError(f"coercivity fails against zero at |eta| = {all_mags[i]:g}")

    if ratio5.size and ratio5.max() >= zero_ratio.max():
        i = int(np.argmax(ratio5))
        worst = (tuple(eta1[keep][i]), tuple(eta2[keep][i]))
    else:
        i = int(np.argmax(zero_ratio))
        worst = ((0.0, 0.0), tuple((all_mags[i], 0.0)))

    # The five inequalities must hold at every sample with the reported
    # constants (tiny relative slack for rounding).
    slack = 1.0 + 1e-9
    checks = [
        np.all(np.linalg.norm(diff, axis=1) <= c1_est * denom * slack),
        np.all(np.einsum("ij,ij->i", diff, d[keep]) >= c2_est * denom * nd[keep] / slack),
        np.all(np.linalg.norm(np.vstack([f1, f2]), axis=1) <= c1_est * all_mags ** (spec.p - 1.0) * slack),
        np.all(np.einsum("ij,ij->i", np.vstack([f1, f2]), np.vstack([eta1, eta2]))
               >= c2_est * all_mags ** spec.p / slack),
        np.all(np.einsum("ij,ij->i", diff, d[keep]) >= c2_est * nd[keep] ** spec.p / slack),
    ]
    if not all(checks):
        failed = [k for k, ok in enumerate(checks, start=1) if not ok]
        raise OperatorError(f"sampled flux inequality check(s) {failed} failed")

    gamma_est, Gamma_est = _sampled_ellipticity(spec, np.vstack([eta1, eta2]))

    return DamascelliReport(c1_est=c1_est, c2_est=c2_est, gamma_est=gamma_est,
                            Gamma_est=Gamma_est, sample_count=int(sample_count),
                            worst_case_pair=worst)


def _sampled_ellipticity(spec: OperatorSpec, etas: np.ndarray, max_points: int = 2000):
    """Finite-difference Jacobian bounds of the flux map at sampled gradients."""
    pts = etas[:max_points]
    t = np.linalg.norm(pts, axis=1)
    step = 1e-6 * t
    jac = np.empty((len(pts), 2, 2))
    for axis in range(2):
        e = np.zeros((len(pts), 2))
        e[:, axis] = step
        jac[:, :, axis] = (flux(spec, pts + e) - flux(spec, pts - e)) / (2.0 * step)[:, None]

    scale = t ** (spec.p - 2.0)
    Gamma_est = float(np.max(np.abs(jac).sum(axis=(1, 2)) / scale))
    # Smallest eigenvalue of the symmetrized 2x2 Jacobian, in closed form.
    sym = 0.5 * (jac + np.transpose(jac, (0, 2, 1)))
    tr = sym[:, 0, 0] + sym[:, 1, 1]
    det = sym[:, 0, 0] * sym[:, 1, 1] - sym[:, 0, 1] * sym[:, 1, 0]
    disc = np.sqrt(np.maximum(tr * tr / 4.0 - det, 0.0))
    lam_min = tr / 2.0 - disc
    gamma_est = float(np.min(lam_min / scale))
    return gamma_est, Gamma_est
