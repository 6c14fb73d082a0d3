"""Radial profiles: real functions of r that can be evaluated on jets.

Every profile is a callable mapping a Jet in r to a Jet, so that values and the
first two derivatives are available wherever curvature is needed.
"""

import numpy as np
from scipy.interpolate import CubicSpline

from . import jet as J
from .jet import Jet, chain


def zero(x):
    return Jet.constant(0.0, x)


def evaluate(profile, r):
    """Value, first and second derivative of a profile at radii r."""
    x = Jet.variable(np.atleast_1d(np.asarray(r, dtype=float)))
    out = profile(x)
    return out.v, out.d, out.dd


def where(mask, a, b):
    return Jet(np.where(mask, a.v, b.v), np.where(mask, a.d, b.d), np.where(mask, a.dd, b.dd))


class ChebProfile:
    """Nodal values on a ChebGrid, interpolated spectrally (values and two derivatives)."""

    def __init__(self, grid, values):
        self.grid = grid
        self.values = np.array(values, dtype=float)
        self.d1 = grid.D @ self.values
        self.d2 = grid.D2 @ self.values
        self._i0 = grid.interpolant(self.values)
        self._i1 = grid.interpolant(self.d1, odd=True)
        self._i2 = grid.interpolant(self.d2)

    def __call__(self, x):
        r = np.clip(x.v, 0.0, self.grid.L)
        return chain(x, self._i0(r), self._i1(r), self._i2(r))


class SplineProfile:
    """Not-a-knot cubic spline through nodes; derivatives from the spline coefficients."""

    def __init__(self, r, values):
        self.r = np.asarray(r, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.spline = CubicSpline(self.r, self.values, bc_type="not-a-knot")

    def __call__(self, x):
        r = np.clip(x.v, self.r[0], self.r[-1])
        s = self.spline
        return chain(x, s(r), s(r, 1), s(r, 2))


class Weighted:
    """sech(r)^k times an inner profile; keeps relative precision in an exponential tail."""

    def __init__(self, inner, k):
        self.inner = inner
        self.k = float(k)
        self.grid = getattr(inner, "grid", None)

    def __call__(self, x):
        return self.inner(x) * J.exp(self.k * J.log_sech(x))


def log_sech_values(r):
    r = np.abs(np.asarray(r, dtype=float))
    return -r - np.log1p(np.exp(-2.0 * r)) + np.log(2.0)


# ---------------------------------------------------------------------------
# closed-form families

def sech_power(amplitude, power):
    """w(r) = A sech(r)^k: even, smooth at the origin, decays at rate k."""
    A, k = float(amplitude), float(power)

    def w(x):
        return A * J.exp(k * J.log_sech(x))
    return w


def gaussian(amplitude, width):
    """w(r) = A exp(-r^2 / width^2)."""
    A, w2 = float(amplitude), float(width) ** 2

    def g(x):
        return A * J.exp(-1.0 * J.square(x) / w2)
    return g


def shell(center, width):
    """Even bump that vanishes to second order at r = 0 and equals exp(-(r-c)^2/w^2) up to exp(-(r+c)^2/w^2) terms.

    exp(-(r-c)^2/w^2) - 2 exp(-(r^2+c^2)/w^2) + exp(-(r+c)^2/w^2), factored so that
    no branch overflows for large c.
    """
    c, w2 = float(center), float(width) ** 2

    def g(x):
        return J.exp(-1.0 * J.square(x - c) / w2) * J.square(J.expm1(x * (-2.0 * c / w2)))
    return g


def smooth_step(x0, width):
    """Odd smooth step rising from 0 at r = 0 to 1 at infinity, and its derivative."""
    x0, w = float(x0), float(width)

    def chi(x):
        return 0.5 * (J.tanh((x - x0) / w) + J.tanh((x + x0) / w))

    def dchi(x):
        return (0.5 / w) * (J.square(J.sech((x - x0) / w)) + J.square(J.sech((x + x0) / w)))
    return chi, dchi


def smooth_step_gap(x0, width):
    """1 - chi for the step of smooth_step, without cancellation far out."""
    x0, w = float(x0), float(width)

    def one_minus_tanh(a):
        e = np.exp(-2.0 * np.abs(a.v))
        v = np.where(a.v > 0, 2.0 * e / (1.0 + e), 2.0 / (1.0 + e))
        return chain(a, v, -v * (2.0 - v), 2.0 * v * (2.0 - v) * (1.0 - v))

    def gap(x):
        return 0.5 * (one_minus_tanh((x - x0) / w) + one_minus_tanh((x + x0) / w))
    return gap


def log1p_neg_exp2(x):
    """log(1 - exp(-2x)) as a jet, accurate for large x."""
    e = np.exp(-2.0 * x.v)
    with np.errstate(all="ignore"):
        val = np.log1p(-e)
        d1 = 2.0 * e / (1.0 - e)
        d2 = -4.0 * e / (1.0 - e) ** 2
        return chain(x, val, d1, d2)


def log_sinh_ratio(y, x, offset, excess=None):
    """log(sinh y / sinh x) - offset, where y - x -> offset at infinity; accurate in both regimes.

    `excess`, if given, is y - x - offset computed without cancellation.
    """
    with np.errstate(all="ignore"):
        return _log_sinh_ratio(y, x, offset, excess)


def _log_sinh_ratio(y, x, offset, excess):
    direct = J.log(J.sinh(y)) - J.log(J.sinh(x)) - offset
    far = (y - x - offset if excess is None else excess) + log1p_neg_exp2(y) - log1p_neg_exp2(x)
    return where(np.minimum(x.v, y.v) > 1.0, far, direct)
