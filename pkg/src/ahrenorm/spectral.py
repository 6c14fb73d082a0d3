"""Chebyshev collocation on a radial interval [0, L] and panel quadrature."""

from functools import lru_cache

import numpy as np
from scipy.interpolate import BarycentricInterpolator


@lru_cache(maxsize=32)
def _cheb_unit(N):
    # Trefethen's cheb(N) on [-1, 1], nodes ordered from +1 to -1
    if N == 0:
        return np.zeros((1, 1)), np.ones(1)
    x = np.cos(np.pi * np.arange(N + 1) / N)
    c = np.hstack([2.0, np.ones(N - 1), 2.0]) * (-1.0) ** np.arange(N + 1)
    X = np.tile(x, (N + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D = D - np.diag(D.sum(axis=1))
    return D, x


@lru_cache(maxsize=32)
def _clenshaw_curtis(N):
    # weights for nodes cos(pi k / N), k = 0..N, on [-1, 1]
    theta = np.pi * np.arange(N + 1) / N
    w = np.zeros(N + 1)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N * N - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
        v -= np.cos(N * theta[1:-1]) / (N * N - 1)
    else:
        w[0] = w[N] = 1.0 / (N * N)
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / N
    return w


def _lobatto_weights(N):
    # closed-form barycentric weights of Chebyshev-Lobatto nodes; scipy would otherwise
    # compute them in a randomly permuted order, which breaks bitwise reproducibility
    w = np.where(np.arange(N + 1) % 2 == 0, 1.0, -1.0)
    w[0] *= 0.5
    w[N] *= 0.5
    return w


class ChebGrid:
    """Chebyshev-Lobatto nodes on [0, L], increasing, r[0] = 0 and r[-1] = L."""

    def __init__(self, L, N):
        if N < 4:
            raise ValueError("need at least 5 nodes")
        self.L = float(L)
        self.N = int(N)
        D, x = _cheb_unit(self.N)
        # x runs from +1 down to -1, so r = L (1 - x) / 2 increases from 0 to L
        self.r = self.L * (1.0 - x) / 2.0
        self.r[0] = 0.0
        self.r[-1] = self.L
        self.D = -2.0 / self.L * D
        self.D2 = self.D @ self.D
        self.w = _clenshaw_curtis(self.N) * self.L / 2.0

    @property
    def size(self):
        return self.N + 1

    def integrate(self, values):
        return float(np.dot(self.w, values))

    def interpolant(self, values, odd=False):
        return BarycentricInterpolator(self.r, values, wi=_lobatto_weights(self.N))

    def __eq__(self, other):
        return isinstance(other, ChebGrid) and other.L == self.L and other.N == self.N

    def __hash__(self):
        return hash((self.L, self.N))


_GL_CACHE = {}


def _gauss_legendre(order):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


class QuadratureError(ArithmeticError):
    pass


def panel_quad(fun, a, b, atol=1e-10, rtol=1e-12, order=16, panels=8, max_depth=30, max_panels=4096):
    """Adaptive composite Gauss-Legendre quadrature for vectorized integrands.

    Each panel is integrated at `order` and `2*order` points; panels whose two
    estimates disagree by more than their share of the tolerance are bisected.
    Returns (value, error_estimate).
    """
    if b == a:
        return 0.0, 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    xs, ws = _gauss_legendre(order)
    xl, wl = _gauss_legendre(2 * order)
    edges = np.linspace(a, b, panels + 1)
    todo = list(zip(edges[:-1], edges[1:]))
    total, err_total = 0.0, 0.0
    depth = 0
    while todo:
        lo = np.array([p[0] for p in todo])
        hi = np.array([p[1] for p in todo])
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        pts_s = (mid[:, None] + half[:, None] * xs[None, :]).ravel()
        pts_l = (mid[:, None] + half[:, None] * xl[None, :]).ravel()
        vals = fun(np.concatenate([pts_s, pts_l]))
        vs = vals[:pts_s.size].reshape(len(todo), order)
        vl = vals[pts_s.size:].reshape(len(todo), 2 * order)
        est_s = half * (vs @ ws)
        est_l = half * (vl @ wl)
        if not np.all(np.isfinite(est_l)):
            raise QuadratureError("integrand is not finite on the interval")
        diff = np.abs(est_l - est_s)
        share = np.maximum(atol * (hi - lo) / (b - a), rtol * np.abs(est_l))
        ok = (diff <= share) | (depth >= max_depth) | (len(todo) > max_panels)
        total += est_l[ok].sum()
        err_total += diff[ok].sum()
        todo = [(l, m) for l, m, k in zip(lo, mid, ok) if not k] + \
               [(m, h) for m, h, k in zip(mid, hi, ok) if not k]
        depth += 1
    return sign * total, err_total


class EvenChebGrid:
    """Even functions on [-L, L] sampled at the Chebyshev nodes with r >= 0.

    Regularity at r = 0 is built into the differentiation matrices, so no
    boundary row is needed there. Nodes are increasing, r[0] = 0, r[-1] = L.
    """

    def __init__(self, L, M):
        if M < 4:
            raise ValueError("need at least 5 nodes")
        self.L = float(L)
        self.M = int(M)
        D, x = _cheb_unit(2 * self.M)
        D2 = D @ D
        j = self.M - np.arange(self.M + 1)          # full index of each ascending node
        mirror = 2 * self.M - j
        self.r = self.L * x[j]
        self.r[0] = 0.0
        self.r[-1] = self.L
        De = D[np.ix_(j, j)] + D[np.ix_(j, mirror)]
        D2e = D2[np.ix_(j, j)] + D2[np.ix_(j, mirror)]
        De[:, 0] = D[j, self.M]
        D2e[:, 0] = D2[j, self.M]
        self.D = De / self.L
        self.D2 = D2e / self.L ** 2
        self.D[0] = 0.0
        w = _clenshaw_curtis(2 * self.M)
        self.w = self.L * w[j]
        self.w[0] *= 0.5
        self._x_full = self.L * x

    @property
    def size(self):
        return self.M + 1

    def integrate(self, values):
        return float(np.dot(self.w, values))

    def interpolant(self, values, odd=False):
        """Interpolant of an even (or, with odd=True, odd) function from its values at r >= 0."""
        full = _mirror_full(np.asarray(values, dtype=float), odd)
        return BarycentricInterpolator(self._x_full, full, wi=_lobatto_weights(2 * self.M))

    def __eq__(self, other):
        return isinstance(other, EvenChebGrid) and other.L == self.L and other.M == self.M

    def __hash__(self):
        return hash(("even", self.L, self.M))


def _mirror_full(values, odd=False):
    # full nodes run x = +L (j = 0) down to -L (j = 2M); ascending node i sits at j = M - i
    if odd:
        inner = values.copy()
        inner[0] = 0.0
        return np.concatenate([inner[::-1], -inner[1:]])
    return np.concatenate([values[::-1], values[1:]])
