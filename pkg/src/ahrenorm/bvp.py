"""Radial two-point boundary value problems by Chebyshev collocation.

Solutions of the radial problems here decay exponentially, and anything
integrated against the volume form is multiplied by e^((n-1) r). A plain
nodal representation carries round-off of size eps * max|w| all the way out,
which that factor then blows up. So the unknown is written as
w = sech(r)^k v with k close to the expected decay rate, and v is what lives
on the grid. Rows are scaled by 1/sech^k, making the residual relative.

The first row is replaced by the regularity condition w'(0) = 0 and the last
by w(L) = 0.
"""

from dataclasses import dataclass, field

import numpy as np

from . import metric as M
from . import profiles as P
from .jet import Jet


class NewtonFailure(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class NewtonResult:
    u: np.ndarray
    residual: float
    iterations: int
    history: list = field(default_factory=list)


class WeightedGrid:
    """Operators acting on v for the function w = sech(r)^k v."""

    def __init__(self, grid, k):
        self.grid = grid
        self.k = float(k)
        r = grid.r
        t = np.tanh(r)
        S = np.exp(self.k * P.log_sech_values(r))
        S1 = -self.k * t * S
        S2 = S * (self.k ** 2 * t * t - self.k * (1.0 - t * t))
        self.S = S
        self.D1 = S1[:, None] * np.eye(grid.size) + S[:, None] * grid.D
        self.D2 = S2[:, None] * np.eye(grid.size) + 2.0 * S1[:, None] * grid.D + S[:, None] * grid.D2

    @property
    def r(self):
        return self.grid.r

    @property
    def size(self):
        return self.grid.size

    def values(self, v):
        return self.S * v

    def profile(self, v):
        return P.Weighted(P.ChebProfile(self.grid, v), self.k)


def laplacian(m, wg):
    """Matrix of the nonnegative radial Laplacian acting on v (w = sech^k v).

    -(w'' - alpha' w' + (n-1) H w') A, with row 0 the origin limit -n A w''(0).
    """
    G = M.geometry(m, wg.r)
    first = -G.f.alpha1 + (m.n - 1) * G.H
    Lap = -(G.A[:, None] * (wg.D2 + first[:, None] * wg.D1))
    Lap[0] = -m.n * G.A[0] * wg.D2[0]
    return Lap, G


def newton(wg, system, v0, tol=1e-11, max_iter=60, min_step=1e-6):
    """Damped Newton for system(v) -> (residual, jacobian), both in terms of w.

    Interior rows are divided by sech^k; row 0 becomes w'(0) = 0 and the last
    row v(L) = 0. Convergence is measured on the scaled residual.
    """
    grid = wg.grid
    scale = 1.0 / wg.S

    def full(v):
        res, jac = system(v)
        raw = res.copy()
        res = res * scale
        jac = jac * scale[:, None]
        res[0] = grid.D[0] @ v
        jac[0] = grid.D[0]
        res[-1] = v[-1]
        jac[-1] = 0.0
        jac[-1, -1] = 1.0
        return res, jac, raw

    v = np.array(v0, dtype=float)
    v[-1] = 0.0
    history = []
    res, jac, raw = full(v)
    norm = float(np.max(np.abs(res)))
    history.append(norm)
    it = 0
    while norm >= tol:
        it += 1
        if it > max_iter:
            if norm < 1e3 * tol:
                break
            raise NewtonFailure(f"no convergence in {max_iter} iterations (residual {norm:.3e})", history)
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            raise NewtonFailure("singular Jacobian", history) from None
        lam = 1.0
        while True:
            trial = v + lam * step
            r2, j2, raw2 = full(trial)
            n2 = float(np.max(np.abs(r2)))
            if np.isfinite(n2) and (n2 < (1.0 - 1e-4 * lam) * norm or (lam == 1.0 and n2 < 10 * tol)):
                break
            lam *= 0.5
            if lam < min_step:
                if norm < 1e3 * tol:
                    return NewtonResult(v, _interior(raw), it, history)
                raise NewtonFailure(f"line search stalled at residual {norm:.3e}", history)
        v, res, jac, raw, norm = trial, r2, j2, raw2, n2
        history.append(norm)
    return NewtonResult(v, _interior(raw), it, history)


def _interior(res):
    return float(np.max(np.abs(res[1:-1]))) if res.size > 2 else 0.0
