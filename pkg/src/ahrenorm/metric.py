"""Rotationally symmetric asymptotically hyperbolic metrics.

A metric g = a(r)^2 dr^2 + s(r)^2 sigma on a radial chart is stored through
two small quantities,

    alpha(r) = log a(r),        psi(r) = log(s(r) / sinh r) = psi_inf + psi_tail(r),

so that deviations from the hyperbolic metric never have to be recovered by
subtracting two exponentially large numbers. All curvature formulas below are
written in these variables.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from types import SimpleNamespace

import numpy as np
from scipy.special import gamma

from . import jet as J
from . import profiles as P
from .jet import Jet
from .spectral import ChebGrid

R_EVAL_MIN = 1e-10     # profiles are never evaluated below this radius
R_ORIGIN_FLOOR = 1e-4  # curvature is frozen inside this radius
DECAY_FLOOR = 1e-14


class MetricError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


def sphere_volume(n):
    """Volume of the unit (n-1)-sphere, 2 pi^(n/2) / Gamma(n/2)."""
    return 2.0 * math.pi ** (n / 2.0) / gamma(n / 2.0)


# ============================================================================
# 1. Types

@dataclass(frozen=True)
class RadialMetric:
    n: int
    psi_tail: object = P.zero
    psi_inf: float = 0.0
    alpha: object = None          # None means unit lapse (arclength gauge)
    r_model: float = 30.0
    origin: str = "smooth"
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise MetricError("dimension must be at least 2")
        if self.origin not in ("smooth", "annulus"):
            raise MetricError(f"unknown origin class {self.origin!r}")

    @property
    def arclength(self):
        return self.alpha is None

    def fields(self, r):
        x = Jet.variable(np.atleast_1d(np.asarray(r, dtype=float)))
        pt = self.psi_tail(x)
        if self.alpha is None:
            z = np.zeros_like(x.v)
            al = Jet(z, z, z)
        else:
            al = self.alpha(x)
        return SimpleNamespace(r=x.v, alpha=al.v, alpha1=al.d, alpha2=al.dd,
                               psi_t=pt.v, psi=pt.v + self.psi_inf, psi1=pt.d, psi2=pt.dd)

    def lapse(self, r):
        return np.exp(self.fields(r).alpha)

    def warp(self, r, nu=0):
        """s(r) or its first/second coordinate derivative."""
        F = self.fields(r)
        r = F.r
        e = np.exp(F.psi)
        sh, ch = np.sinh(r), np.cosh(r)
        if nu == 0:
            return e * sh
        if nu == 1:
            return e * (ch + sh * F.psi1)
        if nu == 2:
            return e * (sh * (1.0 + F.psi2 + F.psi1 ** 2) + 2.0 * ch * F.psi1)
        raise ValueError("nu must be 0, 1 or 2")

    def with_label(self, label, **meta):
        return replace(self, label=label, meta={**self.meta, **meta})


@dataclass(frozen=True)
class ReferenceModel:
    """The hyperbolic metric dr^2 + (c sinh r)^2 sigma; c != 1 only for n = 2."""
    n: int
    cone_factor: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise MetricError("dimension must be at least 2")
        if not self.cone_factor > 0:
            raise MetricError("cone factor must be positive")
        if self.n >= 3 and abs(self.cone_factor - 1.0) > 0:
            raise MetricError("cone factor must be 1 in dimension >= 3")

    @property
    def omega(self):
        return 2.0 * math.pi * self.cone_factor

    def warp(self, r):
        return self.cone_factor * np.sinh(r)

    def as_metric(self):
        return RadialMetric(self.n, P.zero, math.log(self.cone_factor), None,
                            r_model=math.inf, label=f"reference(n={self.n}, c={self.cone_factor:g})")


def reference_metric(ref):
    """Accept a ReferenceModel or an arclength RadialMetric as background."""
    if isinstance(ref, ReferenceModel):
        return ref.as_metric()
    if isinstance(ref, RadialMetric):
        if not ref.arclength:
            raise MetricError("a background metric must be given in arclength gauge")
        return ref
    raise TypeError(f"cannot use {type(ref).__name__} as a background")


@dataclass(frozen=True)
class DecayFit:
    rate: float
    amplitude: float
    window: tuple
    regression_residual: float
    flags: tuple = ()

    @property
    def sentinel(self):
        return math.isinf(self.rate)


@dataclass(frozen=True)
class Alignment:
    beta: float
    arclength_map: tuple          # (model radii, arclength radii)
    residual_rate: DecayFit
    reference: object
    tail_limit: float             # fitted limit of psi_tail of the metric
    flags: tuple = ()


# ============================================================================
# 2. Local geometry

def geometry(m, r):
    """Curvature data of m at radii r, computed without large cancellations.

    Returned fields (orthonormal frame): E_rad, E_th components of
    Ric + (n-1) g, the scalar defect scal + n(n-1), the density a s^(n-1)
    (without the sphere volume), s_u / s and the inverse squared lapse A.
    """
    n = m.n
    r = np.atleast_1d(np.asarray(r, dtype=float))
    # curvature is even and smooth through a regular origin; freezing it inside
    # R_ORIGIN_FLOOR avoids dividing derivative noise by r
    rc = np.maximum(r, R_ORIGIN_FLOOR)
    F = m.fields(rc)
    coth = 1.0 / np.tanh(rc)
    A = np.exp(-2.0 * F.alpha)
    Am1 = np.expm1(-2.0 * F.alpha)
    H = coth + F.psi1
    cross = 2.0 * coth * F.psi1
    # s_uu / s - 1
    kk = A * (cross + F.psi2 + F.psi1 ** 2 - F.alpha1 * H) + Am1
    if n > 2:
        # (1 - s_u^2) / s^2 + 1
        q0 = A * np.expm1(2.0 * (F.alpha - F.psi)) / np.sinh(rc) ** 2
        pp = q0 - Am1 - A * (cross + F.psi1 ** 2)
    else:
        pp = np.zeros_like(rc)
    E_rad = -(n - 1) * kk
    E_th = -kk + (n - 2) * pp
    defect = -2.0 * (n - 1) * kk + (n - 1) * (n - 2) * pp
    Fr = F if np.all(rc == r) else m.fields(np.maximum(r, R_EVAL_MIN))
    dens = np.exp(Fr.alpha + (n - 1) * Fr.psi) * np.sinh(r) ** (n - 1)
    return SimpleNamespace(r=r, rc=rc, f=F, A=A, H=H, coth=coth, E_rad=E_rad, E_th=E_th,
                           defect=defect, scal=defect - n * (n - 1), dens=dens,
                           su_over_s=np.exp(-F.alpha) * H)


def scalar_curvature(m, r):
    _check_domain(m, r)
    return geometry(m, r).scal


def einstein_deviation(m, r):
    """(E_rad, E_sph) of Ric + (n-1) g; E_sph is the coefficient of sigma, s^2 times the frame value."""
    _check_domain(m, r)
    G = geometry(m, r)
    s2 = np.exp(2.0 * G.f.psi) * np.sinh(G.rc) ** 2
    return G.E_rad, G.E_th * s2


def _check_domain(m, r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r > m.r_model):
        raise MetricError(f"radius outside [0, {m.r_model}]")


# ============================================================================
# 3. Catalog

def make_catalog_metric(name, params=None):
    params = dict(params or {})
    if name == "hyperbolic":
        n = int(params.get("n", 3))
        return RadialMetric(n, r_model=float(params.get("r_model", 30.0)), label="hyperbolic",
                            meta={"name": name, **params})
    if name == "conic2d":
        om = float(params["omega"])
        if not om > 0:
            raise MetricError("cone angle must be positive")
        lam = math.log(om / (2 * math.pi))
        power = params.get("core_power")
        if power is None:
            return RadialMetric(2, P.zero, lam, r_model=float(params.get("r_model", 30.0)),
                                label=f"conic2d(omega={om:g})", meta={"name": name, **params})
        if not float(power) > 1:
            raise MetricError("conic2d core_power must exceed 1 for a finite mass")
        # regular origin, cone angle omega only at infinity: psi = lam (1 - sech^p r)
        return RadialMetric(2, P.sech_power(-lam, float(power)), lam, r_model=float(params.get("r_model", 30.0)),
                            label=f"conic2d(omega={om:g}, p={float(power):g})", meta={"name": name, **params})
    if name == "bump":
        n = int(params.get("n", 3))
        amp = float(params.get("amplitude", 1e-2))
        center = float(params.get("center", 3.0))
        width = float(params.get("width", 1.0))
        if not width > 0:
            raise MetricError("bump width must be positive")
        if amp <= -1.0:
            raise MetricError("bump amplitude makes the warp non-positive")
        g = P.shell(center, width)

        def psi_tail(x):
            return J.log1p(amp * g(x))
        m = RadialMetric(n, psi_tail, 0.0, r_model=float(params.get("r_model", 30.0)),
                         label=f"bump(n={n}, amp={amp:g}, c={center:g}, w={width:g})", meta={"name": name, **params})
        rr = np.linspace(0.0, m.r_model, 4001)[1:]
        if not np.all(m.warp(rr) > 0):
            raise MetricError("bump parameters produce a non-positive warp")
        return m
    if name == "radial-conformal":
        n = int(params.get("n", 3))
        w = conformal_profile(params.get("profile", {"kind": "sech", "amplitude": 1e-2, "power": 3.0}))
        base = RadialMetric(n, r_model=float(params.get("r_model", 30.0)))
        return conformal_metric(base, w).with_label(f"radial-conformal(n={n})", name=name, **params)
    if name == "sampled":
        return read_metric_csv(params["file"], n=int(params.get("n", 3)))
    raise MetricError(f"unknown catalog entry {name!r}")


def conformal_profile(spec):
    """Build a w-profile from a small description or pass a callable through."""
    if callable(spec):
        return spec
    kind = spec.get("kind", "sech")
    if kind == "sech":
        return P.sech_power(spec.get("amplitude", 1e-2), spec.get("power", 3.0))
    if kind == "gauss":
        return P.gaussian(spec.get("amplitude", 1e-2), spec.get("width", 1.0))
    if kind == "shell":
        g = P.shell(spec.get("center", 3.0), spec.get("width", 1.0))
        amp = float(spec.get("amplitude", 1e-2))
        return lambda x: amp * g(x)
    if kind == "csv":
        r, w = read_columns(spec["file"], ("r", "w"))
        return P.SplineProfile(r, w)
    raise MetricError(f"unknown conformal profile kind {kind!r}")


def conformal_metric(base, w):
    """e^(2w) base for a radial profile w."""
    b_alpha = base.alpha

    def alpha(x):
        return w(x) if b_alpha is None else b_alpha(x) + w(x)

    def psi_tail(x):
        return base.psi_tail(x) + w(x)
    return replace(base, alpha=alpha, psi_tail=psi_tail, label=f"conformal({base.label})")


def perturbed(m, p, q, t):
    """g + t h for h = p g_rr dr^2 + q s^2 sigma (relative radial and spherical parts)."""
    if t == 0:
        return m
    m_alpha = m.alpha

    def alpha(x):
        extra = 0.5 * J.log1p(t * p(x))
        return extra if m_alpha is None else m_alpha(x) + extra

    def psi_tail(x):
        return m.psi_tail(x) + 0.5 * J.log1p(t * q(x))
    return replace(m, alpha=alpha, psi_tail=psi_tail, label=f"{m.label}+{t:g}h")


def radial_shift(m, delta, x0=4.0, width=1.0):
    """Pull m back by x -> x + delta chi(x): the identity near the origin, a shift by delta far out."""
    chi, dchi = P.smooth_step(x0, width)
    gap = P.smooth_step_gap(x0, width)
    m_alpha = m.alpha

    def y_of(x):
        return x + delta * chi(x)

    def alpha(x):
        out = J.log1p(delta * dchi(x))
        return out if m_alpha is None else out + m_alpha(y_of(x))

    def psi_tail(x):
        y = y_of(x)
        return m.psi_tail(y) + P.log_sinh_ratio(y, x, delta, excess=-delta * gap(x))
    r_new = m.r_model - max(delta, 0.0)
    return replace(m, alpha=alpha, psi_tail=psi_tail, psi_inf=m.psi_inf + delta, r_model=r_new,
                   label=f"{m.label} shifted by {delta:g}")


# ============================================================================
# 4. Sampled profiles

def read_columns(path, names):
    """Read a CSV with a header naming `names`; lines starting with '#' are comments."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(line for line in fh if line.strip() and not line.lstrip().startswith("#"))]
    if not rows:
        raise MetricError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in names if c not in header]
    if missing:
        raise MetricError(f"{path}: missing column(s) {missing}")
    idx = [header.index(c) for c in names]
    try:
        data = np.array([[float(row[i]) for i in idx] for row in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise MetricError(f"{path}: malformed row ({exc})") from None
    if data.shape[0] < 8:
        raise MetricError(f"{path}: need at least 8 rows")
    if np.any(np.diff(data[:, 0]) <= 0):
        raise MetricError(f"{path}: r must be strictly increasing")
    return tuple(data[:, k] for k in range(len(names)))


def read_metric_csv(path, n=3):
    r, a, s = read_columns(path, ("r", "a", "s"))
    return sampled_metric(r, a, s, n=n, label=f"sampled({path})")


def sampled_metric(r, a, s, n=3, label="sampled"):
    r, a, s = (np.asarray(v, dtype=float) for v in (r, a, s))
    if np.any(a <= 0):
        raise MetricError("lapse must be positive")
    origin = "smooth" if r[0] == 0.0 else "annulus"
    psi = np.empty_like(r)
    inner = r > 0
    if np.any(s[inner] <= 0):
        raise MetricError("warp must be positive away from the origin")
    psi[inner] = np.log(s[inner] / np.sinh(r[inner]))
    if origin == "smooth":
        # odd Taylor model s = s1 r + s3 r^3 on the first nodes
        k = min(5, len(r) - 1)
        rr, ss = r[1:k + 1], s[1:k + 1]
        s1, s3 = np.linalg.lstsq(np.stack([rr, rr ** 3], axis=1), ss, rcond=None)[0]
        if s1 <= 0:
            raise MetricError("warp does not leave the origin with positive slope")
        psi[0] = math.log(s1)
    psi_inf = float(psi[-1])
    alpha = np.log(a)
    al = None if np.allclose(alpha, 0.0, atol=1e-15) else P.SplineProfile(r, alpha)
    return RadialMetric(n, P.SplineProfile(r, psi - psi_inf), psi_inf, al, r_model=float(r[-1]),
                        origin=origin, label=label)


def write_metric_csv(m, path, nodes=512):
    r = np.linspace(0.0, m.r_model, nodes)
    F = m.fields(r)
    s = np.exp(F.psi) * np.sinh(r)
    with open(path, "w", newline="") as fh:
        fh.write(f"# {m.label}\n")
        w = csv.writer(fh)
        w.writerow(["r", "a", "s"])
        for row in zip(r, np.exp(F.alpha), s):
            w.writerow([repr(float(v)) for v in row])


# ============================================================================
# 5. Gauge: arclength and alignment

def arclength_table(m, nodes=257):
    grid = ChebGrid(m.r_model, nodes - 1)
    if m.arclength:
        return grid.r, grid.r.copy()
    mean = _running_mean(lambda t: np.expm1(m.fields(np.maximum(t, R_EVAL_MIN)).alpha), grid.r)
    return grid.r, grid.r * (1.0 + mean)


def _running_mean(fun, xs, panels=16, order=32):
    """(1/x) int_0^x fun for every x in xs (fun(0) at x = 0), composite Gauss-Legendre."""
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    lo, hi = edges[:-1], edges[1:]
    nodes = (0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * t[None, :]).ravel()
    weights = (0.5 * (hi - lo)[:, None] * w[None, :]).ravel()
    vals = fun(np.outer(xs, nodes).ravel()).reshape(len(xs), -1)
    return vals @ weights


def regauge_arclength(m, nodes=257):
    """Return m written with unit lapse on a Chebyshev grid in arclength."""
    if m.arclength:
        return m
    grid_x = ChebGrid(m.r_model, nodes - 1)
    F = m.fields(np.maximum(grid_x.r, R_EVAL_MIN))
    if np.any(~np.isfinite(F.alpha)):
        raise MetricError("lapse is not finite")
    # u = x (1 + c(x)), c(x) = mean of a - 1 over [0, x]; computed as an average
    # so that x stays accurate relative to itself near the origin
    ratio = _running_mean(lambda t: np.expm1(m.fields(np.maximum(t, R_EVAL_MIN)).alpha), grid_x.r)
    cum = ratio * grid_x.r
    c_of_x = grid_x.interpolant(ratio)
    total = float(cum[-1])
    U = float(grid_x.r[-1] + total)
    grid_u = ChebGrid(U, nodes - 1)
    x = np.interp(grid_u.r, grid_x.r + cum, grid_x.r)
    for _ in range(60):
        step = (x * (1.0 + c_of_x(x)) - grid_u.r) / m.lapse(np.maximum(x, R_EVAL_MIN))
        x = np.clip(x - step, 0.0, m.r_model)
        if np.all(np.abs(step) <= 4e-16 * x + 1e-300):
            break
    x[-1] = m.r_model
    Fx = m.fields(np.maximum(x, R_EVAL_MIN))
    # psi_new(u) = psi(x) + log(sinh x / sinh u), and u - x -> total
    xj = Jet(x)
    uj = Jet(grid_u.r)
    with np.errstate(all="ignore"):
        lsr = P.log_sinh_ratio(xj, uj, 0.0).v
        far = (total - x * c_of_x(x)) + P.log1p_neg_exp2(xj).v - P.log1p_neg_exp2(uj).v
    corr = np.where(np.minimum(x, grid_u.r) > 1.0, far, lsr + total)
    corr[0] = total - Fx.alpha[0]   # s / sinh u -> s'(0) / a(0) at the origin
    tail = Fx.psi_t + corr
    return RadialMetric(m.n, P.ChebProfile(grid_u, tail), m.psi_inf - total, None, r_model=U,
                        origin=m.origin, label=f"arclength({m.label})", meta=dict(m.meta))


FALLBACK_WINDOWS = ((0.3, 0.6), (0.15, 0.3))


def window_radii(r_model, window=(0.6, 0.95), count=64):
    return np.linspace(window[0] * r_model, window[1] * r_model, count)


def fit_decay_rate(samples, floor=DECAY_FLOOR):
    """Least-squares fit of log|value| against r; returns a DecayFit.

    `samples` is a sequence of (r, value) pairs or a pair of arrays.
    """
    r, v = _unpack_samples(samples)
    if r.size < 8:
        raise ValueError("need at least 8 samples")
    window = (float(r.min()), float(r.max()))
    keep = np.abs(v) > floor
    if keep.sum() < 8:
        return DecayFit(math.inf, 0.0, window, 0.0, ("below_floor",))
    rr, lv = r[keep], np.log(np.abs(v[keep]))
    slope, icpt = np.polyfit(rr, lv, 1)
    resid = float(np.sqrt(np.mean((lv - (slope * rr + icpt)) ** 2)))
    flags = () if keep.all() else ("partial_floor",)
    return DecayFit(float(-slope), float(math.exp(icpt)), window, resid, flags)


def _unpack_samples(samples):
    if isinstance(samples, tuple) and len(samples) == 2 and np.ndim(samples[0]) == 1:
        r, v = samples
    else:
        arr = np.asarray(samples, dtype=float)
        r, v = arr[:, 0], arr[:, 1]
    return np.asarray(r, dtype=float), np.asarray(v, dtype=float)


def defect_decay(m, window=(0.6, 0.95)):
    """Decay fit of the scalar defect, moving the window inwards while it is below the floor."""
    fit = None
    for win in (window,) + FALLBACK_WINDOWS:
        rr = window_radii(m.r_model, win)
        fit = fit_decay_rate((rr, geometry(m, rr).defect))
        if not fit.sentinel:
            break
    return fit


def decay_upper_bound(n):
    return (n - 1) / 2.0 + 0.5 * math.sqrt((n + 3) * (n - 1))


def _tail_limit(m, window):
    """Fitted limit of psi_tail as r grows (exponential approach assumed)."""
    rr = window_radii(m.r_model, window)
    F = m.fields(rr)
    d1 = F.psi1
    if np.max(np.abs(d1)) < DECAY_FLOOR:
        return float(F.psi_t[-1])
    fit = fit_decay_rate((rr, d1))
    if not fit.rate > 0:
        raise AlignmentError("no plateau of s e^{-r}: the metric is not asymptotic to the reference")
    if fit.sentinel:
        return float(F.psi_t[-1])
    return float(F.psi_t[-1] + d1[-1] / fit.rate)


def align_to_reference(m, ref, window=(0.6, 0.95)):
    bg = reference_metric(ref)
    if bg.n != m.n:
        raise MetricError("dimension mismatch between metric and background")
    lim = _tail_limit(m, window)
    lim_bg = 0.0 if not math.isfinite(bg.r_model) else _tail_limit(bg, window)
    beta = (m.psi_inf + lim) - (bg.psi_inf + lim_bg)
    # the deviation can drop below the fit floor in the default window while
    # still mattering once multiplied by the volume growth; look further in
    for win in (window,) + FALLBACK_WINDOWS:
        rh = window_radii(m.r_model, win) + beta
        loc = aligned_fields(m, bg, beta, rh, lim - lim_bg)
        fit = fit_decay_rate((rh, np.maximum(np.abs(loc.lam), np.abs(loc.alpha))))
        if not fit.sentinel:
            break
    if not fit.rate > 0:
        raise AlignmentError("aligned deviation does not decay")
    flags = []
    if fit.rate <= (m.n - 1) / 2.0:
        flags.append("below_admissible_rate")
    if fit.rate > decay_upper_bound(m.n) and not fit.sentinel:
        flags.append("above_analysis_rate")
    table = arclength_table(m)
    return Alignment(float(beta), table, fit, ref, float(lim), tuple(flags))


def aligned_fields(m, bg, beta, rhat, offset=0.0):
    """log(s(rhat - beta) / s_bg(rhat)) and its derivative, plus the lapse of m, at aligned radii.

    `offset` is the part of the plateau difference already absorbed into beta
    (fitted tail limits), so that the returned log-ratio tends to zero.
    """
    rhat = np.atleast_1d(np.asarray(rhat, dtype=float))
    r = rhat - beta
    F = m.fields(r)
    B = bg.fields(rhat)
    x, xh = Jet(r), Jet(rhat)
    with np.errstate(all="ignore"):
        l1 = P.log1p_neg_exp2(x).v - P.log1p_neg_exp2(xh).v
        cm = 2.0 / np.expm1(2.0 * r) - 2.0 / np.expm1(2.0 * rhat)
    lam = (F.psi_t - B.psi_t - offset) + ((m.psi_inf + offset) - bg.psi_inf - beta) + l1
    lam1 = F.psi1 - B.psi1 + cm
    coth_bg = 1.0 / np.tanh(rhat) + B.psi1
    log_s_bg = B.psi + np.log(np.sinh(rhat))
    return SimpleNamespace(r=r, rhat=rhat, lam=lam, lam1=lam1, alpha=F.alpha,
                           coth_bg=coth_bg, log_s_bg=log_s_bg)
