"""Numerical verification of the neck estimates.

Three groups of checks on the polyneck of a glued metric:

* the scalar-curvature deviation bound |S_glued - S| <= c eps^-1 (cosh t)^{1-n}
  on |t| <= |log eps| - 1, measured as a weighted sup and an edge-rate fit;
* the conjugation identity Delta = u^{-(n+2)/(n-2)} L_neck(u .) with
  L_neck = d_t^2 - ((n-2)/2)^2 + Delta_theta + u^{4/(n-2)} Delta_z up to an
  O(|x|) remainder;
* the barrier inequality Delta phi_delta <= -C u^{-4/(n-2)} phi_delta on
  T^eps_alpha with the explicit constant C = ((n-2)^2/4 - delta^2)/2, and the
  weighted local a priori estimate it implies.

Remainder orders are established by log-log slope fits with attached
finite-difference error bars rather than symbolically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curvature import DerivativeScheme, laplace_beltrami, scalar_curvature
from .errors import DeltaOutOfRange, EpsilonTooLarge, NotResolved
from .geometry import (
    AXIS_MARGIN,
    Chart,
    MetricField,
    k_laplacian_metric,
    sphere_polar_diag,
)
from .gluing import GluingConfig, glued_metric, psi_of_t
from .linear_solver import (
    RadialGrid,
    _theta_sample,
    _z_sample,
    assemble_L,
    build_grid,
    glued_curvature_profile,
    solve_dirichlet,
)

RESOLVED_FACTOR = 10.0  # a deviation counts as resolved above 10x its error bar


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


@dataclass
class DeviationProfile:
    """Deviation measurements for one eps."""

    eps: float
    t: np.ndarray
    sup_dev: np.ndarray
    fd_err: np.ndarray
    bound_shape: np.ndarray       # eps^-1 (cosh t)^{1-n}
    weighted_sup: float           # W(eps) = sup eps (cosh t)^{n-1} |dev|
    probe_dev: float              # deviation at t = log eps + 1
    probe_err: float
    c_fit: float                  # smallest c making the bound hold on the grid
    resolved: np.ndarray = field(repr=False, default=None)


@dataclass
class DeviationFit:
    """Deviation sweep over eps with the edge-rate fit."""

    eps_list: list
    profiles: list
    probe_slope: float
    weighted_ratio: float  # max/min of W(eps) over the sweep


def deviation_profile(cfg: GluingConfig, t_grid=None, points_per_unit: int = 16,
                      theta1_samples=(1.0831, 1.9),
                      field_: MetricField | None = None,
                      scheme: DerivativeScheme | None = None) -> DeviationProfile:
    """Measure sup_{theta,z} |S_glued - S| on the window |t| <= |log eps| - 1.

    One z and a small theta sample suffice for the built-in symmetric
    models; the default grid covers the negative half and mirrors.  An
    explicit ``t_grid`` inside the window may be passed instead.  The
    probe value is always taken at the window edge t = log(eps) + 1, and
    fit data keeps only points whose deviation exceeds ten times its
    finite-difference error bar.
    """
    fld = glued_metric(cfg) if field_ is None else field_
    scheme = scheme or DerivativeScheme()
    n, k, m = cfg.n, cfg.k, cfg.m
    T = cfg.t_max
    if T <= 1.0:
        raise EpsilonTooLarge("window |t| <= |log eps| - 1 is empty")

    def measure(ts):
        sup = np.zeros(ts.size)
        err = np.zeros(ts.size)
        for theta1 in theta1_samples:
            pts = np.zeros((ts.size, m))
            pts[:, :k] = _z_sample(cfg.model_1)
            pts[:, k] = ts
            pts[:, k + 1:] = _theta_sample(n, theta1)
            S, E = scalar_curvature(fld, ("neck", pts), scheme)
            dev = np.abs(S - cfg.S)
            upd = dev > sup
            sup[upd] = dev[upd]
            err = np.maximum(err, E)
        return sup, err

    if t_grid is None:
        nt = max(5, int(round((T - 1) * points_per_unit)) + 1)
        t_half = np.linspace(-(T - 1.0), 0.0, nt)
        sup_half, err_half = measure(t_half)
        t = np.concatenate([t_half, -t_half[-2::-1]])
        sup_dev = np.concatenate([sup_half, sup_half[-2::-1]])
        fd_err = np.concatenate([err_half, err_half[-2::-1]])
        probe_dev, probe_err = float(sup_half[0]), float(err_half[0])
    else:
        t = np.sort(np.asarray(t_grid, dtype=float))
        if t[0] < -(T - 1.0) - 1e-12 or t[-1] > T - 1.0 + 1e-12:
            raise ValueError("t_grid must lie inside |t| <= |log eps| - 1")
        sup_dev, fd_err = measure(t)
        ps, pe = measure(np.array([-(T - 1.0)]))
        probe_dev, probe_err = float(ps[0]), float(pe[0])
    resolved = sup_dev > RESOLVED_FACTOR * fd_err
    if not np.any(resolved):
        raise NotResolved("finite-difference error bars exceed the deviation")
    bound_shape = np.cosh(t) ** (1 - n) / cfg.eps
    weighted = cfg.eps * np.cosh(t) ** (n - 1) * sup_dev
    W = float(np.max(weighted[resolved]))
    return DeviationProfile(
        cfg.eps, t, sup_dev, fd_err, bound_shape, W,
        probe_dev=probe_dev, probe_err=probe_err, c_fit=W,
        resolved=resolved,
    )


def deviation_fit(make_cfg, eps_list, **kwargs) -> DeviationFit:
    """Deviation profiles over an eps sweep plus the probe-rate fit.

    ``make_cfg`` maps eps to a GluingConfig (typically a partial of
    GluingConfig with both models fixed).
    """
    profiles = [deviation_profile(make_cfg(e), **kwargs) for e in eps_list]
    slope = loglog_slope(eps_list, [p.probe_dev for p in profiles])
    Ws = [p.weighted_sup for p in profiles]
    return DeviationFit(list(eps_list), profiles, slope, max(Ws) / min(Ws))


# ---------------------------------------------------------------------------
# Conjugation identity
# ---------------------------------------------------------------------------


def _unit_sphere_field(n: int) -> MetricField:
    names = tuple(f"theta{i + 1}" for i in range(n - 1))
    lo = [0.0] * (n - 2) + [-np.inf]
    hi = [math.pi] * (n - 2) + [np.inf]
    elo = [AXIS_MARGIN] * (n - 2) + [-np.inf]
    ehi = [math.pi - AXIS_MARGIN] * (n - 2) + [np.inf]
    per = [False] * (n - 2) + [True]
    chart = Chart("sphere", names, tuple(lo), tuple(hi), tuple(elo),
                  tuple(ehi), tuple(per))

    def comps(chart_id, th):
        d = sphere_polar_diag(th)
        out = np.zeros(th.shape[:-1] + (n - 1, n - 1))
        ii = np.arange(n - 1)
        out[..., ii, ii] = d
        return out

    return MetricField(n - 1, (chart,), comps)


def ell_leading(cfg: GluingConfig, w, t, theta=None, z=None,
                scheme: DerivativeScheme | None = None, t_step: float = 5e-3):
    """Leading neck operator d_t^2 - nu^2 + Delta_theta + u^{4/(n-2)} Delta_z.

    ``w(z, t, theta)`` is a callback with vectorized pieces; evaluated at
    the line (z, t_i, theta).  The O(|x|) remainder is deliberately
    omitted; comparing against the true Laplacian measures it.  The
    second t-derivative uses a coarser base step than the metric engine:
    its result is amplified by the large conjugation prefactor, so the
    rounding floor matters more than truncation here.
    """
    scheme = scheme or DerivativeScheme(base_step=1e-3, levels=3)
    n, k = cfg.n, cfg.k
    theta = np.asarray(theta if theta is not None else _theta_sample(n), float)
    z = np.asarray(z if z is not None else _z_sample(cfg.model_1), float)
    t = np.asarray(t, dtype=float)
    nu = cfg.nu

    def along_t(ts):
        return w(z, ts, theta)

    vals = []
    for lev in range(3):
        hh = t_step / 2**lev
        vals.append((along_t(t + hh) - 2.0 * along_t(t) + along_t(t - hh)) / hh**2)
    from .curvature import _richardson
    d2t, _ = _richardson(vals)

    sph = _unit_sphere_field(n)
    lap_th = np.array([
        laplace_beltrami(sph, lambda th: w(z, ti, th), ("sphere", theta),
                         scheme).value
        for ti in t
    ])
    if k > 0:
        kf = k_laplacian_metric(cfg.model_1)
        lap_z = np.array([
            laplace_beltrami(kf, lambda zz: w(zz, ti, theta), ("k-factor", z),
                             scheme).value
            for ti in t
        ])
    else:
        lap_z = np.zeros_like(t)
    u = cfg.u(t)
    U = u ** (4.0 / (n - 2))
    w0 = w(z, t, theta)
    return d2t - nu**2 * w0 + lap_th + U * lap_z


def _probe_carrier(zz, tt, th):
    """Zero array with the broadcast shape of all probe arguments."""
    s = np.asarray(tt, dtype=float) * 0.0
    th = np.asarray(th, dtype=float)
    if th.size:
        s = s + th[..., 0] * 0.0
    zz = np.asarray(zz, dtype=float)
    if zz.shape[-1:] != (0,) and zz.size:
        s = s + zz[..., 0] * 0.0
    return s


def _probe_const(zz, tt, th):
    return 1.0 + _probe_carrier(zz, tt, th)


def _probe_wavy(zz, tt, th):
    base = _probe_carrier(zz, tt, th)
    out = (1.0 + base + 0.3 * np.cos(np.asarray(tt, dtype=float))) \
        * (1.0 + 0.2 * np.cos(np.asarray(th, dtype=float)[..., 0]))
    zz = np.asarray(zz, dtype=float)
    if zz.shape[-1:] != (0,) and zz.size:
        out = out * (1.0 + 0.1 * np.sin(zz[..., 0]))
    return out


@dataclass
class ConjugationReport:
    max_ratio: float
    per_probe: list
    t: np.ndarray


def conjugation_residual(cfg: GluingConfig, t_samples=None, probes=None,
                         scheme: DerivativeScheme | None = None) -> ConjugationReport:
    """Measure |Delta v - u^{-(n+2)/(n-2)} L_neck(u v)| / (|x| scale).

    The scale is u^{-(n+2)/(n-2)} times the largest second-order datum of
    u v, so a bounded ratio certifies that the discrepancy is a second
    order operator with O(|x|)-sized coefficients.
    """
    scheme = scheme or DerivativeScheme()
    n, k, m = cfg.n, cfg.k, cfg.m
    T = cfg.t_max
    t = (np.asarray(t_samples, float) if t_samples is not None
         else np.linspace(-(T - 0.6), T - 0.6, 9))
    z = np.asarray(_z_sample(cfg.model_1), float)
    theta = np.asarray(_theta_sample(n), float)
    fld = glued_metric(cfg)

    if probes is None:
        probes = [("const", _probe_const), ("wavy", _probe_wavy)]
    pexp = (n + 2.0) / (n - 2.0)
    u_of = cfg.u
    results = []
    for name, v in probes:
        def full(c, v=v):
            return v(c[..., :k], c[..., k], c[..., k + 1:])

        pts = np.zeros((t.size, m))
        pts[:, :k] = z
        pts[:, k] = t
        pts[:, k + 1:] = theta
        lhs = laplace_beltrami(fld, full, ("neck", pts), scheme).value

        def uv(zz, tt, th, v=v):
            return u_of(tt) * v(zz, tt, th)

        ell = ell_leading(cfg, uv, t, theta, z, scheme=scheme)
        u = u_of(t)
        rhs = u ** (-pexp) * ell
        # scale: largest second-order datum entering the identity
        w0 = uv(z, t, theta)
        scale = u ** (-pexp) * np.maximum.reduce([
            np.abs(ell), np.abs(w0), np.full_like(w0, 1e-12)])
        xabs = cfg.eps * np.exp(np.abs(t))
        ratio = np.abs(lhs - rhs) / (xabs * np.maximum(scale, np.abs(lhs)))
        results.append((name, float(np.max(ratio)), ratio))
    return ConjugationReport(max(r[1] for r in results), results, t)


# ---------------------------------------------------------------------------
# Barrier inequality
# ---------------------------------------------------------------------------


def barrier_constant(n: int, delta: float) -> float:
    """C(n, delta) = (((n-2)/2)^2 - delta^2) / 2 from the barrier proof."""
    nu = (n - 2) / 2.0
    return 0.5 * (nu**2 - delta**2)


def required_alpha(n: int, delta: float) -> float:
    """Smallest margin parameter with e^{-alpha} <= C(n, delta)."""
    return -math.log(barrier_constant(n, delta))


def induced_eps_alpha(n: int, delta: float, alpha: float | None = None) -> float:
    """Largest admissible eps for the barrier region at this (delta, alpha)."""
    a = max(alpha if alpha is not None else 0.0, required_alpha(n, delta))
    return math.exp(-a)


def barrier_profile(cfg: GluingConfig, delta: float, t):
    """phi_delta = u^{-1} (cosh t)^delta (delta <= 0) or u^{-1} cosh(delta t)."""
    t = np.asarray(t, dtype=float)
    u = cfg.u(t)
    if delta <= 0:
        return np.cosh(t) ** delta / u
    return np.cosh(delta * t) / u


@dataclass
class BarrierReport:
    delta: float
    eps: float
    alpha: float
    C: float
    alpha_min: float
    eps_alpha: float
    t: np.ndarray
    theta1: tuple
    margins: np.ndarray   # (len(theta1), len(t))
    min_margin: float
    fd_err: np.ndarray


def barrier_margin(cfg: GluingConfig, delta: float | None = None,
                   points_per_unit: int = 16,
                   theta1_samples=(0.62, 1.18, 2.05),
                   scheme: DerivativeScheme | None = None) -> BarrierReport:
    """Margins -(Delta phi_delta + C u^{-4/(n-2)} phi_delta) on T^eps_alpha.

    A nonnegative minimum certifies the barrier inequality numerically at
    this (eps, alpha, delta).  Preconditions: |delta| < (n-2)/2 and eps
    small enough that log eps + alpha < 0 and e^{-alpha} <= C.
    """
    delta = cfg.delta if delta is None else delta
    n, k, m = cfg.n, cfg.k, cfg.m
    nu = (n - 2) / 2.0
    if not -nu < delta < nu:
        raise DeltaOutOfRange(f"delta must lie in (-{nu}, {nu}), got {delta}")
    C = barrier_constant(n, delta)
    a_min = required_alpha(n, delta)
    eps_a = induced_eps_alpha(n, delta, cfg.alpha)
    if math.log(cfg.eps) + cfg.alpha >= 0.0:
        raise EpsilonTooLarge(
            f"barrier region empty: log eps + alpha = "
            f"{math.log(cfg.eps) + cfg.alpha:.4f} >= 0 (eps_alpha = {eps_a:.4g})")
    if math.exp(-cfg.alpha) > C:
        raise EpsilonTooLarge(
            f"alpha = {cfg.alpha} too small for C = {C:.4g}; "
            f"need alpha >= {a_min:.4g} (eps_alpha = {eps_a:.4g})")
    scheme = scheme or DerivativeScheme()
    fld = glued_metric(cfg)
    T = cfg.t_max
    ta = T - cfg.alpha
    nt = max(5, int(round(2 * ta * points_per_unit)) + 1)
    t = np.linspace(-ta, ta, nt)
    expo = 4.0 / (n - 2.0)

    def phi(c):
        return barrier_profile(cfg, delta, c[..., k])

    margins = np.zeros((len(theta1_samples), nt))
    errs = np.zeros_like(margins)
    for i, theta1 in enumerate(theta1_samples):
        pts = np.zeros((nt, m))
        pts[:, :k] = _z_sample(cfg.model_1)
        pts[:, k] = t
        pts[:, k + 1:] = _theta_sample(n, theta1)
        lap, err = laplace_beltrami(fld, phi, ("neck", pts), scheme)
        u = cfg.u(t)
        margins[i] = -(lap + C * u ** (-expo) * barrier_profile(cfg, delta, t))
        errs[i] = err
    if not np.all(np.isfinite(margins)):
        raise ArithmeticError("barrier margins must be finite on the region")
    return BarrierReport(delta, cfg.eps, cfg.alpha, C, a_min, eps_a, t,
                         tuple(theta1_samples), margins,
                         float(np.min(margins)), errs)


# ---------------------------------------------------------------------------
# Local weighted a priori estimate
# ---------------------------------------------------------------------------


@dataclass
class LocalEstimateReport:
    max_ratio: float
    per_probe: list
    window: tuple


def local_estimate_ratio(cfg: GluingConfig, resolution: int = 64,
                         probes: str = "standard",
                         grid: RadialGrid | None = None,
                         profile: np.ndarray | None = None) -> LocalEstimateReport:
    """Empirical constant of the local weighted estimate on T^eps_alpha.

    For solutions of L v = f on the window with boundary data on its
    edge, returns the max over probe pairs of
        sup |psi^{(n-2)/2-d} v| / (sup |psi^{(n+2)/2-d} f|
                                   + sup_boundary |psi^{(n-2)/2-d} v|).
    Probes: the discrete harmonic extension of boundary data 1, the
    barrier profile itself, and a smooth interior source with zero
    boundary data.
    """
    n, delta = cfg.n, cfg.delta
    T = cfg.t_max
    ta = T - cfg.alpha
    if ta <= 0:
        raise EpsilonTooLarge("window T^eps_alpha is empty")
    if grid is None:
        grid = build_grid(cfg, resolution)
    if profile is None:
        profile, _ = glued_curvature_profile(cfg, grid)
    op = assemble_L(grid, profile, cfg.m)
    s = grid.s
    inside = np.where(np.abs(s) <= ta + 1e-12)[0]
    i0, i1 = int(inside[0]), int(inside[-1])
    if i1 - i0 < 8:
        raise EpsilonTooLarge("window T^eps_alpha has too few grid nodes")
    psi = psi_of_t(s[i0:i1 + 1], cfg)
    lo = (n - 2) / 2.0 - delta
    hi = (n + 2) / 2.0 - delta

    win = slice(i0, i1 + 1)
    cases = []
    if probes == "standard":
        zero = np.zeros(grid.size)
        cases.append(("harmonic-extension", zero, 1.0, 1.0))
        phi = barrier_profile(cfg, delta, s)
        fphi = op.apply(phi)
        cases.append(("barrier-profile", fphi, phi[i0], phi[i1]))
        span = s[i1] - s[i0]
        fr = np.zeros(grid.size)
        xi = (s[win] - s[i0]) / span
        fr[win] = np.sin(math.pi * xi) * (1.0 + 0.4 * np.cos(3 * math.pi * xi))
        cases.append(("interior-source", fr, 0.0, 0.0))
    else:
        cases = probes

    out = []
    for name, f, left, right in cases:
        v = solve_dirichlet(op, f, i0, i1, left, right)
        num = float(np.max(psi**lo * np.abs(v)))
        den = float(np.max(psi**hi * np.abs(np.asarray(f)[win])))
        den_b = max(psi[0]**lo * abs(v[0]), psi[-1]**lo * abs(v[-1]))
        out.append((name, num / (den + den_b)))
    return LocalEstimateReport(max(r[1] for r in out), out, (i0, i1))
