"""Schrodinger kernels on H^2 and H^3 and their averages over discrete groups.

Conventions: ``Delta`` is the Laplace-Beltrami operator (nonpositive), the
kernel solves ``i dK/dt = -Delta K``, and ``(i t)^(-3/2)`` uses the
principal branch, ``|t|^(-3/2) exp(-i sgn(t) 3 pi / 4)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (
    ContractViolation,
    DataInsufficiencyError,
    DomainError,
    QuadratureError,
    UnsupportedRegimeError,
)
from .hyperbolic import (
    DEFAULT_CAP,
    GroupSpec,
    HPoint,
    estimate_delta,
    growth_rate,
    hyp_distance,
    orbit_distances,
    orbit_table,
    shell_tail,
)

FOUR_PI = 4.0 * math.pi
# |K_H3| (4 pi |t|)^(3/2) = rho / sinh rho exactly
C_H3 = FOUR_PI ** -1.5
# envelope constants for the H^2 kernel: the sup of
# |K| |t|^a / ((rho/sinh rho)^(1/2) (1+rho)^(1/2)) over a dense (t, rho) grid
# is reached at rho = 0 in the limits t -> 0 (value 1/(4 pi)) and t -> inf
# (value sqrt(pi)/8); a 5% margin is added (demos/calibrate_h2_envelope.py)
C_H2_SMALL = 1.05 / FOUR_PI
C_H2_LARGE = 1.05 * math.sqrt(math.pi) / 8.0

_GL_LO = np.polynomial.legendre.leggauss(20)
_GL_HI = np.polynomial.legendre.leggauss(28)
_PANEL_PHASE = 6.0
_PANEL_WIDTH = 1.0
_MAX_ROUNDS = 40


@dataclass(frozen=True)
class KernelSample:
    t: float
    rho: float
    value: complex
    quad_error: float = 0.0


@dataclass(frozen=True)
class AutomorphicSample:
    t: float
    z: HPoint
    zp: HPoint
    value: complex
    truncation_R: float
    tail_estimate: float
    quad_error: float = 0.0
    n_terms: int = 0


@dataclass(frozen=True)
class DecayFit:
    regime: str
    exponent: float
    residual: float
    constant: float
    n_points: int

    def to_json(self):
        return {"regime": self.regime, "exponent": self.exponent, "constant": self.constant,
                "residual": self.residual, "n_points": self.n_points}


def _check_t(t):
    t = float(t)
    if t == 0.0 or not math.isfinite(t):
        raise DomainError(f"kernel needs finite nonzero t, got {t}")
    return t


def _it_pow(t, power):
    """``(i t)^power`` on the principal branch."""
    return abs(t) ** power * np.exp(1j * math.copysign(math.pi / 2, t) * power)


def _rho_over_sinh(rho):
    rho = np.asarray(rho, dtype=float)
    out = np.ones_like(rho)
    big = rho > 1e-8
    out[big] = rho[big] / np.sinh(rho[big])
    small = ~big
    out[small] = 1.0 - rho[small] ** 2 / 6.0
    return out


# ---------------------------------------------------------------------------
# H^3
# ---------------------------------------------------------------------------


def kernel_h3_values(t, rho):
    """Vectorized closed form ``(4 pi i t)^(-3/2) (rho/sinh rho) e^(-it) e^(i rho^2/4t)``."""
    t = _check_t(t)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ContractViolation("rho must be nonnegative")
    pref = FOUR_PI ** -1.5 * _it_pow(t, -1.5) * np.exp(-1j * t)
    return pref * _rho_over_sinh(rho) * np.exp(1j * rho * rho / (4.0 * t))


def kernel_h3(t, rho) -> KernelSample:
    """Schrodinger kernel of H^3 as a function of the distance ``rho``."""
    v = kernel_h3_values(t, rho)
    return KernelSample(float(t), float(rho), complex(v), 0.0)


# ---------------------------------------------------------------------------
# H^2: oscillatory integral
# ---------------------------------------------------------------------------


def _cosh_gap(s, rho):
    """``cosh s - cosh rho`` without cancellation."""
    return 2.0 * np.sinh(0.5 * (s + rho)) * np.sinh(0.5 * (s - rho))


def _arccosh1p(x):
    return np.log1p(x + np.sqrt(x * (2.0 + x)))


def _panel_integrate(fun, a, b, owner, n_owner, tol):
    """Adaptive Gauss-Legendre panel quadrature, vectorized over panels.

    ``fun(x, owner)`` evaluates the integrand of owner ``owner[k]`` at the
    points ``x``.  Panels whose 20/28-point discrepancy exceeds their share
    of ``tol[owner]`` are bisected.  Returns the integrals and the summed
    error estimates per owner.
    """
    xl, wl = _GL_LO
    xh, wh = _GL_HI
    total = np.zeros(n_owner, dtype=complex)
    err = np.zeros(n_owner)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    owner = np.asarray(owner, int)
    full = b - a
    for _ in range(_MAX_ROUNDS):
        if a.size == 0:
            return total, err, True
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        own_l = np.repeat(owner, xl.size)
        own_h = np.repeat(owner, xh.size)
        fl = fun((mid[:, None] + half[:, None] * xl[None, :]).ravel(), own_l).reshape(a.size, xl.size)
        fh = fun((mid[:, None] + half[:, None] * xh[None, :]).ravel(), own_h).reshape(a.size, xh.size)
        ql = half * (fl @ wl)
        qh = half * (fh @ wh)
        e = np.abs(qh - ql)
        # each panel may spend tol in proportion to its share of the owner's range
        share = tol[owner] * (b - a) / full
        ok = e <= share
        np.add.at(total, owner[ok], qh[ok])
        np.add.at(err, owner[ok], e[ok])
        bad = ~ok
        if not bad.any():
            return total, err, True
        a, b, owner, full = a[bad], b[bad], owner[bad], full[bad]
        mid = 0.5 * (a + b)
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
        owner = np.concatenate([owner, owner])
        full = np.concatenate([full, full])
    # out of refinement budget: finish with what we have and report it
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    fh = fun((mid[:, None] + half[:, None] * xh[None, :]).ravel(), np.repeat(owner, xh.size)).reshape(a.size, xh.size)
    fl = fun((mid[:, None] + half[:, None] * xl[None, :]).ravel(), np.repeat(owner, xl.size)).reshape(a.size, xl.size)
    qh = half * (fh @ wh)
    np.add.at(total, owner, qh)
    np.add.at(err, owner, np.abs(qh - half * (fl @ wl)))
    return total, err, False


def _phase_panels(lo, hi, alpha, owner_rho):
    """Panel edges in ``s`` on [lo, hi] with bounded phase and width per panel."""
    edges_a, edges_b, owners = [], [], []
    for k, (s0, s1) in enumerate(zip(lo, hi)):
        dphi = alpha * (s1 * s1 - s0 * s0)
        n_phase = int(math.ceil(dphi / _PANEL_PHASE))
        n_width = int(math.ceil((s1 - s0) / _PANEL_WIDTH))
        if n_phase >= n_width:
            # equal phase steps: s_k = sqrt(s0^2 + k dphi / (n alpha))
            q = np.linspace(0.0, 1.0, n_phase + 1)
            e = np.sqrt(s0 * s0 + q * (s1 * s1 - s0 * s0))
        else:
            e = np.linspace(s0, s1, n_width + 1)
        edges_a.append(e[:-1])
        edges_b.append(e[1:])
        owners.append(np.full(e.size - 1, owner_rho[k]))
    return np.concatenate(edges_a), np.concatenate(edges_b), np.concatenate(owners)


def _ibp_terms(S, rho, alpha):
    """Two integration-by-parts terms of the tail beyond ``S`` and a remainder bound.

    With ``a(s) = s u^(-1/2)``, ``u = cosh s - cosh rho`` and phase
    ``alpha s^2``: ``g1 = a/(i phi') = u^(-1/2)/(2 i alpha)``,
    ``g2 = g1'/(i phi')``, tail ``= (g2(S) - g1(S)) e^(i phi(S)) + int g2' e^(i phi)``.
    """
    u = _cosh_gap(S, rho)
    sh = np.sinh(S)
    ch = np.cosh(S)
    c = u ** -0.5
    c1 = -0.5 * sh * u ** -1.5
    c2 = -0.5 * ch * u ** -1.5 + 0.75 * sh * sh * u ** -2.5
    c3 = -1.875 * sh ** 3 * u ** -3.5 + 2.25 * sh * ch * u ** -2.5 - 0.5 * sh * u ** -1.5
    k = 1.0 / (4.0 * alpha * alpha)
    g1 = c / (2j * alpha)
    g2 = -k * c1 / S
    dg2 = -k * (c2 / S - c1 / S ** 2)
    ddg2 = -k * (c3 / S - 2.0 * c2 / S ** 2 + 2.0 * c1 / S ** 3)
    # the remainder int_S^inf g2' e^(i phi) is bounded either directly or after
    # one more integration by parts with g3 = g2' / phi'; the integrands decay
    # like exp(-s/2), so int_S^inf |f| <= 2 |f(S)|, doubled for safety
    g3 = dg2 / (2.0 * alpha * S)
    dg3 = (ddg2 / S - dg2 / S ** 2) / (2.0 * alpha)
    rem = np.minimum(4.0 * np.abs(dg2), np.abs(g3) + 4.0 * np.abs(dg3))
    phase = np.exp(1j * alpha * S * S)
    return (g2 - g1) * phase, rem


def h2_integral(t, rho, rtol=1e-11, atol=0.0):
    """``I(t, rho) = int_rho^inf s e^(i s^2/4t) (cosh s - cosh rho)^(-1/2) ds``.

    Vectorized over ``rho``.  The segment ``[rho, rho+1]`` uses the
    substitution ``cosh s = cosh rho + v^2``, which turns the integrand
    into the smooth ``2 (s/sinh s) e^(i s^2/4t)``; ``[rho+1, S]`` is
    integrated directly; the tail beyond ``S`` takes two integrations by
    parts, with ``S`` pushed out until the remainder bound meets the
    tolerance.

    Returns
    -------
    values, errors : ndarray
        Integral values and error estimates (quadrature plus remainder).
    """
    t = _check_t(t)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.any(rho < 0):
        raise ContractViolation("rho must be nonnegative")
    if t < 0:
        v, e = h2_integral(-t, rho, rtol, atol)
        return np.conj(v), e
    alpha = 1.0 / (4.0 * t)
    n = rho.size
    idx = np.arange(n)

    # segment A in v, with panel edges taken from equal phase steps in s
    lo_s, hi_s = rho, rho + 1.0
    pa, pb, own = _phase_panels(lo_s, hi_s, alpha, idx)
    va = np.sqrt(np.maximum(_cosh_gap(pa, rho[own]), 0.0))
    vb = np.sqrt(np.maximum(_cosh_gap(pb, rho[own]), 0.0))
    base = 2.0 * np.sinh(0.5 * rho) ** 2

    def seg_a(v, o):
        s = _arccosh1p(base[o] + v * v)
        return 2.0 * _rho_over_sinh(s) * np.exp(1j * alpha * s * s)

    def seg_a_abs(v, o):
        s = _arccosh1p(base[o] + v * v)
        return (2.0 * _rho_over_sinh(s)).astype(complex)

    scale, _, _ = _panel_integrate(seg_a_abs, va, vb, own, n, np.full(n, 1e-6))
    scale = np.abs(scale)
    tol = np.maximum(rtol * scale, atol)
    ia, ea, ok_a = _panel_integrate(seg_a, va, vb, own, n, 0.5 * tol)

    # cut point: smallest S = rho + L (L = 2, 4, ...) meeting the remainder bound
    L = np.full(n, 2.0)
    for _ in range(200):
        _, rem = _ibp_terms(rho + L, rho, alpha)
        need = rem > 0.25 * tol
        if not need.any():
            break
        L[need] += 2.0
    S = rho + L
    tail, rem = _ibp_terms(S, rho, alpha)

    def seg_b(s, o):
        return s * np.exp(1j * alpha * s * s) / np.sqrt(_cosh_gap(s, rho[o]))

    pa, pb, own = _phase_panels(rho + 1.0, S, alpha, idx)
    ib, eb, ok_b = _panel_integrate(seg_b, pa, pb, own, n, 0.25 * tol)
    values = ia + ib + tail
    errors = ea + eb + rem
    return values, errors


def kernel_h2_values(t, rho, rtol=1e-11, atol=1e-13):
    """Vectorized H^2 kernel ``sqrt(2) (4 pi i t)^(-3/2) e^(-it/4) I(t, rho)``.

    Returns values and absolute error estimates.
    """
    t = _check_t(t)
    pref = math.sqrt(2.0) * FOUR_PI ** -1.5 * _it_pow(t, -1.5) * np.exp(-0.25j * t)
    apref = abs(pref)
    vals, errs = h2_integral(t, rho, rtol=rtol, atol=atol / apref)
    return pref * vals, apref * errs


def kernel_h2(t, rho, tol=1e-8) -> KernelSample:
    """Schrodinger kernel of H^2 by oscillatory quadrature.

    Raises
    ------
    QuadratureError
        If the error estimate exceeds ``tol`` (absolute, or relative to
        the value when that is larger than one).
    """
    rho = float(rho)
    v, e = kernel_h2_values(t, np.array([rho]))
    v, e = complex(v[0]), float(e[0])
    if not e <= tol * max(1.0, abs(v)):
        raise QuadratureError(e)
    return KernelSample(float(t), rho, v, e)


def kernel_values(n, t, rho):
    """Kernel of H^(n+1) for ``n`` in {1, 2}; returns values and error estimates."""
    if n == 2:
        v = kernel_h3_values(t, rho)
        return v, np.zeros(np.shape(v))
    if n == 1:
        return kernel_h2_values(t, rho)
    raise ContractViolation(f"kernels implemented for n in {{1, 2}}, got {n}")


# ---------------------------------------------------------------------------
# envelopes
# ---------------------------------------------------------------------------


def envelope_profile(rho, n):
    """Spatial factor of the modulus bound.

    ``rho/sinh rho`` for ``n=2``; ``(rho/sinh rho)^(1/2) (1+rho)^(1/2)``
    for ``n=1``, where the extra factor keeps the bound uniform when
    ``rho`` grows with ``t``.
    """
    rho = np.asarray(rho, dtype=float)
    if n == 2:
        return _rho_over_sinh(rho)
    return np.sqrt(_rho_over_sinh(rho) * (1.0 + rho))


def envelope_constant(t, n):
    """Time factor ``C |t|^(-(n+1)/2)`` for ``|t| <= 1`` and ``C |t|^(-3/2)`` beyond."""
    at = abs(float(t))
    if n == 2:
        return C_H3 * at ** -1.5
    if at <= 1.0:
        return C_H2_SMALL / at
    return C_H2_LARGE * at ** -1.5


def bound_envelope(t, rho, n):
    return envelope_constant(t, n) * envelope_profile(rho, n)


def _tail_weight(n, offset):
    """Nonincreasing majorant of the spatial envelope at distance ``r - offset``."""
    s = n / 2.0
    # rho/sinh rho <= 2 (1+rho) e^(-rho), so 2 (1+rho) e^(-s rho) bounds both
    # profiles; it peaks at rho = 1/s - 1
    peak = max(1.0 / s - 1.0, 0.0)

    def w(r):
        x = max(r - offset, peak)
        return 2.0 * (1.0 + x) * math.exp(-s * x)

    return w


# ---------------------------------------------------------------------------
# group averages
# ---------------------------------------------------------------------------


def _check_regime(G, R, cap):
    n = G.n
    if G.kind == "cyclic":
        return 0.0
    tab = orbit_table(G, R, cap)
    if len(tab) >= 50:
        try:
            delta = estimate_delta(G, R, cap)[0]
        except DataInsufficiencyError:
            delta = growth_rate(G, R, cap)
    else:
        delta = growth_rate(G, R, cap)
    if delta >= n / 2.0:
        raise UnsupportedRegimeError(f"estimated delta = {delta:.4f} is not below n/2 = {n / 2}")
    return delta


def automorphic_kernel(G: GroupSpec, t, z: HPoint, zp: HPoint, R, cap=DEFAULT_CAP) -> AutomorphicSample:
    """Group-summed kernel ``sum_gamma K(t; z, gamma z')`` over ``r_gamma <= R``.

    The tail estimate is the kernel envelope at ``t`` times the
    extrapolated sum of ``2 (1+rho) e^(-n rho/2)`` over the omitted orbit
    shells, with ``rho >= r_gamma - d(z,e) - d(z',e)``.
    """
    t = _check_t(t)
    n = G.n
    delta = _check_regime(G, R, cap)
    rho = orbit_distances(G, z, zp, R, cap)
    if n == 1:
        # far terms only need accuracy relative to the size of the sum
        vals, errs = kernel_h2_values(t, rho, rtol=1e-10, atol=1e-11 * envelope_constant(t, 1))
    else:
        vals, errs = kernel_values(n, t, rho)
    value = complex(np.sum(vals))
    e = G.basepoint
    offset = hyp_distance(z, e) + hyp_distance(zp, e)
    disp = orbit_table(G, R, cap).disp
    w = G.min_displacement()
    tail = envelope_constant(t, n) * shell_tail(disp, R, w, delta, _tail_weight(n, offset))
    return AutomorphicSample(t, z, zp, value, float(R), float(tail), float(np.sum(errs)), int(rho.size))


def default_sample_pairs(G: GroupSpec):
    """Twelve point pairs: near the axis of the first generator, mid-range, far apart.

    The axis of a dilation is the vertical through the basepoint; pairs are
    placed relative to the basepoint ``e`` so they also make sense for
    other groups.
    """
    dim = G.dim
    x0 = G.basepoint.coords[0]
    y0 = G.basepoint.height

    def P(dx, y):
        if dim == 2:
            return HPoint(2, (x0 + dx * y0, y * y0))
        return HPoint(3, (x0 + dx * y0, 0.3 * dx * y0, y * y0))

    return [
        # on or near the axis
        (P(0.0, 1.0), P(0.0, 1.0)),
        (P(0.0, 1.5), P(0.0, 1.5)),
        (P(0.05, 1.0), P(0.0, 1.0)),
        (P(0.0, 1.0), P(0.0, 1.3)),
        # mid-range
        (P(0.5, 1.0), P(0.5, 1.0)),
        (P(0.0, 1.0), P(1.0, 1.0)),
        (P(-1.0, 2.0), P(0.5, 1.0)),
        (P(0.3, 0.6), P(-0.4, 1.6)),
        # far apart
        (P(0.0, 1.0), P(3.0, 1.0)),
        (P(-2.0, 1.0), P(2.0, 0.5)),
        (P(0.0, 0.5), P(0.0, 4.0)),
        (P(1.5, 2.0), P(-3.0, 1.0)),
    ]


def log_time_grid(t_min=0.01, t_max=100.0, per_decade=10):
    """Logarithmic grid with exactly ``per_decade`` points per decade, including t = 1."""
    lo = math.log10(t_min)
    hi = math.log10(t_max)
    k0 = math.ceil(lo * per_decade - 1e-9)
    k1 = math.floor(hi * per_decade + 1e-9)
    return 10.0 ** (np.arange(k0, k1 + 1) / per_decade)


def _fit(regime, t, m):
    if len(t) < 4:
        raise DataInsufficiencyError(4, len(t), f"{regime} regime needs at least 4 time points, got {len(t)}")
    x, y = np.log(t), np.log(m)
    fit = stats.linregress(x, y)
    res = y - (fit.intercept + fit.slope * x)
    return DecayFit(regime, float(fit.slope), float(np.sqrt(np.mean(res * res))), float(math.exp(fit.intercept)), len(t))


def dispersive_table(G: GroupSpec, t_grid, sample_pairs=None, R=20.0, cap=DEFAULT_CAP):
    """Rows ``(t, max_abs, tail_max)`` of the max over sample pairs of ``|K_X|``."""
    if sample_pairs is None:
        sample_pairs = default_sample_pairs(G)
    rows = []
    for t in t_grid:
        best, tail = 0.0, 0.0
        for z, zp in sample_pairs:
            a = automorphic_kernel(G, t, z, zp, R, cap)
            best = max(best, abs(a.value))
            tail = max(tail, a.tail_estimate)
        rows.append((float(t), best, tail))
    return rows


def fit_decay(rows):
    t = np.array([r[0] for r in rows])
    m = np.array([r[1] for r in rows])
    small = t <= 1.0
    return _fit("small_time", t[small], m[small]), _fit("large_time", t[~small], m[~small])


def dispersive_scan(G: GroupSpec, t_grid, sample_pairs=None, R=20.0, cap=DEFAULT_CAP, return_rows=False):
    """Fit ``log max|K_X|`` against ``log t`` separately on ``t <= 1`` and ``t > 1``.

    Returns
    -------
    small, large : DecayFit
        With ``return_rows=True`` the table rows are returned as a third item.
    """
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    if np.any(t_grid <= 0):
        raise ContractViolation("time grid must be positive")
    for name, sel in (("small_time", t_grid <= 1.0), ("large_time", t_grid > 1.0)):
        if sel.sum() < 4:
            raise DataInsufficiencyError(4, int(sel.sum()), f"{name} regime needs at least 4 time points, got {int(sel.sum())}")
    rows = dispersive_table(G, t_grid, sample_pairs, R, cap)
    small, large = fit_decay(rows)
    if return_rows:
        return small, large, rows
    return small, large


# ---------------------------------------------------------------------------
# exponent arithmetic
# ---------------------------------------------------------------------------


def admissible(p, q, n, family="euclidean_line", tol=1e-12) -> bool:
    """Membership of ``(p, q)`` in an admissible family for dimension ``d = n + 1``.

    ``euclidean_line``: ``2/p + d/q = d/2`` (within ``tol``), excluding
    the endpoint ``(2, inf)``.  ``hyperbolic_triangle``: ``(1/p, 1/q)`` in
    ``(0, 1/2] x (0, 1/2)`` with ``2/p >= (n+1)/2 - (n+1)/q``, together
    with the isolated point ``(0, 1/2)``.  ``math.inf`` is accepted.
    """
    p, q = float(p), float(q)
    if p < 2 or q < 2:
        return False
    ip, iq = 1.0 / p, 1.0 / q
    d = n + 1
    if family == "euclidean_line":
        if p == 2 and math.isinf(q):
            return False
        return abs(2.0 * ip + d * iq - d / 2.0) <= tol
    if family == "hyperbolic_triangle":
        if ip == 0.0 and abs(iq - 0.5) <= tol:
            return True
        if not (0.0 < ip <= 0.5 + tol and 0.0 < iq < 0.5 - tol):
            return False
        return 2.0 * ip >= d / 2.0 - d * iq - tol
    raise ContractViolation(f"unknown family {family!r}")
