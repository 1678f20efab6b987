"""Independent reference computations used only by the test-suite."""

import math

import numpy as np
from scipy.special import roots_legendre


def h2_kernel_oracle(t, rho, s_max=None, order=16, phase_per_panel=0.5, max_width=0.01):
    """H^2 Schrodinger kernel by brute-force fixed-panel quadrature.

    Substitutes ``s = rho + w^2`` so the endpoint singularity disappears,
    then integrates on uniform panels in ``w`` out to ``s_max`` without any
    asymptotic tail correction.
    """
    alpha = 1.0 / (4.0 * abs(t))
    if s_max is None:
        s_max = rho + 80.0
    w_max = math.sqrt(s_max - rho)
    # largest phase derivative in w: d/dw alpha (rho + w^2)^2 = 4 alpha w (rho + w^2)
    dphase = 4.0 * alpha * w_max * s_max
    width = min(max_width, phase_per_panel / dphase)
    n_panels = int(math.ceil(w_max / width))
    x, wts = roots_legendre(order)
    edges = np.linspace(0.0, w_max, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    w = (mid[:, None] + half[:, None] * x[None, :])
    s = rho + w * w
    gap = 2.0 * np.sinh(0.5 * (s + rho)) * np.sinh(0.5 * w * w)
    # 2 w / sqrt(gap) is finite as w -> 0
    jac = 2.0 / np.sqrt(gap / (w * w))
    f = s * jac * np.exp(1j * alpha * s * s)
    integral = np.sum(half * (f @ wts))
    tt = abs(t)
    pref = math.sqrt(2.0) * (4.0 * math.pi * tt) ** -1.5 * np.exp(-0.75j * math.pi) * np.exp(-0.25j * tt)
    val = pref * integral
    return np.conj(val) if t < 0 else val


def delta_bisection(G, R_max, s_lo=0.0, s_hi=1.0, tol=1e-6, cap=10**7):
    """Critical exponent from the divergence of the Poincare series.

    For a trial ``s`` the unit-shell increments of ``poincare_partial_sum``
    over ``[R_max/2, R_max]`` grow exponentially when ``s < delta`` and
    decay when ``s > delta``.  Bisection on the sign of the fitted log
    growth rate locates ``delta``; the stderr is that of the fit at the root.
    """
    from scipy.stats import linregress

    from trapwave.hyperbolic import poincare_partial_sum

    z = G.basepoint
    radii = np.arange(np.ceil(R_max / 2.0), np.floor(R_max) + 1.0)

    def rate(s):
        partial = np.array([poincare_partial_sum(G, s, z, z, R, cap)[0] for R in radii])
        inc = np.diff(partial)
        fit = linregress(radii[1:], np.log(inc))
        return fit.slope, fit.stderr

    lo, hi = s_lo, s_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rate(mid)[0] > 0:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)
    return s, rate(s)[1]


# 6th-order central differences
D1 = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
D2 = np.array([2, -27, 270, -490, 270, -27, 2]) / 180.0
OFFSETS = np.arange(-3, 4)


def h3_pde_residual(t, rho, h=1e-3):
    """``|i K_t + K_rr + 2 coth(rho) K_r| / |K|`` for the closed-form H^3 kernel."""
    from trapwave.propagator import kernel_h3_values

    kt = np.array([kernel_h3_values(t + k * h, rho) for k in OFFSETS])
    kr = kernel_h3_values(t, rho + OFFSETS * h)
    K = kr[3]
    dt = D1 @ kt / h
    dr = D1 @ kr / h
    drr = D2 @ kr / (h * h)
    lap = drr + 2.0 / math.tanh(rho) * dr
    return abs(1j * dt + lap) / abs(K)


def free_gaussian(r, t, a0):
    """Exact solution of ``i u_t = -u_rr`` from ``exp(-r^2/(4 a0))``."""
    a = a0 + 1j * t
    return np.sqrt(a0 / a) * np.exp(-(r ** 2) / (4 * a))
