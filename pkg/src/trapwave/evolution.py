"""Schrodinger evolution ``i u_t = -Delta u`` on surfaces of revolution.

The Laplacian of ``dr^2 + f(r)^2 dtheta^2`` is block diagonal in the angular
modes ``u(r, theta) = sum_m u_m(r) e^{i k_m theta} / sqrt(L)`` with
``k_m = 2 pi m / L`` and ``L`` the theta length.  Each block is discretized
by conservative second differences and symmetrized with ``v = f^(1/2) u``,
so ``-Delta`` becomes a real symmetric tridiagonal matrix ``S_m``.  Time
stepping is Crank-Nicolson with a quartic complex absorbing potential near
both ends of the radial interval.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats
from scipy.integrate import simpson
from scipy.linalg import eigh_tridiagonal, eigvalsh_tridiagonal, lapack

from .dynamics import WarpProfile
from .errors import (
    ContractViolation,
    DataInsufficiencyError,
    DomainError,
    NumericalError,
    ResolutionError,
)
from .propagator import admissible

# the TBB shipped with some numba wheels is too old; OpenMP is always available
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "omp"

PLACEMENTS = ("on_waist", "transverse", "off_center")
FILTER_POLES = 96
# the rational filter is 1e-12 at the window edges
FILTER_EDGE = 1e-12


def set_threads(n):
    """Cap the number of threads used by the per-mode kernels."""
    if n is not None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------------------
# grid and operator
# ---------------------------------------------------------------------------


@dataclass
class ModeGrid:
    """Uniform radial grid, list of angular modes and absorbing-layer width.

    Nodes are ``r_min + j dr`` for ``j < n_r`` with homogeneous Dirichlet
    values one step outside.  ``h`` sets the energy scale ``1/h^2`` of the
    absorbing potential.
    """

    r_min: float
    r_max: float
    n_r: int
    modes: np.ndarray
    profile: WarpProfile
    absorb_width: float
    h: float | None = None
    absorb_strength: float = 3.0

    def __post_init__(self):
        self.modes = np.atleast_1d(np.asarray(self.modes, dtype=np.int64))
        if self.n_r < 256:
            raise ContractViolation("n_r must be at least 256")
        if not self.r_max > self.r_min:
            raise ContractViolation("r_max must exceed r_min")
        if self.absorb_width < 0.1 * (self.r_max - self.r_min) - 1e-12:
            raise ContractViolation("absorbing zone must be at least 10% of the radial interval")
        if 2 * self.absorb_width >= self.r_max - self.r_min:
            raise ContractViolation("absorbing zones overlap")

    @property
    def r(self):
        return np.linspace(self.r_min, self.r_max, self.n_r)

    @property
    def dr(self):
        return (self.r_max - self.r_min) / (self.n_r - 1)

    @property
    def interior(self):
        return (self.r_min + self.absorb_width, self.r_max - self.absorb_width)


def make_grid(P: WarpProfile, h, modes, r_max=12.0, absorb_width=None, dr_fac=0.5, r_min=None):
    """Symmetric grid with spacing ``dr_fac * h`` and absorbing zones of width ``absorb_width``."""
    if r_min is None:
        r_min = -r_max
    if absorb_width is None:
        absorb_width = 0.1 * (r_max - r_min)
    n = int(round((r_max - r_min) / (dr_fac * h))) + 1
    return ModeGrid(float(r_min), float(r_max), max(n, 256), modes, P, float(absorb_width), float(h))


@dataclass
class Discretization:
    grid: ModeGrid
    f: np.ndarray
    diag: np.ndarray
    off: np.ndarray
    cap: np.ndarray
    _eig: dict = field(default_factory=dict, repr=False)

    @property
    def r(self):
        return self.grid.r

    @property
    def dr(self):
        return self.grid.dr

    @property
    def modes(self):
        return self.grid.modes

    def weighted_matrix(self, i):
        """Dense matrix of ``-Delta`` on mode ``i`` acting on ``u`` (not on ``v``)."""
        S = np.diag(self.diag[i]) + np.diag(self.off[i], 1) + np.diag(self.off[i], -1)
        s = np.sqrt(self.f)
        return S / s[:, None] * s[None, :]

    def eig(self, i, window=None):
        """Eigenpairs of ``S_i``, optionally restricted to eigenvalues in ``window``."""
        key = (i, window)
        if key not in self._eig:
            if window is None:
                self._eig[key] = eigh_tridiagonal(self.diag[i], self.off[i])
            else:
                self._eig[key] = eigh_tridiagonal(self.diag[i], self.off[i], select="v",
                                                  select_range=window)
        return self._eig[key]

    def max_eigenvalue(self):
        """Gershgorin bound on the spectrum of ``-Delta`` over all modes."""
        return float(np.max(self.diag[:, :-1] + 2 * np.abs(self.off)))


def _wavenumbers(grid: ModeGrid):
    return 2.0 * math.pi * grid.modes / grid.profile.theta_length


def build_discretization(P: WarpProfile, grid: ModeGrid, energy=None) -> Discretization:
    """Assemble the symmetric tridiagonal ``S_m`` for every mode of ``grid``.

    Parameters
    ----------
    energy : float, optional
        Largest energy to resolve; defaults to ``2/h^2`` when the grid has an
        ``h`` tag and to the largest ``k_m^2/f^2`` otherwise.  Fewer than
        eight points per wavelength at that energy is a resolution error.
    """
    if grid.profile is not P:
        grid.profile = P
    r, dr = grid.r, grid.dr
    f = P.f(r)
    fh = P.f(0.5 * (r[1:] + r[:-1]))
    fl = np.r_[P.f(r[0] - 0.5 * dr), fh]
    fr = np.r_[fh, P.f(r[-1] + 0.5 * dr)]
    k = _wavenumbers(grid)
    diag = (fl + fr)[None, :] / (f * dr * dr)[None, :] + (k[:, None] / f[None, :]) ** 2
    off = np.broadcast_to(-fh / (np.sqrt(f[1:] * f[:-1]) * dr * dr), (k.size, r.size - 1)).copy()

    if energy is None:
        if grid.h is not None:
            energy = 2.0 / grid.h ** 2
        else:
            lo, hi = grid.interior
            inside = (r >= lo) & (r <= hi)
            energy = float(np.max(k[:, None] ** 2 / f[None, inside] ** 2)) if k.any() else 0.0
    if energy > 0:
        ppw = 2.0 * math.pi / (math.sqrt(energy) * dr)
        if ppw < 8.0:
            raise ResolutionError(f"{ppw:.2f} points per wavelength, need at least 8")

    lo, hi = grid.interior
    W = grid.absorb_width
    x = np.clip(np.maximum(r - hi, lo - r) / W, 0.0, None)
    scale = 1.0 / grid.h ** 2 if grid.h is not None else 1.0
    cap = grid.absorb_strength * scale * x ** 4
    return Discretization(grid, f, diag, off, cap)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------


@dataclass
class WaveState:
    """Mode coefficients ``u_m(r)`` (rows follow ``disc.modes``)."""

    coefficients: np.ndarray
    disc: Discretization
    time: float = 0.0
    h: float | None = None

    def norm(self):
        """Weighted ``L^2`` norm ``(sum_m int |u_m|^2 f dr)^(1/2)``."""
        return math.sqrt(float(np.sum(np.abs(self.coefficients) ** 2 * self.disc.f[None, :])) * self.disc.dr)

    def mode_norms(self):
        return np.sqrt(np.sum(np.abs(self.coefficients) ** 2 * self.disc.f[None, :], axis=1) * self.disc.dr)

    def symmetrized(self):
        return self.coefficients * np.sqrt(self.disc.f)[None, :]

    @classmethod
    def from_symmetrized(cls, v, disc, time=0.0, h=None):
        return cls(v / np.sqrt(disc.f)[None, :], disc, time, h)

    def copy(self):
        return WaveState(self.coefficients.copy(), self.disc, self.time, self.h)

    def sample(self, n_theta=None):
        """Values on an ``(n_theta, n_r)`` grid in ``(theta, r)``."""
        return _theta_samples(self.coefficients, self.disc.modes, self.disc.grid.profile.theta_length, n_theta)[0]

    def rayleigh_quotient(self):
        v = self.symmetrized()
        Sv = self.disc.diag * v
        Sv[:, 1:] += self.disc.off * v[:, :-1]
        Sv[:, :-1] += self.disc.off * v[:, 1:]
        return float(np.real(np.sum(np.conj(v) * Sv)) / np.sum(np.abs(v) ** 2))


def _theta_count(modes):
    n = 4 * max(int(np.max(np.abs(modes))), 2)
    return int(2 ** math.ceil(math.log2(n)))


def _theta_samples(u, modes, L, n_theta=None):
    if n_theta is None:
        n_theta = _theta_count(modes)
    F = np.zeros((n_theta,) + u.shape[1:], dtype=complex)
    np.add.at(F, np.mod(modes, n_theta), u)
    return np.fft.ifft(F, axis=0) * (n_theta / math.sqrt(L)), L / n_theta


# ---------------------------------------------------------------------------
# spectral filter
# ---------------------------------------------------------------------------


def psi_window(x, window=(0.5, 2.0), n_poles=FILTER_POLES):
    """Rational bump ``1/(1 + ((x - c)/a)^N)``.

    ``c`` is the window centre and ``a`` is chosen so the bump is
    ``FILTER_EDGE`` at the window edges.  It equals 1 up to ~1e-17 on the
    middle half of the window.
    """
    lo, hi = window
    c = 0.5 * (lo + hi)
    a = 0.5 * (hi - lo) / FILTER_EDGE ** (-1.0 / n_poles)
    y = (np.asarray(x, float) - c) / a
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + y ** n_poles)


def _contour_apply(d, e, B, window, n_poles):
    """``psi(S) B`` for real symmetric tridiagonal ``S = (d, e)`` and real columns ``B``."""
    lo, hi = window
    c = 0.5 * (lo + hi)
    a = 0.5 * (hi - lo) / FILTER_EDGE ** (-1.0 / n_poles)
    ec = e.astype(complex)
    acc = np.zeros(B.shape, dtype=complex)
    for k in range(n_poles // 2):
        th = 2.0 * math.pi * (k + 0.5) / n_poles
        z = c + a * np.exp(1j * th)
        _, _, _, x, info = lapack.zgtsv(-ec, z - d, -ec, B.astype(complex))
        if info != 0:
            raise NumericalError("tridiagonal solve failed in the spectral filter", k)
        acc += (a * np.exp(1j * th) / n_poles) * x
    return 2.0 * acc.real


def spectral_filter(u: WaveState, h, psi_window_=(0.5, 2.0), method="contour", plateau=False,
                    n_poles=FILTER_POLES) -> WaveState:
    """Apply ``psi(h^2 (-Delta))`` mode by mode.

    ``method="contour"`` evaluates the rational bump through ``N/2``
    shifted tridiagonal solves; ``method="eigen"`` expands in the
    eigenvectors with eigenvalue in the window.  ``plateau=True`` replaces
    the bump by the indicator of the middle half of the window (eigen route
    only), which is an exact projector.
    """
    lo, hi = psi_window_
    if not 0 < lo < hi:
        raise ContractViolation("filter window must satisfy 0 < lo < hi")
    disc = u.disc
    h2 = h * h
    v = u.symmetrized()
    out = np.zeros_like(v)
    if plateau:
        method = "eigen"
    for i in range(v.shape[0]):
        if not np.any(v[i]):
            continue
        if method == "contour":
            if eigvalsh_tridiagonal(disc.diag[i], disc.off[i], select="v",
                                    select_range=(lo / h2, hi / h2)).size == 0:
                continue
            B = np.stack([v[i].real, v[i].imag], axis=1)
            X = _contour_apply(h2 * disc.diag[i], h2 * disc.off[i], B, (lo, hi), n_poles)
            out[i] = X[:, 0] + 1j * X[:, 1]
        elif method == "eigen":
            q = 0.25 * (hi - lo)
            sel = (lo + q, hi - q) if plateau else (lo, hi)
            mu, V = disc.eig(i, (sel[0] / h2, sel[1] / h2))
            if mu.size == 0:
                continue
            w = np.ones_like(mu) if plateau else psi_window(h2 * mu, (lo, hi), n_poles)
            out[i] = V @ (w * (V.T @ v[i]))
        else:
            raise ContractViolation(f"unknown filter method {method!r}")
    if not np.any(out):
        warnings.warn("spectral window contains no eigenvalues; filtered state is zero", RuntimeWarning)
    return WaveState.from_symmetrized(out, disc, u.time, h)


# ---------------------------------------------------------------------------
# coherent states
# ---------------------------------------------------------------------------


def _mode_set(P, h, r0, m0, theta_beta):
    if theta_beta is None:
        return np.array([m0]), np.array([1.0])
    fr = float(P.f(r0))
    L = P.theta_length
    scale = 2.0 * math.pi * fr / L
    cut = int(math.ceil(math.sqrt(2.0 * 13.8 / (h * theta_beta)) / scale))
    modes = np.arange(m0 - cut, m0 + cut + 1)
    return modes, np.exp(-0.5 * theta_beta * h * ((modes - m0) * scale) ** 2)


def coherent_state(P: WarpProfile, h, placement="on_waist", r0=None, theta_beta=None, grid_opts=None,
                   psi=(0.5, 2.0), filter_method="contour"):
    """Frequency-``1/h`` wave packet with unit weighted ``L^2`` norm.

    Parameters
    ----------
    placement : {"on_waist", "transverse", "off_center"}
        ``on_waist``: angular wavenumber ``m0 = round(f(0) L / (2 pi h))``
        and radial Gaussian ``exp(-r^2/(2h))``.  ``off_center``: the same at
        ``r0``.  ``transverse``: radial wavenumber ``1/h`` around ``m = 0``.
    theta_beta : float, optional
        If given, the packet is also localized in ``theta`` with width
        ``(theta_beta h)^(1/2)`` through a Gaussian envelope over modes; the
        radial width of a transverse packet is widened by the same factor.
        ``None`` keeps a single angular mode.
    grid_opts : dict
        Passed to :func:`make_grid` (``r_max``, ``absorb_width``, ``dr_fac``).

    Returns
    -------
    WaveState
        Filtered by :func:`spectral_filter` with window ``psi``.
    """
    if not (1.0 / 256 - 1e-15 <= h <= 1.0 / 8 + 1e-15):
        raise ContractViolation("h must lie in [1/256, 1/8]")
    if placement not in PLACEMENTS:
        raise ContractViolation(f"unknown placement {placement!r}")
    if placement == "off_center":
        if r0 is None:
            raise ContractViolation("off_center placement needs r0")
    else:
        r0 = 0.0
    L = P.theta_length
    transverse = placement == "transverse"
    m0 = 0 if transverse else int(round(float(P.f(r0)) * L / (2.0 * math.pi * h)))
    modes, weights = _mode_set(P, h, r0, m0, theta_beta)
    if np.max(np.abs(modes)) > 4.0 / h * float(P.f(r0)) + 1:
        raise ContractViolation("mode set exceeds |m| <= 4/h")
    grid = make_grid(P, h, modes, **(grid_opts or {}))
    lo, hi = grid.interior
    if not lo < r0 < hi:
        raise DomainError(f"placement r0 = {r0} outside the grid interior ({lo}, {hi})")
    disc = build_discretization(P, grid)
    r = grid.r
    if transverse:
        width = h * (theta_beta if theta_beta is not None else 1.0)
        g = np.exp(-((r - r0) ** 2) / (2.0 * width)) * np.exp(1j * (r - r0) / h)
    else:
        g = np.exp(-((r - r0) ** 2) / (2.0 * h)).astype(complex)
    u = WaveState(weights[:, None] * g[None, :], disc, 0.0, h)
    u.coefficients /= u.norm()
    u = spectral_filter(u, h, psi, method=filter_method)
    n = u.norm()
    if n == 0:
        return u
    u.coefficients /= n
    return u


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


@numba.njit(cache=True, parallel=True)
def _cn_lu(diag, off, dt):
    M, n = diag.shape
    a = 0.5j * dt
    lo = np.empty((M, n - 1), np.complex128)
    dd = np.empty((M, n), np.complex128)
    up = np.empty((M, n - 1), np.complex128)
    for m in numba.prange(M):
        dd[m, 0] = 1 + a * diag[m, 0]
        for j in range(1, n):
            up[m, j - 1] = a * off[m, j - 1]
            lo[m, j - 1] = a * off[m, j - 1] / dd[m, j - 1]
            dd[m, j] = 1 + a * diag[m, j] - lo[m, j - 1] * up[m, j - 1]
    return lo, dd, up


@numba.njit(cache=True, parallel=True)
def _cn_steps(v, diag, off, dt, n_steps, lo, dd, up):
    """``n_steps`` of ``(1 + i dt/2 A) v' = (1 - i dt/2 A) v`` per mode, in place."""
    M, n = v.shape
    a = 0.5j * dt
    for m in numba.prange(M):
        rhs = np.empty(n, np.complex128)
        for _ in range(n_steps):
            for j in range(n):
                acc = diag[m, j] * v[m, j]
                if j > 0:
                    acc += off[m, j - 1] * v[m, j - 1]
                if j < n - 1:
                    acc += off[m, j] * v[m, j + 1]
                rhs[j] = v[m, j] - a * acc
            for j in range(1, n):
                rhs[j] -= lo[m, j - 1] * rhs[j - 1]
            v[m, n - 1] = rhs[n - 1] / dd[m, n - 1]
            for j in range(n - 2, -1, -1):
                v[m, j] = (rhs[j] - up[m, j] * v[m, j + 1]) / dd[m, j]
    return v


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    absorbed: np.ndarray
    observations: dict
    stopped_early: bool = False

    @property
    def disc(self):
        return self.states[0].disc if self.states else None


def evolve(u: WaveState, dt, n_steps, stride=1, absorber=True, store=True, observers=None,
           stop_mass=1e-14, check_step=True) -> Trajectory:
    """Crank-Nicolson evolution with snapshots every ``stride`` steps.

    Parameters
    ----------
    observers : dict of callables, optional
        ``obs(t, u_coefficients)`` is called at every snapshot and its
        results are collected in ``Trajectory.observations``.  Use this
        instead of ``store=True`` for long runs.
    stop_mass : float
        Stop once the remaining mass falls below this (absorber on only).

    Raises
    ------
    NumericalError
        If a step produces non-finite values.
    """
    disc = u.disc
    if n_steps < 1 or stride < 1:
        raise ContractViolation("n_steps and stride must be positive")
    if check_step:
        top = 2.0 / u.h ** 2 if u.h is not None else disc.max_eigenvalue()
        if abs(dt) * top > math.pi / 4 + 1e-12:
            raise ContractViolation(f"dt * max eigenvalue = {abs(dt) * top:.3f} exceeds pi/4")
    diag = disc.diag - 1j * disc.cap[None, :] if absorber else disc.diag.astype(complex)
    lo, dd, up = _cn_lu(diag, disc.off.astype(complex), float(dt))
    off = disc.off.astype(complex)
    v = np.ascontiguousarray(u.symmetrized().astype(complex))
    sqf = np.sqrt(disc.f)[None, :]
    m0 = float(np.sum(np.abs(v) ** 2)) * disc.dr
    observers = observers or {}
    obs = {k: [] for k in observers}
    times, states, absorbed = [], [], []
    done = 0
    stopped = False

    def snap(t):
        coef = v / sqf
        times.append(t)
        mass = float(np.sum(np.abs(v) ** 2)) * disc.dr
        absorbed.append(m0 - mass)
        if store:
            states.append(WaveState(coef.copy(), disc, t, u.h))
        for k, fn in observers.items():
            obs[k].append(fn(t, coef))
        return mass

    snap(u.time)
    while done < n_steps:
        k = min(stride, n_steps - done)
        _cn_steps(v, diag, off, float(dt), k, lo, dd, up)
        done += k
        if not np.all(np.isfinite(v)):
            raise NumericalError("non-finite values in Crank-Nicolson step", done)
        mass = snap(u.time + done * dt)
        if absorber and mass < stop_mass:
            stopped = done < n_steps
            break
    return Trajectory(np.array(times), states, np.array(absorbed), obs, stopped)


def default_time_step(h, dt_fac=0.35):
    return dt_fac * h * h


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def chi_mask(r, chi):
    """Pointwise window: ``None`` (1), ``c`` (``|r| <= c``), ``(a, b)`` (``a <= |r| <= b``) or a callable."""
    r = np.asarray(r, float)
    if chi is None:
        return np.ones_like(r)
    if callable(chi):
        return np.asarray(chi(r), float)
    if np.isscalar(chi):
        return (np.abs(r) <= chi).astype(float)
    a, b = chi
    return ((np.abs(r) >= a) & (np.abs(r) <= b)).astype(float)


def chi_label(chi):
    if chi is None:
        return "all r"
    if callable(chi):
        return "custom"
    if np.isscalar(chi):
        return f"|r|<={chi:g}"
    return f"{chi[0]:g}<=|r|<={chi[1]:g}"


class SpatialNorm:
    """Observer computing ``||chi u(t)||_{L^q}`` with area element ``f dr dtheta``."""

    def __init__(self, disc: Discretization, q, chi=None):
        self.q = float(q)
        self.mask = chi_mask(disc.r, chi)
        self.sel = self.mask > 0
        self.w = self.mask[self.sel]
        self.f = disc.f[self.sel]
        self.dr = disc.dr
        self.modes = disc.modes
        self.L = disc.grid.profile.theta_length

    def __call__(self, t, coef):
        u = coef[:, self.sel] * self.w[None, :]
        if self.q == 2.0:
            return math.sqrt(float(np.sum(np.abs(u) ** 2 * self.f[None, :])) * self.dr)
        U, dth = _theta_samples(u, self.modes, self.L)
        a = np.abs(U)
        if math.isinf(self.q):
            return float(a.max()) if a.size else 0.0
        return float(np.sum(a ** self.q * self.f[None, :]) * self.dr * dth) ** (1.0 / self.q)


def _time_norm(times, values, p, interval):
    t0, t1 = interval
    sel = (times >= t0 - 1e-12) & (times <= t1 + 1e-12)
    if sel.sum() < 32:
        raise DataInsufficiencyError(32, int(sel.sum()), f"need at least 32 snapshots in {interval}, got {int(sel.sum())}")
    t, y = times[sel], np.asarray(values)[sel]
    if math.isinf(p):
        return float(y.max())
    return float(simpson(y ** p, x=t)) ** (1.0 / p)


@dataclass
class NormRow:
    value: float
    p: float
    q: float
    window: str


def mixed_norm(traj: Trajectory, p, q, chi=None, interval=(0.0, 1.0), key=None) -> NormRow:
    """``||chi u||_{L^p(interval; L^q)}`` from stored snapshots.

    The time integral is composite Simpson over the snapshots inside the
    interval.  ``key`` selects a precomputed :class:`SpatialNorm` observer
    instead of the stored states.  If the run stopped early because the
    mass was absorbed the missing tail counts as zero.
    """
    if key is not None:
        vals = traj.observations[key]
    else:
        if not traj.states:
            raise DataInsufficiencyError(32, 0, "trajectory has no stored snapshots")
        obs = SpatialNorm(traj.states[0].disc, q, chi)
        vals = [obs(s.time, s.coefficients) for s in traj.states]
    label = f"{chi_label(chi)}, t in ({interval[0]:g},{interval[1]:g})"
    if traj.stopped_early:
        interval = (interval[0], min(interval[1], float(traj.times[-1])))
    return NormRow(_time_norm(traj.times, np.array(vals), float(p), interval), float(p), float(q), label)


class SobolevObserver:
    """Observer for ``||(1 - c Delta)^(s/2) (chi u)||_{L^2}`` per snapshot, squared.

    ``c = h^2`` (semiclassical) or ``c = 1``.  Uses the full eigenbasis of
    every mode restricted to the rows inside the window.
    """

    def __init__(self, disc: Discretization, chi, h=None, s=0.5):
        mask = chi_mask(disc.r, chi)
        self.sel = np.nonzero(mask > 0)[0]
        self.w = mask[self.sel]
        self.sqf = np.sqrt(disc.f[self.sel])
        self.dr = disc.dr
        c = h * h if h is not None else 1.0
        self.rows = []
        self.weights = []
        for i in range(disc.modes.size):
            mu, V = eigh_tridiagonal(disc.diag[i], disc.off[i])
            self.rows.append(np.ascontiguousarray(V[self.sel, :].T))
            self.weights.append((1.0 + c * mu) ** s)

    def __call__(self, t, coef):
        total = 0.0
        for i in range(len(self.rows)):
            v = coef[i, self.sel] * self.w * self.sqf
            c = self.rows[i] @ v
            total += float(np.sum(self.weights[i] * np.abs(c) ** 2))
        return total * self.dr


def smoothing_norm(traj: Trajectory, chi, h, interval=(0.0, 1.0), key=None, semiclassical=True) -> NormRow:
    """``||chi u||_{L^2(interval; H^(1/2))}`` with ``H^(1/2)`` realized by ``(1 - c Delta)^(1/4)``.

    ``c = h^2`` when ``semiclassical`` is true (so the norm is comparable
    to the ``L^2`` norm for data at frequency ``1/h``), else ``c = 1``.
    """
    if key is not None:
        sq = np.array(traj.observations[key])
    else:
        if not traj.states:
            raise DataInsufficiencyError(32, 0, "trajectory has no stored snapshots")
        obs = SobolevObserver(traj.states[0].disc, chi, h if semiclassical else None)
        sq = np.array([obs(s.time, s.coefficients) for s in traj.states])
    label = f"{chi_label(chi)}, t in ({interval[0]:g},{interval[1]:g})"
    if traj.stopped_early:
        interval = (interval[0], min(interval[1], float(traj.times[-1])))
    val = _time_norm(traj.times, sq, 1.0, interval)
    return NormRow(math.sqrt(max(val, 0.0)), 2.0, 2.0, label)


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


@dataclass
class NormScanResult:
    rows: list
    slope: float
    slope_stderr: float
    p: float
    q: float
    window: str
    fit: str = ""
    extra: dict = field(default_factory=dict)

    def csv_rows(self):
        return [(h, v, self.p, self.q, self.window) for h, v in self.rows]

    def to_json(self):
        return {"slope": self.slope, "slope_stderr": self.slope_stderr, "p": self.p, "q": self.q,
                "window": self.window, "fit": self.fit, "n_points": len(self.rows)}


def _loglog(x, y):
    fit = stats.linregress(np.log(x), np.log(y))
    return float(fit.slope), float(fit.stderr)


def _octaves(h_list):
    return math.log2(max(h_list) / min(h_list))


def run_packet(P, h, placement="on_waist", theta_beta=None, r0=None, T=1.0, grid_opts=None, dt_fac=0.35,
               stride=None, observers=None, absorber=True):
    """Build a coherent state, evolve it over ``(0, T)`` and return ``(u0, trajectory)``.

    ``observers`` maps names to factories ``make(disc) -> callable``.
    """
    u0 = coherent_state(P, h, placement, r0=r0, theta_beta=theta_beta, grid_opts=grid_opts)
    dt = dt_fac * h * h
    n = int(math.ceil(T / dt))
    dt = T / n
    if stride is None:
        stride = max(1, int(h / 40.0 / dt))
    made = {k: mk(u0.disc) for k, mk in (observers or {}).items()}
    traj = evolve(u0, dt, n, stride=stride, absorber=absorber, store=False, observers=made)
    return u0, traj


def strichartz_scan(P, placement, h_list, p=4.0, q=4.0, chi=1.0, theta_beta=9.0, grid_opts=None,
                    dt_fac=0.35, T=1.0):
    """Fit ``log ||chi u||_{L^p(0,T; L^q)}`` against ``log(1/h)`` over ``h_list``.

    Each run starts from a unit-norm coherent state, so the norm is the
    ratio to ``||u0||_{L^2}``.  A slope near zero means no loss.
    """
    if not admissible(p, q, 1, "euclidean_line"):
        raise ContractViolation(f"(p, q) = ({p}, {q}) is not admissible for d = 2")
    if _octaves(h_list) < 3 - 1e-9:
        raise ContractViolation("h_list must span at least 3 octaves")
    rows = []
    for h in sorted(h_list, reverse=True):
        _, traj = run_packet(P, h, placement, theta_beta, T=T, grid_opts=grid_opts, dt_fac=dt_fac,
                             observers={"lq": lambda d: SpatialNorm(d, q, chi)})
        rows.append((float(h), mixed_norm(traj, p, q, chi, (0.0, T), key="lq").value))
    hs = np.array([r[0] for r in rows])
    slope, err = _loglog(1.0 / hs, np.array([r[1] for r in rows]))
    return NormScanResult(rows, slope, err, float(p), float(q), f"{chi_label(chi)}, t in (0,{T:g})",
                          "log norm vs log(1/h)")


def smoothing_scan(P, h_list, chi, scaling="hlogh", placement="on_waist", theta_beta=None, grid_opts=None,
                   dt_fac=0.35, T=1.0, semiclassical=True):
    """Fit ``log(norm^2)`` of the smoothing norm against ``log(h |log h|)`` or ``log h``."""
    if scaling not in ("hlogh", "h"):
        raise ContractViolation("scaling must be 'hlogh' or 'h'")
    rows = []
    for h in sorted(h_list, reverse=True):
        _, traj = run_packet(P, h, placement, theta_beta, T=T, grid_opts=grid_opts, dt_fac=dt_fac,
                             observers={"hs": lambda d: SobolevObserver(d, chi, h if semiclassical else None)})
        rows.append((float(h), smoothing_norm(traj, chi, h, (0.0, T), key="hs").value))
    hs = np.array([r[0] for r in rows])
    x = hs * np.abs(np.log(hs)) if scaling == "hlogh" else hs
    slope, err = _loglog(x, np.array([r[1] for r in rows]) ** 2)
    return NormScanResult(rows, slope, err, 2.0, 2.0, f"{chi_label(chi)}, t in (0,{T:g})",
                          f"log norm^2 vs log({'h|log h|' if scaling == 'hlogh' else 'h'})")


def smoothing_contrast(P, h_list, chi_on=0.25, chi_off=(2.0, 3.0), placement="on_waist", theta_beta=None,
                       grid_opts=None, dt_fac=0.35, T=1.0, semiclassical=True):
    """On-waist and off-waist smoothing scans from the same runs.

    Returns
    -------
    on, off : NormScanResult
        ``on`` is fitted against ``h |log h|`` and ``off`` against ``h``.
    ratio : ndarray
        ``norm_on / norm_off`` in the order of decreasing ``h``.
    """
    on_rows, off_rows = [], []
    for h in sorted(h_list, reverse=True):
        obs = {
            "on": lambda d, h=h: SobolevObserver(d, chi_on, h if semiclassical else None),
            "off": lambda d, h=h: SobolevObserver(d, chi_off, h if semiclassical else None),
        }
        _, traj = run_packet(P, h, placement, theta_beta, T=T, grid_opts=grid_opts, dt_fac=dt_fac, observers=obs)
        on_rows.append((float(h), smoothing_norm(traj, chi_on, h, (0.0, T), key="on").value))
        off_rows.append((float(h), smoothing_norm(traj, chi_off, h, (0.0, T), key="off").value))
    hs = np.array([r[0] for r in on_rows])
    on_v = np.array([r[1] for r in on_rows])
    off_v = np.array([r[1] for r in off_rows])
    s_on, e_on = _loglog(hs * np.abs(np.log(hs)), on_v ** 2)
    s_off, e_off = _loglog(hs, off_v ** 2)
    on = NormScanResult(on_rows, s_on, e_on, 2.0, 2.0, f"{chi_label(chi_on)}, t in (0,{T:g})", "log norm^2 vs log(h|log h|)")
    off = NormScanResult(off_rows, s_off, e_off, 2.0, 2.0, f"{chi_label(chi_off)}, t in (0,{T:g})", "log norm^2 vs log(h)")
    return on, off, on_v / off_v
