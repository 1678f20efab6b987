import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eigh_tridiagonal

from trapwave import dynamics as dyn
from trapwave import evolution as ev
from trapwave.errors import ContractViolation, DataInsufficiencyError, DomainError, ResolutionError

from oracles import free_gaussian


@pytest.fixture(scope="module")
def cosh():
    return dyn.build_profile("pure_cosh")


@pytest.fixture(scope="module")
def flat():
    return dyn.flat_profile()


def fine_flat_grid(P, r_max=12.0, dr=0.0125, modes=(0,)):
    n = int(round(2 * r_max / dr)) + 1
    return ev.ModeGrid(-r_max, r_max, n, list(modes), P, 0.1 * 2 * r_max)


def gaussian_state(P, a0=0.5):
    disc = ev.build_discretization(P, fine_flat_grid(P))
    u0 = free_gaussian(disc.r, 0.0, a0)[None, :].astype(complex)
    return ev.WaveState(u0, disc)


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------


def test_grid_contracts(flat):
    with pytest.raises(ContractViolation):
        ev.ModeGrid(-1, 1, 100, [0], flat, 0.5)
    with pytest.raises(ContractViolation):
        ev.ModeGrid(-12, 12, 400, [0], flat, 1.0)
    with pytest.raises(ContractViolation):
        ev.ModeGrid(-12, 12, 400, [0], flat, 12.5)


def test_resolution_error(flat):
    grid = ev.ModeGrid(-12, 12, 300, [40], flat, 2.4)
    with pytest.raises(ResolutionError):
        ev.build_discretization(flat, grid)


def test_flat_eigenvalues(flat):
    grid = ev.ModeGrid(-5.0, 5.0, 1001, [0, 3], flat, 1.0)
    disc = ev.build_discretization(flat, grid)
    n, dr = grid.n_r, grid.dr
    box = (n + 1) * dr
    j = np.arange(1, 6)
    for i, m in enumerate(grid.modes):
        mu = eigh_tridiagonal(disc.diag[i], disc.off[i], eigvals_only=True)[:5]
        exact_discrete = 4 / dr ** 2 * np.sin(j * np.pi / (2 * (n + 1))) ** 2 + m ** 2
        assert np.allclose(mu, exact_discrete, rtol=1e-10)
        assert np.allclose(mu, (j * np.pi / box) ** 2 + m ** 2, rtol=1e-4)


def test_weighted_self_adjoint():
    P = dyn.build_profile("cosh_glue_euclidean")
    grid = ev.ModeGrid(-6.0, 6.0, 300, [0, 2, -5], P, 1.2)
    disc = ev.build_discretization(P, grid)
    for i in range(3):
        FA = disc.f[:, None] * disc.weighted_matrix(i)
        assert np.max(np.abs(FA - FA.T)) <= 1e-12 * np.max(np.abs(FA))


def _lowest_m0(P, r_max, n):
    grid = ev.ModeGrid(-r_max, r_max, n, [0], P, 0.2 * r_max)
    disc = ev.build_discretization(P, grid)
    return eigh_tridiagonal(disc.diag[0], disc.off[0], select="i", select_range=(0, 4))[0]


def test_pure_cosh_low_spectrum_refinement(cosh):
    dr, r_max = 0.025, 8.0
    coarse = _lowest_m0(cosh, r_max, int(round(2 * r_max / dr)) + 1)
    # keep the Dirichlet nodes at the same place on the refined grid
    dr4 = dr / 4
    r4 = r_max + dr - dr4
    fine = _lowest_m0(cosh, r4, int(round(2 * r4 / dr4)) + 1)
    assert np.max(np.abs(coarse - fine)) < 1e-4
    # everything sits above the bottom of the continuous spectrum
    assert np.all(fine > 0.25)


# ---------------------------------------------------------------------------
# spectral filter
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def raw_state(cosh):
    h = 1 / 16
    grid = ev.make_grid(cosh, h, [15, 16, 17])
    disc = ev.build_discretization(cosh, grid)
    r = disc.r
    g = np.exp(-((r - 0.3) ** 2) / (2 * h)) * np.exp(1j * r / (4 * h))
    return ev.WaveState(np.vstack([g, 0.5 * g, 0.25 * g]), disc, 0.0, h)


def test_plateau_filter_idempotent(raw_state):
    h = raw_state.h
    once = ev.spectral_filter(raw_state, h, plateau=True)
    twice = ev.spectral_filter(once, h, plateau=True)
    assert once.norm() > 0.1 * raw_state.norm()
    diff = ev.WaveState(twice.coefficients - once.coefficients, once.disc).norm()
    assert diff < 1e-10 * once.norm()


def test_filter_contour_matches_eigen(raw_state):
    h = raw_state.h
    a = ev.spectral_filter(raw_state, h, method="contour")
    b = ev.spectral_filter(raw_state, h, method="eigen")
    diff = ev.WaveState(a.coefficients - b.coefficients, a.disc).norm()
    assert diff < 1e-9 * a.norm()


def test_evolution_commutes_with_filter(raw_state):
    h = raw_state.h
    dt = ev.default_time_step(h)
    proj = ev.spectral_filter(raw_state, h, plateau=True)
    moved = ev.evolve(proj, dt, 40, stride=40, absorber=False).states[-1]
    again = ev.spectral_filter(moved, h, plateau=True)
    diff = ev.WaveState(again.coefficients - moved.coefficients, moved.disc).norm()
    assert diff < 1e-8 * moved.norm()
    # with the smooth bump: filter then evolve equals evolve then filter
    a = ev.spectral_filter(ev.evolve(raw_state, dt, 40, stride=40, absorber=False).states[-1], h)
    b = ev.evolve(ev.spectral_filter(raw_state, h), dt, 40, stride=40, absorber=False).states[-1]
    assert ev.WaveState(a.coefficients - b.coefficients, a.disc).norm() < 1e-8 * a.norm()


@pytest.mark.parametrize("window", [(0.5, 2.0), (0.8, 1.2)])
def test_filtered_energy_in_window(raw_state, window):
    h = raw_state.h
    u = ev.spectral_filter(raw_state, h, window)
    q = u.rayleigh_quotient()
    assert window[0] / h ** 2 <= q <= window[1] / h ** 2


@pytest.mark.parametrize("method", ["contour", "eigen"])
def test_empty_window_warns(raw_state, method):
    with pytest.warns(RuntimeWarning):
        u = ev.spectral_filter(raw_state, raw_state.h, (1e-9, 2e-9), method=method)
    assert not np.any(u.coefficients)


def test_filter_bad_window(raw_state):
    with pytest.raises(ContractViolation):
        ev.spectral_filter(raw_state, raw_state.h, (2.0, 1.0))


# ---------------------------------------------------------------------------
# coherent states
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("placement,kw", [("on_waist", {}), ("transverse", {}), ("off_center", {"r0": 1.5}),
                                          ("on_waist", {"theta_beta": 9.0}), ("transverse", {"theta_beta": 9.0})])
def test_coherent_unit_norm(cosh, placement, kw):
    u = ev.coherent_state(cosh, 1 / 16, placement, **kw)
    assert u.norm() == pytest.approx(1.0, abs=1e-10)
    assert u.h == 1 / 16


def test_coherent_state_contracts(cosh):
    with pytest.raises(ContractViolation):
        ev.coherent_state(cosh, 0.2)
    with pytest.raises(ContractViolation):
        ev.coherent_state(cosh, 1 / 16, "sideways")
    with pytest.raises(DomainError):
        ev.coherent_state(cosh, 1 / 16, "off_center", r0=11.5)


def test_on_waist_spread_rate(cosh):
    # linearized oracle: r-variance (h/2) cosh(4 lambda tau) with tau = t/h the flow time
    h = 1 / 128
    u = ev.coherent_state(cosh, h, "on_waist")
    r, f = u.disc.r, u.disc.f

    def var(t, c):
        w = np.sum(np.abs(c) ** 2, axis=0) * f
        return float(np.sum(w * r * r) / np.sum(w))

    dt = ev.default_time_step(h)
    n = int(round(0.45 * h / dt))
    traj = ev.evolve(u, dt, n, absorber=False, store=False, observers={"v": var})
    v = np.array(traj.observations["v"])
    assert v[0] == pytest.approx(h / 2, rel=0.05)
    doubling = np.interp(2 * v[0], v, traj.times / h)
    assert doubling == pytest.approx(math.acosh(2) / 4, rel=0.05)


def test_transverse_group_velocity(flat):
    h = 1 / 32
    u = ev.coherent_state(flat, h, "transverse", grid_opts={"dr_fac": 0.125})
    r, f = u.disc.r, u.disc.f

    def mean(t, c):
        w = np.sum(np.abs(c) ** 2, axis=0) * f
        return float(np.sum(w * r) / np.sum(w))

    # a small step keeps the Crank-Nicolson dispersion error out of the group velocity
    dt = ev.default_time_step(h, 0.05)
    traj = ev.evolve(u, dt, int(round(2.5 * h / dt)), stride=10, absorber=False, store=False,
                     check_step=False, observers={"m": mean})
    slope = np.polyfit(traj.times, traj.observations["m"], 1)[0]
    assert slope == pytest.approx(2 / h, rel=0.02)


# ---------------------------------------------------------------------------
# evolution
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def waist_packet(cosh):
    return ev.coherent_state(cosh, 1 / 16, "on_waist", theta_beta=9.0)


def test_norm_conservation(waist_packet):
    h = waist_packet.h
    dt = ev.default_time_step(h)
    n = int(round(1.0 / dt))
    traj = ev.evolve(waist_packet, dt, n, stride=n // 50, absorber=False, store=False,
                     observers={"n": lambda t, c: ev.WaveState(c, waist_packet.disc).norm()})
    drift = np.max(np.abs(np.array(traj.observations["n"]) - 1.0)) / traj.times[-1]
    assert drift < 1e-9


def test_time_reversibility(waist_packet):
    dt = ev.default_time_step(waist_packet.h)
    fwd = ev.evolve(waist_packet, dt, 200, stride=200, absorber=False).states[-1]
    back = ev.evolve(fwd, -dt, 200, stride=200, absorber=False).states[-1]
    diff = ev.WaveState(back.coefficients - waist_packet.coefficients, waist_packet.disc).norm()
    assert diff < 1e-10


def test_evolve_contract(waist_packet):
    with pytest.raises(ContractViolation):
        ev.evolve(waist_packet, 1e-2, 10)
    with pytest.raises(ContractViolation):
        ev.evolve(waist_packet, 1e-4, 0)


def test_flat_gaussian_oracle(flat):
    u = gaussian_state(flat)
    dt = math.pi / 4 / u.disc.max_eigenvalue()
    n = int(math.ceil(1.0 / dt))
    end = ev.evolve(u, 1.0 / n, n, stride=n, absorber=False).states[-1]
    exact = free_gaussian(u.disc.r, 1.0, 0.5)
    err = ev.WaveState(end.coefficients - exact[None, :], u.disc).norm() / u.norm()
    assert err < 1e-4


def test_absorber_spurious_mass(flat):
    # unit-energy Gaussian sent into the absorber, compared with a run on a larger domain
    for h in (1 / 8, 1 / 16):
        small = ev.build_discretization(flat, ev.make_grid(flat, h, [0]))
        big = ev.build_discretization(flat, ev.make_grid(flat, h, [0], r_max=40.0))
        j0 = int(round((small.r[0] - big.r[0]) / big.dr))
        rb = big.r
        g = np.exp(-(rb ** 2) / 2) * np.exp(1j * rb / h)
        g /= math.sqrt(np.sum(np.abs(g) ** 2) * big.dr)
        ub = ev.WaveState(g[None, :].copy(), big, 0.0, h)
        us = ev.WaveState(g[None, j0:j0 + small.r.size].copy(), small, 0.0, h)
        dt = ev.default_time_step(h)
        n = int(round(1.0 / dt))
        a = ev.evolve(us, dt, n, stride=16, stop_mass=0.0)
        b = ev.evolve(ub, dt, n, stride=16, absorber=False)
        lo, hi = small.grid.interior
        inside = (small.r > lo) & (small.r < hi)
        spurious = max(
            float(np.sum(np.abs(x.coefficients[:, inside] - y.coefficients[:, j0:j0 + small.r.size][:, inside]) ** 2))
            * small.dr for x, y in zip(a.states, b.states))
        assert spurious < 1e-6
        assert a.absorbed[-1] > 0.99


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def test_l2l2_equals_data_norm(cosh):
    _, traj = ev.run_packet(cosh, 1 / 8, "on_waist", absorber=False,
                            observers={"l2": lambda d: ev.SpatialNorm(d, 2, None)})
    row = ev.mixed_norm(traj, 2, 2, None, (0.0, 1.0), key="l2")
    assert row.value == pytest.approx(1.0, abs=1e-6)


def test_linf_single_mode(waist_packet):
    disc = waist_packet.disc
    i = int(np.argmax(waist_packet.mode_norms()))
    coef = np.zeros_like(waist_packet.coefficients)
    coef[i] = waist_packet.coefficients[i]
    sup = ev.SpatialNorm(disc, math.inf)(0.0, coef)
    assert sup == pytest.approx(np.max(np.abs(coef[i])) / math.sqrt(2 * math.pi), rel=1e-12)


def test_gaussian_l4l4_closed_form(flat):
    sigma = 1.0
    u = gaussian_state(flat, sigma ** 2 / 2)
    dt = math.pi / 4 / u.disc.max_eigenvalue()
    n = int(math.ceil(1.0 / dt))
    traj = ev.evolve(u, 1.0 / n, n, stride=n // 64, absorber=False, store=False,
                     observers={"l4": ev.SpatialNorm(u.disc, 4)})
    got = ev.mixed_norm(traj, 4, 4, None, (0.0, 1.0), key="l4").value
    exact = (sigma ** 3 * math.sqrt(math.pi / 2) * 0.5 * math.asinh(2 / sigma ** 2) / (2 * math.pi)) ** 0.25
    assert got == pytest.approx(exact, rel=1e-3)


def test_mixed_norm_needs_snapshots(waist_packet):
    traj = ev.evolve(waist_packet, ev.default_time_step(waist_packet.h), 20, absorber=False)
    with pytest.raises(DataInsufficiencyError):
        ev.mixed_norm(traj, 4, 4, 1.0, (0.0, 1.0))


def test_parseval(waist_packet):
    u = waist_packet
    total = u.norm() ** 2
    assert total == pytest.approx(np.sum(u.mode_norms() ** 2), rel=1e-12)
    n_theta = 2 * ev._theta_count(u.disc.modes)
    U = u.sample(n_theta)
    direct = float(np.sum(np.abs(U) ** 2 * u.disc.f[None, :])) * u.disc.dr * 2 * math.pi / n_theta
    assert direct == pytest.approx(total, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(1.0, 3.0))
def test_chi_mask_windows(a, width):
    r = np.linspace(-6, 6, 241)
    m = ev.chi_mask(r, (a, a + width))
    assert np.all((m == 1) == ((np.abs(r) >= a) & (np.abs(r) <= a + width)))
    assert np.all(ev.chi_mask(r, a + width) >= m)


def test_zero_state_smoothing(waist_packet):
    zero = ev.WaveState(np.zeros_like(waist_packet.coefficients), waist_packet.disc, 0.0, waist_packet.h)
    traj = ev.evolve(zero, ev.default_time_step(zero.h), 64, absorber=False)
    row = ev.smoothing_norm(traj, 1.0, zero.h, (0.0, traj.times[-1]))
    assert row.value == 0.0


def test_smoothing_norm_unit_data(cosh):
    # at frequency 1/h the weight (1 + h^2 mu)^(1/2) lies between 1.5^(1/2) and 3^(1/2)
    h = 1 / 8
    _, traj = ev.run_packet(cosh, h, "on_waist", absorber=False,
                            observers={"s": lambda d: ev.SobolevObserver(d, None, h)})
    row = ev.smoothing_norm(traj, None, h, (0.0, 1.0), key="s")
    assert math.sqrt(1.5) ** 0.5 * 0.95 < row.value < math.sqrt(3.0) ** 0.5 * 1.05


# ---------------------------------------------------------------------------
# semiclassical dispersive check
# ---------------------------------------------------------------------------


def _dispersive_profile(P, h):
    M = int(math.ceil(1.5 / h))
    modes = np.arange(-M, M + 1)
    disc = ev.build_discretization(P, ev.make_grid(P, h, modes, r_max=4.0, absorb_width=0.8))
    L = P.theta_length
    # mode coefficients of exp(-(r^2 + theta^2)/(2 h^2)) divided by its L^1 norm 2 pi h^2
    w = np.exp(-0.5 * (h * modes) ** 2) * h * math.sqrt(2 * math.pi / L)
    raw = w[:, None] * np.exp(-(disc.r ** 2) / (2 * h * h))[None, :] / (2 * math.pi * h * h)
    u = ev.spectral_filter(ev.WaveState(raw.astype(complex), disc, 0.0, h), h)
    T = h * abs(math.log(h))
    n = int(math.ceil(T / ev.default_time_step(h)))
    traj = ev.evolve(u, T / n, n, stride=max(1, n // 40), store=False,
                     observers={"sup": ev.SpatialNorm(disc, math.inf, 1.0)})
    sel = traj.times >= h - 1e-12
    return traj.times[sel], np.array(traj.observations["sup"])[sel]


@pytest.mark.slow
def test_semiclassical_dispersive_proxy(cosh):
    worst, half = [], []
    for h in (2.0 ** -5, 2.0 ** -6, 2.0 ** -7):
        t, sup = _dispersive_profile(cosh, h)
        worst.append(float(np.max(t * sup)))
        half.append(float(np.max(np.sqrt(t) * sup)))
    # the decay on the surface is t^-1, so t^(1/2) sup is not uniform in h
    assert half[0] < half[1] < half[2]
    # Euclidean value 1/(4 pi) up to the frequency cutoff
    assert max(worst) < 1.25 / (4 * math.pi)
    assert worst[-1] <= worst[0]
