"""Geodesic dynamics on surfaces of revolution ``dr^2 + f(r)^2 dtheta^2``.

Flow time follows the Hamiltonian ``H = rho^2 + omega^2 / f^2`` so the
speed is ``2 sqrt(H)``.  Lyapunov rates, Jacobians and pressures are
reported per unit arc length unless a docstring says otherwise.  The
Jacobi matrix acts on ``(J, dJ/ds)`` with ``s`` the arc length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BPoly
from scipy.optimize import minimize_scalar

from .errors import (
    ContractViolation,
    DegenerateStateError,
    HyperbolicityDomainError,
    ProfileConstructionError,
    StiffnessError,
    UnsupportedRegimeError,
)
from .hyperbolic import GroupSpec, estimate_delta

PROFILE_KINDS = ("cosh_glue_euclidean", "exp_glue_conic", "pure_cosh", "custom")

_RTOL = 1e-12
_ATOL = 1e-12
_MIN_STEP = 1e-7


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------


@dataclass
class WarpProfile:
    """Warping function ``f`` with its first two derivatives.

    ``evaluator(r)`` returns the arrays ``(f, f', f'')``.  Build instances
    through :func:`build_profile` so the kind invariants are checked.
    """

    kind: str
    params: dict
    evaluator: object = field(repr=False)
    theta_length: float = 2.0 * math.pi
    label: str = ""

    def evaluate(self, r):
        r = np.asarray(r, dtype=float)
        f, f1, f2 = self.evaluator(r)
        return np.asarray(f, float), np.asarray(f1, float), np.asarray(f2, float)

    def f(self, r):
        return self.evaluate(r)[0]

    def df(self, r):
        return self.evaluate(r)[1]

    def d2f(self, r):
        return self.evaluate(r)[2]

    def curvature(self, r):
        """Gauss curvature ``-f''/f``."""
        f, _, f2 = self.evaluate(r)
        return -f2 / f

    def to_json(self):
        params = {k: v for k, v in self.params.items() if isinstance(v, (int, float, str))}
        return {"kind": self.kind, "params": params}


def _quintic_blend(r0, r1, left, right):
    """Quintic Hermite piece on ``[r0, r1]`` matching value, f' and f'' at both ends."""
    return BPoly.from_derivatives([r0, r1], [list(left), list(right)])


def _bump(r, r0, r1):
    """``(r - r0)^3 (r1 - r)^3`` and its first two derivatives."""
    a = r - r0
    b = r1 - r
    g = a ** 3 * b ** 3
    g1 = 3 * a * a * b ** 3 - 3 * a ** 3 * b * b
    g2 = 6 * a * b ** 3 - 18 * a * a * b * b + 6 * a ** 3 * b
    return g, g1, g2


def _glued(r, r0, r1, inner, outer, blend, corr):
    """Evaluate a piecewise profile ``inner | blend + corr*bump | outer`` on ``r >= 0``-type input."""
    f = np.empty_like(r)
    f1 = np.empty_like(r)
    f2 = np.empty_like(r)
    lo = r <= r0
    hi = r >= r1
    mid = ~(lo | hi)
    if lo.any():
        f[lo], f1[lo], f2[lo] = inner(r[lo])
    if hi.any():
        f[hi], f1[hi], f2[hi] = outer(r[hi])
    if mid.any():
        x = r[mid]
        g, g1, g2 = _bump(x, r0, r1)
        f[mid] = blend(x) + corr * g
        f1[mid] = blend(x, 1) + corr * g1
        f2[mid] = blend(x, 2) + corr * g2
    return f, f1, f2


def _cosh_glue(eta, R, a, corr):
    r0, r1 = 3.0 * eta, R
    left = (math.cosh(r0), math.sinh(r0), math.cosh(r0))
    right = (R + a, 1.0, 0.0)
    blend = _quintic_blend(r0, r1, left, right)

    def inner(x):
        return np.cosh(x), np.sinh(x), np.cosh(x)

    def outer(x):
        return x + a, np.ones_like(x), np.zeros_like(x)

    def ev(r):
        r = np.asarray(r, dtype=float)
        s = np.where(r < 0, -1.0, 1.0)
        f, f1, f2 = _glued(np.abs(r), r0, r1, inner, outer, blend, corr)
        return f, s * f1, f2

    return ev


def _exp_glue(Rp, c, corr):
    r0, r1 = 2.0 * Rp, 4.0 * Rp
    e0 = math.exp(r0)
    blend = _quintic_blend(r0, r1, (e0, e0, e0), (c * r1, c, 0.0))

    def inner(x):
        e = np.exp(x)
        return e, e, e

    def outer(x):
        return c * x, np.full_like(x, c), np.zeros_like(x)

    def ev(r):
        return _glued(np.asarray(r, dtype=float), r0, r1, inner, outer, blend, corr)

    return ev


def _pure_cosh(kappa):
    def ev(r):
        r = np.asarray(r, dtype=float)
        return np.cosh(kappa * r) / kappa, np.sinh(kappa * r), kappa * np.cosh(kappa * r)

    return ev


def _named_custom(name):
    if name == "flat":
        def ev(r):
            r = np.asarray(r, dtype=float)
            return np.ones_like(r), np.zeros_like(r), np.zeros_like(r)
        return ev
    if name == "elliptic":
        # positive curvature at r = 0: a stable closed geodesic
        def ev(r):
            r = np.asarray(r, dtype=float)
            q = 1.0 + 0.5 * r * r
            return 1.0 / q, -r / q ** 2, (1.5 * r * r - 1.0) / q ** 3
        return ev
    raise ContractViolation(f"unknown named custom profile {name!r}")


def _consistency_failures(P, grid, step=1e-4):
    f, f1, f2 = P.evaluate(grid)
    fp, f1p, _ = P.evaluate(grid + step)
    fm, f1m, _ = P.evaluate(grid - step)
    d1 = (fp - fm) / (2 * step)
    d2 = (f1p - f1m) / (2 * step)
    e1 = np.abs(d1 - f1) / np.maximum(1.0, np.abs(f))
    e2 = np.abs(d2 - f2) / np.maximum(1.0, np.abs(f))
    out = []
    if e1.max() > 1e-6:
        out.append(("f' consistent with f", float(grid[np.argmax(e1)])))
    # the third derivative jumps at C^2 junctions; this catches gross mismatches only
    if e2.max() > 1e-3:
        out.append(("f'' consistent with f'", float(grid[np.argmax(e2)])))
    return out


def _kind_margin(P, kind, params):
    """Grid and margin of the kind's sign condition (must stay >= 0 / > 0)."""
    if kind == "cosh_glue_euclidean":
        R = params["R"]
        r = np.linspace(-(R + 2.0), R + 2.0, 10_000)
        return r, P.df(r) * np.sign(r) + 1e-12, "f'(r) sign(r) >= 0"
    if kind == "exp_glue_conic":
        Rp = params["Rp"]
        r = np.linspace(0.5, 8.0 * Rp, 10_001)[1:]
        f, f1, _ = P.evaluate(r)
        # strict inequality, scale-free
        return r, (f1 - f / (2.0 * r)) / f, "f'(r) > f(r)/(2r)"
    return None, None, None


def validate_profile(P: WarpProfile):
    """Check the invariants of ``P``; returns a list of ``(condition, r)`` failures."""
    params = P.params
    span = 8.0
    if P.kind == "cosh_glue_euclidean":
        span = params["R"] + 2.0
    elif P.kind == "exp_glue_conic":
        span = 8.0 * params["Rp"]
    grid = np.linspace(-span, span, 2001)
    failures = []
    f = P.f(grid)
    if np.any(~np.isfinite(f)) or np.any(f <= 0):
        failures.append(("f > 0", float(grid[np.argmin(np.where(np.isfinite(f), f, -np.inf))])))
    failures += _consistency_failures(P, grid)
    r, margin, cond = _kind_margin(P, P.kind, params)
    if margin is not None:
        bad = margin <= 0 if P.kind == "exp_glue_conic" else margin < 0
        if bad.any():
            failures.append((cond, float(r[np.argmax(bad)])))
    return failures


def _default_cosh_a(eta, R):
    # linear end chosen so the average blend slope is the mean of the end slopes
    r0 = 3.0 * eta
    return math.cosh(r0) + (R - r0) * (math.sinh(r0) + 1.0) / 2.0 - R


def build_profile(kind, params=None, theta_length=2.0 * math.pi) -> WarpProfile:
    """Construct and validate a warping profile.

    Parameters
    ----------
    kind : {"cosh_glue_euclidean", "exp_glue_conic", "pure_cosh", "custom"}
    params : dict
        ``cosh_glue_euclidean``: ``eta``, ``R`` and optionally ``a``.
        ``exp_glue_conic``: ``Rp`` and optionally ``c`` and ``R`` (``Rp >= R``).
        ``pure_cosh``: optional ``kappa`` giving ``f = cosh(kappa r)/kappa``.
        ``custom``: ``name`` in {"flat", "elliptic"} or callables
        ``f``, ``df``, ``d2f``.

    Raises
    ------
    ProfileConstructionError
        If the blend violates an invariant after three corrections.
    """
    params = dict(params or {})
    if kind not in PROFILE_KINDS:
        raise ContractViolation(f"unknown profile kind {kind!r}")
    if theta_length <= 0:
        raise ContractViolation("theta_length must be positive")
    for k, v in params.items():
        if isinstance(v, (int, float)) and not isinstance(v, bool) and v <= 0 and k != "a":
            raise ContractViolation(f"profile parameter {k} must be positive")

    if kind == "pure_cosh":
        kappa = float(params.setdefault("kappa", 1.0))
        P = WarpProfile(kind, params, _pure_cosh(kappa), theta_length, f"cosh({kappa:g} r)/{kappa:g}")
        fails = validate_profile(P)
        if fails:
            raise ProfileConstructionError(*fails[0])
        return P
    if kind == "custom":
        if "name" in params:
            ev = _named_custom(params["name"])
            label = params["name"]
        else:
            try:
                fa, fb, fc = params["f"], params["df"], params["d2f"]
            except KeyError as exc:
                raise ContractViolation("custom profile needs 'name' or callables f, df, d2f") from exc

            def ev(r, fa=fa, fb=fb, fc=fc):
                r = np.asarray(r, dtype=float)
                return fa(r), fb(r), fc(r)

            label = "custom"
        P = WarpProfile(kind, params, ev, theta_length, label)
        fails = validate_profile(P)
        if fails:
            raise ProfileConstructionError(*fails[0])
        return P

    if kind == "cosh_glue_euclidean":
        eta = float(params.setdefault("eta", 0.2))
        R = float(params.setdefault("R", 3.0))
        if R <= 3.0 * eta:
            raise ContractViolation("cosh_glue_euclidean needs R > 3 eta")
        a = float(params.setdefault("a", _default_cosh_a(eta, R)))
        if R + a <= 0:
            raise ContractViolation("cosh_glue_euclidean needs R + a > 0")
        make = lambda corr: _cosh_glue(eta, R, a, corr)  # noqa: E731
        r0, r1 = 3.0 * eta, R
        scale = max(math.cosh(r0), R + a)
    else:
        Rp = float(params.setdefault("Rp", 2.0))
        if "R" in params and Rp < params["R"]:
            raise ContractViolation("exp_glue_conic needs Rp >= R")
        c = float(params.setdefault("c", math.exp(2.0 * Rp)))
        make = lambda corr: _exp_glue(Rp, c, corr)  # noqa: E731
        r0, r1 = 2.0 * Rp, 4.0 * Rp
        scale = max(math.exp(r0), c * r1)

    unit = scale / (0.5 * (r1 - r0)) ** 6
    corr = 0.0
    last = None
    for attempt in range(4):
        P = WarpProfile(kind, dict(params, correction=corr), make(corr), theta_length, kind)
        fails = validate_profile(P)
        if not fails:
            return P
        last = fails[0]
        if attempt == 3:
            break
        # one-parameter convexity correction: maximize the worst margin
        bound = 10.0 ** attempt * unit

        def worst(cc):
            Q = WarpProfile(kind, params, make(cc), theta_length)
            _, m, _ = _kind_margin(Q, kind, params)
            return -float(np.min(m)) if m is not None else 0.0

        corr = float(minimize_scalar(worst, bounds=(-bound, bound), method="bounded").x)
    raise ProfileConstructionError(*last)


def flat_profile(theta_length=2.0 * math.pi):
    return build_profile("custom", {"name": "flat"}, theta_length)


def elliptic_profile(theta_length=2.0 * math.pi):
    """``f = 1/(1 + r^2/2)``: positively curved near a stable closed geodesic at ``r = 0``."""
    return build_profile("custom", {"name": "elliptic"}, theta_length)


# ---------------------------------------------------------------------------
# geodesic flow
# ---------------------------------------------------------------------------


@dataclass
class GeodesicState:
    r: float
    theta: float
    rho: float
    omega: float
    jacobi: np.ndarray = field(default_factory=lambda: np.eye(2))
    time: float = 0.0

    def hamiltonian(self, P: WarpProfile) -> float:
        return float(self.rho ** 2 + self.omega ** 2 / P.f(self.r) ** 2)

    def with_jacobi(self, J=None):
        return GeodesicState(self.r, self.theta, self.rho, self.omega,
                             np.eye(2) if J is None else np.array(J, float), self.time)


def unit_state(P: WarpProfile, r, theta=0.0, direction=0.0):
    """Unit-energy state at ``r`` whose velocity makes angle ``direction`` with ``d/dr``."""
    f = float(P.f(r))
    return GeodesicState(float(r), float(theta), math.cos(direction), f * math.sin(direction))


def waist_state(P: WarpProfile, theta=0.0, sign=1):
    """Unit-energy state moving along the closed geodesic ``r = 0``."""
    return GeodesicState(0.0, float(theta), 0.0, sign * float(P.f(0.0)))


def _flow_rhs(P, omega, speed):
    """Flow plus the Jacobi matrix in Iwasawa form ``Rot(phi) [[a, a beta], [0, 1/a]]``.

    With ``A = [[0, v], [-K v, 0]]`` and ``B = Rot(-phi) A Rot(phi)``:
    ``phi' = B21``, ``(log a)' = B11``, ``beta' = (B12 + B21) / a^2``.
    The determinant is 1 by construction.
    """
    w2 = omega * omega

    def rhs(t, y):
        r, _, rho, phi, loga, _ = y
        f, f1, f2 = P.evaluate(r)
        f = float(f)
        K = -float(f2) / f
        c, s = math.cos(phi), math.sin(phi)
        return [
            2.0 * rho,
            2.0 * omega / (f * f),
            2.0 * float(f1) * w2 / f ** 3,
            -speed * (s * s + K * c * c),
            speed * c * s * (1.0 - K),
            speed * (1.0 - K) * (c * c - s * s) * math.exp(-2.0 * loga),
        ]

    return rhs


def _iwasawa_matrix(phi, loga, beta):
    c, s = np.cos(phi), np.sin(phi)
    a = np.exp(loga)
    U = np.zeros(phi.shape + (2, 2))
    U[..., 0, 0] = a
    U[..., 0, 1] = a * beta
    U[..., 1, 1] = 1.0 / a
    Rm = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    return Rm @ U


def integrate_flow(P: WarpProfile, s0: GeodesicState, T, dt, max_step=None):
    """Arrays ``(t, r, theta, rho, omega, jacobi, H_drift)`` sampled every ``dt``.

    ``T`` may be negative (backward flow).  The step cap is halved until the
    relative energy drift stays below ``1e-8`` per unit time.
    """
    H0 = s0.hamiltonian(P)
    if not H0 > 0:
        raise DegenerateStateError("geodesic flow needs H > 0")
    n = int(round(abs(T) / dt))
    if n < 1:
        raise ContractViolation("T must contain at least one step")
    t_eval = np.linspace(0.0, math.copysign(n * dt, T), n + 1)
    speed = 2.0 * math.sqrt(H0)
    rhs = _flow_rhs(P, s0.omega, speed)
    y0 = [s0.r, s0.theta, s0.rho, 0.0, 0.0, 0.0]
    step = dt if max_step is None else max_step
    allowed = 1e-8 * max(1.0, abs(T))
    while True:
        sol = solve_ivp(rhs, (0.0, t_eval[-1]), y0, method="DOP853", t_eval=t_eval,
                        rtol=_RTOL, atol=_ATOL, max_step=step)
        if sol.status == 0:
            r, theta, rho = sol.y[0], sol.y[1], sol.y[2]
            H = rho ** 2 + s0.omega ** 2 / P.f(r) ** 2
            drift = np.abs(H - H0) / H0
            if drift.max() <= allowed:
                break
        step *= 0.5
        if step < _MIN_STEP:
            raise StiffnessError(f"step underflow below {_MIN_STEP} while integrating the geodesic flow")
    jac = _iwasawa_matrix(sol.y[3], sol.y[4], sol.y[5]) @ np.asarray(s0.jacobi, float)
    return s0.time + sol.t, r, theta, rho, np.full_like(r, s0.omega), jac, drift


def geodesic_flow(P: WarpProfile, s0: GeodesicState, T, dt=1e-2):
    """Trajectory of the geodesic flow as a list of :class:`GeodesicState`.

    Flow-time system: ``r' = 2 rho``, ``theta' = 2 omega/f^2``,
    ``rho' = 2 f' omega^2/f^3``, ``omega' = 0``; the Jacobi matrix solves
    ``J'' = -K J`` in arc length, ``K = -f''/f``.
    """
    if dt > 1e-2:
        raise ContractViolation("dt must be at most 1e-2")
    t, r, th, rho, om, jac, _ = integrate_flow(P, s0, T, dt)
    return [GeodesicState(float(r[k]), float(th[k]), float(rho[k]), s0.omega, jac[k], float(t[k]))
            for k in range(t.size)]


def trajectory_rows(P: WarpProfile, traj):
    """CSV rows ``time, r, theta, rho, omega, H_drift`` for a trajectory."""
    H0 = traj[0].hamiltonian(P)
    return [(s.time, s.r, s.theta, s.rho, s.omega, abs(s.hamiltonian(P) - H0) / H0) for s in traj]


# ---------------------------------------------------------------------------
# escape
# ---------------------------------------------------------------------------


@dataclass
class EscapeReport:
    escape_times: np.ndarray
    r0: np.ndarray
    rho0: np.ndarray
    R_escape: float
    T_max: float
    monotone_violations: int
    waist_included: bool = False

    @property
    def escaped(self) -> int:
        return int(np.isfinite(self.escape_times).sum())

    @property
    def trapped(self) -> int:
        return int((~np.isfinite(self.escape_times)).sum())

    @property
    def max_escape_time(self) -> float:
        fin = self.escape_times[np.isfinite(self.escape_times)]
        return float(fin.max()) if fin.size else 0.0

    def to_json(self):
        return {"escaped": self.escaped, "trapped": self.trapped, "max_escape_time": self.max_escape_time}


def _euclidean_radius(P: WarpProfile):
    """Radius beyond which ``P`` is exactly flat or conic, or ``None``."""
    if P.kind == "cosh_glue_euclidean":
        return float(P.params["R"])
    if P.kind == "exp_glue_conic":
        return 4.0 * float(P.params["Rp"])
    return None


def _sample_state(P, rng, R_escape, tube_eps):
    while True:
        r0 = rng.uniform(-0.5 * R_escape, 0.5 * R_escape)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        rho0 = math.cos(phi)
        if abs(r0) < tube_eps and abs(rho0) < tube_eps:
            continue
        return r0, rho0, float(P.f(r0)) * math.sin(phi)


def escape_probe(P: WarpProfile, ensemble_size=10_000, R_escape=None, T_max=500.0, seed=0,
                 tube_eps=1e-3, include_waist=False, sample_dt=0.01, chunk=5.0):
    """Classify unit-energy geodesics by their first exit time from ``|r| <= R_escape``.

    The ensemble is integrated as one stacked system in the reduced
    variables ``(r, rho)``; escaped members are retired after every chunk
    of flow time.  Sample ``k`` uses the generator seeded by ``(seed, k)``.
    """
    R_glue = _euclidean_radius(P)
    if R_escape is None:
        if R_glue is None:
            raise ContractViolation("R_escape is required for this profile kind")
        R_escape = 2.0 * R_glue
    if R_glue is not None and R_escape < R_glue:
        raise ContractViolation("R_escape must lie in the exactly flat or conic zone")
    states = [_sample_state(P, np.random.default_rng([seed, k]), R_escape, tube_eps)
              for k in range(ensemble_size)]
    if include_waist:
        states.append((0.0, 0.0, float(P.f(0.0))))
    st = np.array(states, dtype=float).reshape(-1, 3)
    r, rho, omega = st[:, 0].copy(), st[:, 1].copy(), st[:, 2]
    n = r.size
    esc = np.full(n, np.inf)
    alive = np.arange(n)
    violations = 0
    t0 = 0.0
    while alive.size and t0 < T_max:
        t1 = min(T_max, t0 + chunk)
        w2 = omega[alive] ** 2
        m = alive.size

        def rhs(t, y):
            f, f1, _ = P.evaluate(y[:m])
            return np.concatenate([2.0 * y[m:], 2.0 * f1 * w2 / f ** 3])

        k = max(2, int(round((t1 - t0) / sample_dt)) + 1)
        tt = np.linspace(t0, t1, k)
        sol = solve_ivp(rhs, (t0, t1), np.concatenate([r[alive], rho[alive]]), method="DOP853",
                        t_eval=tt, rtol=1e-10, atol=1e-12)
        if sol.status != 0:
            raise StiffnessError(f"escape integration failed: {sol.message}")
        rr, pp = sol.y[:m], sol.y[m:]
        out = np.abs(rr) > R_escape
        if R_glue is not None:
            far = np.abs(rr[:, :-1]) >= R_glue
            dec = np.diff(pp * np.sign(rr), axis=1) < -1e-9
            violations += int(np.any(far & dec, axis=1).sum())
        hit = out.any(axis=1)
        idx = np.argmax(out, axis=1)
        for j in np.nonzero(hit)[0]:
            i = idx[j]
            a, b = abs(rr[j, i - 1]), abs(rr[j, i])
            lam = (R_escape - a) / (b - a) if i > 0 and b != a else 0.0
            esc[alive[j]] = tt[i - 1] + lam * (tt[i] - tt[i - 1]) if i > 0 else tt[0]
        r[alive] = rr[:, -1]
        rho[alive] = pp[:, -1]
        alive = alive[~hit]
        t0 = t1
    return EscapeReport(esc, st[:, 0], st[:, 1], float(R_escape), float(T_max), violations, include_waist)


# ---------------------------------------------------------------------------
# Jacobians and pressure
# ---------------------------------------------------------------------------


def _check_negative_curvature(P, r):
    K = P.curvature(r)
    if np.any(K >= 0):
        bad = float(np.asarray(r)[np.argmax(K >= 0)])
        raise HyperbolicityDomainError(f"orbit enters the curvature >= 0 zone at r = {bad:.6g}")


def _unstable_direction(P, s0, warmup, dt):
    """Dominant direction of the Jacobi propagator from ``Phi^{-warmup}(s0)`` to ``s0``."""
    tb, rb, thb, rhob, _, _, _ = integrate_flow(P, s0.with_jacobi(), -warmup, dt)
    _check_negative_curvature(P, rb)
    back = GeodesicState(float(rb[-1]), float(thb[-1]), float(rhob[-1]), s0.omega)
    _, _, _, _, _, jac, _ = integrate_flow(P, back, warmup, dt)
    u, _, _ = np.linalg.svd(jac[-1])
    return u[:, 0]


def unstable_jacobian(P: WarpProfile, s0: GeodesicState, T, warmup=10.0, dt=1e-2):
    """Unstable and weak unstable Jacobians over flow time ``T``.

    ``J^u_T`` is the contraction factor of the backward differential along
    the unstable direction at ``Phi^T(s0)``.  The flow direction is neutral,
    so ``J^wu_T = J^u_T``.

    Returns
    -------
    J_u, J_wu : float
    """
    e_u = _unstable_direction(P, s0, warmup, dt)
    t, r, _, _, _, jac, _ = integrate_flow(P, s0.with_jacobi(), T, dt)
    _check_negative_curvature(P, r)
    J = 1.0 / float(np.linalg.norm(jac[-1] @ e_u))
    return J, J


def arc_length(P: WarpProfile, s0: GeodesicState, T):
    """Arc length covered in flow time ``T``."""
    return 2.0 * math.sqrt(s0.hamiltonian(P)) * abs(T)


def lyapunov_exponent(P: WarpProfile, s0: GeodesicState, T, **kw):
    """Unit-speed rate ``-log J^u_T / arc length``."""
    J, _ = unstable_jacobian(P, s0, T, **kw)
    return -math.log(J) / arc_length(P, s0, T)


@dataclass(frozen=True)
class PressureReport:
    s: float
    estimate: float
    epsilon: float
    T: float
    separated_count: int
    method: str
    convention: str = "unit-speed time"

    def to_json(self):
        return {"s": self.s, "estimate": self.estimate, "epsilon": self.epsilon, "T": self.T,
                "separated_count": self.separated_count, "method": self.method,
                "convention": self.convention}


def greedy_separated(length, epsilon, distance=None):
    """Greedy ``epsilon``-separated points on a circle of circumference ``length``.

    ``distance(a, b)`` is the separation of arc positions ``a`` and ``b``
    in the Bowen metric; on a closed orbit the flow moves points rigidly so
    it defaults to the circular distance.
    """
    if distance is None:
        def distance(a, b):
            d = abs(a - b) % length
            return min(d, length - d)
    pts = []
    # a fine sweep of candidate positions, accepted in order
    for x in np.arange(0.0, length, epsilon / 64.0):
        if all(distance(x, p) >= epsilon * (1.0 - 1e-9) for p in pts):
            pts.append(float(x))
    return pts


def _separated_pressure(P, s, epsilon, T, dt):
    if P.kind not in ("pure_cosh", "cosh_glue_euclidean"):
        raise UnsupportedRegimeError("separated-set pressure needs a single waist orbit as trapped set")
    if abs(float(P.df(0.0))) > 1e-12 or float(P.curvature(0.0)) >= 0:
        raise UnsupportedRegimeError("profile has no hyperbolic waist at r = 0")
    f0 = float(P.f(0.0))
    length = P.theta_length * f0
    # both orientations of the waist are trapped orbits
    placements = [(x, sgn) for sgn in (1, -1) for x in greedy_separated(length, epsilon)]
    cache = {}
    total = 0.0
    for x, sgn in placements:
        st = waist_state(P, theta=x / f0, sign=sgn)
        # rotations commute with the flow, so J depends only on the orientation
        if sgn not in cache:
            cache[sgn] = unstable_jacobian(P, st, 0.5 * T, dt=dt)[1]
        total += cache[sgn] ** s
    return math.log(total) / T, len(placements)


def pressure_estimate(source, s, epsilon=0.05, T=40.0, dt=1e-2, R_max=None) -> PressureReport:
    """Topological pressure at exponent ``s``.

    For a :class:`WarpProfile` the separated-set sum over the waist orbit
    is evaluated at horizons ``T`` and ``2T`` (unit-speed time) and
    Richardson-extrapolated to remove the ``log(count)/T`` transient.  For
    a :class:`GroupSpec` the constant-curvature value ``delta - n s`` is
    returned.
    """
    s = float(s)
    if isinstance(source, GroupSpec):
        if R_max is None:
            R_max = 30.0
        delta, _ = estimate_delta(source, R_max)
        n = source.dim - 1
        return PressureReport(s, float(delta - n * s), float(epsilon), float(T), 0,
                              "constant_curvature_formula")
    if not isinstance(source, WarpProfile):
        raise ContractViolation("source must be a WarpProfile or a GroupSpec")
    if epsilon <= 0 or T <= 0:
        raise ContractViolation("epsilon and T must be positive")
    p1, count = _separated_pressure(source, s, epsilon, T, dt)
    p2, _ = _separated_pressure(source, s, epsilon, 2.0 * T, dt)
    return PressureReport(s, float(2.0 * p2 - p1), float(epsilon), float(T), count, "separated_set")
