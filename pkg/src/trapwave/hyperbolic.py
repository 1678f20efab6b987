"""Hyperbolic geometry of H^2 and H^3 in the upper half-space model.

Points of H^2 are ``(x, y)`` and points of H^3 are ``(x1, x2, y)`` with
``y > 0``.  Isometries are unimodular 2x2 matrices acting by Moebius
transformations: real matrices on H^2 and complex matrices on H^3 (the
Poincare extension).  Discrete groups are generated by hyperbolic
elements; orbit enumeration runs over reduced words in the generators.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import (
    CapacityError,
    ContractViolation,
    DataInsufficiencyError,
    InvalidIsometryError,
    InvalidPointError,
)

DEFAULT_CAP = 1_000_000
# words generated per level before giving up; separate from the element cap
_LEVEL_CAP = 4_000_000


# ---------------------------------------------------------------------------
# points and isometries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HPoint:
    """Point of H^2 (``dim=2``) or H^3 (``dim=3``).

    The last coordinate is the height above the boundary.
    """

    dim: int
    coords: tuple

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ContractViolation(f"dim must be 2 or 3, got {self.dim}")
        c = tuple(float(v) for v in self.coords)
        if len(c) != self.dim:
            raise InvalidPointError(f"H^{self.dim} point needs {self.dim} coordinates, got {len(c)}")
        if not all(math.isfinite(v) for v in c):
            raise InvalidPointError("point coordinates must be finite")
        if c[-1] <= 0.0:
            raise InvalidPointError(f"height must be positive, got {c[-1]}")
        object.__setattr__(self, "coords", c)

    @classmethod
    def h2(cls, x, y):
        return cls(2, (x, y))

    @classmethod
    def h3(cls, x1, x2, y):
        return cls(3, (x1, x2, y))

    @classmethod
    def basepoint(cls, dim):
        """The default basepoint ``i`` resp. ``(0, 0, 1)``."""
        return cls(dim, (0.0,) * (dim - 1) + (1.0,))

    @property
    def height(self):
        return self.coords[-1]

    def _wt(self):
        # boundary coordinate as a complex number, plus height
        if self.dim == 2:
            return complex(self.coords[0], 0.0), self.coords[1]
        return complex(self.coords[0], self.coords[1]), self.coords[2]

    @classmethod
    def _from_wt(cls, dim, w, t):
        if dim == 2:
            return cls(2, (w.real, t))
        return cls(3, (w.real, w.imag, t))

    def to_list(self):
        return list(self.coords)


def _det(m):
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def _det_ok(m, tol=1e-12):
    # cancellation in ad - bc grows with |ad|; compare relative to that scale
    scale = max(1.0, abs(m[0, 0] * m[1, 1]) + abs(m[0, 1] * m[1, 0]))
    return abs(_det(m) - 1.0) <= tol * scale


def _normalize(m):
    d = _det(m)
    if d == 0 or not np.isfinite(d):
        raise InvalidIsometryError("matrix is singular")
    if np.iscomplexobj(m):
        return m / np.sqrt(complex(d))
    if d < 0:
        raise InvalidIsometryError("real matrix with negative determinant is orientation reversing")
    return m / math.sqrt(d)


@dataclass(frozen=True, eq=False)
class Isometry:
    """Orientation preserving isometry given by a unimodular 2x2 matrix.

    Parameters
    ----------
    dim : int
        2 for PSL(2,R) acting on H^2, 3 for PSL(2,C) acting on H^3.
    matrix : array_like
        The 2x2 matrix.  Real for ``dim=2``.
    """

    dim: int
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ContractViolation(f"dim must be 2 or 3, got {self.dim}")
        m = np.array(self.matrix, dtype=complex if self.dim == 3 else float)
        if m.shape != (2, 2):
            raise InvalidIsometryError(f"matrix must be 2x2, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidIsometryError("matrix entries must be finite")
        if self.dim == 2 and np.iscomplexobj(self.matrix) and np.any(np.imag(self.matrix) != 0):
            raise InvalidIsometryError("H^2 isometries need real entries")
        if _det(m) == 0:
            raise InvalidIsometryError("matrix is singular")
        if not _det_ok(m):
            raise InvalidIsometryError(f"determinant {_det(m)} differs from 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_matrix(cls, matrix, dim=None):
        """Build an isometry after rescaling the matrix to determinant one."""
        m = np.asarray(matrix)
        if dim is None:
            dim = 3 if np.iscomplexobj(m) and np.any(m.imag != 0) else 2
        m = np.array(m, dtype=complex if dim == 3 else float)
        return cls(dim, _normalize(m))

    @classmethod
    def identity(cls, dim):
        return cls(dim, np.eye(2))

    @classmethod
    def dilation(cls, ell, dim=2):
        """Hyperbolic element translating the vertical axis by ``ell``."""
        return cls(dim, np.diag([math.exp(ell / 2), math.exp(-ell / 2)]))

    @property
    def trace(self):
        return self.matrix[0, 0] + self.matrix[1, 1]

    def is_hyperbolic(self, tol=1e-12):
        tr = complex(self.trace)
        if self.dim == 2:
            return abs(tr.real) > 2.0 + tol
        # loxodromic unless the trace is real in [-2, 2]
        return not (abs(tr.imag) <= tol and abs(tr.real) <= 2.0 + tol)

    def translation_length(self):
        """Displacement along the axis, ``2 Re arccosh(tr/2)``."""
        tr = complex(self.trace)
        if self.dim == 2:
            return 2.0 * math.acosh(max(abs(tr.real) / 2.0, 1.0))
        return 2.0 * abs(np.arccosh(tr / 2.0).real)

    def __eq__(self, other):
        if not isinstance(other, Isometry) or other.dim != self.dim:
            return NotImplemented
        return bool(np.allclose(self.matrix, other.matrix, atol=1e-12, rtol=0)
                    or np.allclose(self.matrix, -other.matrix, atol=1e-12, rtol=0))

    __hash__ = None

    def to_list(self):
        """Row-major entries; complex entries become ``[re, im]`` pairs."""
        flat = self.matrix.ravel()
        if self.dim == 2:
            return [float(v) for v in flat]
        return [[float(v.real), float(v.imag)] for v in flat]


# ---------------------------------------------------------------------------
# vectorized kernels
# ---------------------------------------------------------------------------


def _apply_wt(mats, w, t):
    """Poincare extension of ``mats`` (..., 2, 2) applied to (w, t)."""
    a = mats[..., 0, 0]
    b = mats[..., 0, 1]
    c = mats[..., 1, 0]
    d = mats[..., 1, 1]
    cwd = c * w + d
    den = np.abs(cwd) ** 2 + np.abs(c) ** 2 * t * t
    num = (a * w + b) * np.conj(cwd) + a * np.conj(c) * t * t
    return num / den, t / den


def _dist_wt(w1, t1, w2, t2):
    gap = np.sqrt(np.abs(w1 - w2) ** 2 + (t1 - t2) ** 2)
    return 2.0 * np.arcsinh(gap / (2.0 * np.sqrt(t1 * t2)))


# ---------------------------------------------------------------------------
# basic operations
# ---------------------------------------------------------------------------


def hyp_distance(a: HPoint, b: HPoint) -> float:
    """Hyperbolic distance between two points of the same dimension.

    Uses ``rho = 2 asinh(|a - b| / (2 sqrt(y_a y_b)))``, which equals the
    usual ``cosh rho = 1 + |a-b|^2 / (2 y_a y_b)`` without cancellation
    at short range.
    """
    if a.dim != b.dim:
        raise ContractViolation(f"dimension mismatch: {a.dim} vs {b.dim}")
    wa, ta = a._wt()
    wb, tb = b._wt()
    return float(_dist_wt(wa, ta, wb, tb))


def apply_isometry(g: Isometry, p: HPoint) -> HPoint:
    if g.dim != p.dim:
        raise ContractViolation(f"dimension mismatch: isometry {g.dim}, point {p.dim}")
    w, t = p._wt()
    w2, t2 = _apply_wt(g.matrix, w, t)
    return HPoint._from_wt(p.dim, complex(w2), float(t2))


def group_op(g: Isometry, h: Isometry | None = None, mode: str = "compose") -> Isometry:
    """Compose ``g h`` or invert ``g``; the result is rescaled to det 1."""
    if mode == "invert":
        m = g.matrix
        inv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
        return Isometry(g.dim, _normalize(inv))
    if mode != "compose":
        raise ContractViolation(f"unknown mode {mode!r}")
    if h is None or h.dim != g.dim:
        raise ContractViolation("compose needs two isometries of the same dimension")
    return Isometry(g.dim, _normalize(g.matrix @ h.matrix))


# ---------------------------------------------------------------------------
# groups
# ---------------------------------------------------------------------------


def isometric_circle(m):
    """Center and radius of ``|cz + d| = 1`` for the matrix ``m``."""
    c = complex(m[1, 0])
    if abs(c) < 1e-14:
        return None
    return -complex(m[1, 1]) / c, 1.0 / abs(c)


@dataclass(frozen=True, eq=False)
class GroupSpec:
    """Discrete group given by hyperbolic generators and a basepoint.

    ``kind="cyclic"`` takes exactly one generator.  ``kind="schottky"``
    takes two or more, whose isometric circles (and those of their
    inverses) must be pairwise disjoint.
    """

    kind: str
    generators: tuple
    basepoint: HPoint | None = None

    def __post_init__(self):
        gens = tuple(self.generators)
        if self.kind not in ("cyclic", "schottky"):
            raise ContractViolation(f"kind must be 'cyclic' or 'schottky', got {self.kind!r}")
        if not gens:
            raise ContractViolation("at least one generator required")
        dims = {g.dim for g in gens}
        if len(dims) != 1:
            raise ContractViolation("generators of mixed dimension")
        dim = dims.pop()
        if self.kind == "cyclic" and len(gens) != 1:
            raise ContractViolation("cyclic kind needs exactly one generator")
        if self.kind == "schottky" and len(gens) < 2:
            raise ContractViolation("schottky kind needs at least two generators")
        for k, g in enumerate(gens):
            if not g.is_hyperbolic():
                raise ContractViolation(f"generator {k} is not hyperbolic (trace {g.trace})")
        bp = self.basepoint if self.basepoint is not None else HPoint.basepoint(dim)
        if bp.dim != dim:
            raise ContractViolation("basepoint dimension differs from generators")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "basepoint", bp)
        if self.kind == "schottky":
            self._check_circles()

    def _check_circles(self):
        circles = []
        for k, g in enumerate(self.generators):
            for label, m in ((f"g{k}", g.matrix), (f"g{k}^-1", group_op(g, mode="invert").matrix)):
                c = isometric_circle(m)
                if c is None:
                    raise ContractViolation(f"{label} fixes infinity; isometric circle undefined")
                circles.append((label, c))
        for i in range(len(circles)):
            for j in range(i + 1, len(circles)):
                (li, (ci, ri)), (lj, (cj, rj)) = circles[i], circles[j]
                if abs(ci - cj) <= ri + rj:
                    raise ContractViolation(f"isometric circles of {li} and {lj} intersect")
        # orbit enumeration prunes by ping-pong, which needs the basepoint in the common exterior
        w, t = self.basepoint._wt()
        for label, (c, r) in circles:
            if abs(w - c) ** 2 + t * t <= r * r:
                raise ContractViolation(f"basepoint lies inside the isometric circle of {label}")

    @property
    def dim(self):
        return self.generators[0].dim

    @property
    def n(self):
        """Boundary dimension ``n`` with manifold dimension ``d = n + 1``."""
        return self.dim - 1

    def letters(self):
        """Matrices of the alphabet: generator ``k`` is letter ``2k``, its inverse ``2k+1``."""
        out = []
        for g in self.generators:
            out.append(g.matrix)
            out.append(group_op(g, mode="invert").matrix)
        return np.array(out, dtype=complex)

    def min_displacement(self):
        bp = self.basepoint
        w, t = bp._wt()
        mats = self.letters()
        w2, t2 = _apply_wt(mats, w, t)
        return float(np.min(_dist_wt(w, t, w2, t2)))

    def key(self):
        gens = tuple(tuple(np.asarray(g.matrix, dtype=complex).ravel().tolist()) for g in self.generators)
        return (self.kind, self.dim, gens, self.basepoint.coords)

    def to_json(self):
        return {"kind": self.kind, "dim": self.dim,
                "generators": [g.to_list() for g in self.generators],
                "basepoint": self.basepoint.to_list()}

    @classmethod
    def from_json(cls, obj):
        try:
            kind = obj["kind"]
            dim = int(obj["dim"])
            raw = obj["generators"]
        except (KeyError, TypeError) as exc:
            raise ContractViolation(f"malformed GroupSpec: {exc}") from exc
        gens = []
        for entries in raw:
            if len(entries) != 4:
                raise ContractViolation("each generator needs 4 row-major entries")
            vals = [complex(e[0], e[1]) if isinstance(e, (list, tuple)) else complex(e) for e in entries]
            m = np.array(vals).reshape(2, 2)
            if dim == 2:
                if np.any(m.imag != 0):
                    raise ContractViolation("H^2 generators need real entries")
                m = m.real
            gens.append(Isometry.from_matrix(m, dim))
        bp = obj.get("basepoint")
        bp = HPoint(dim, tuple(bp)) if bp is not None else None
        return cls(kind, tuple(gens), bp)


def cyclic_group(ell, dim=2):
    """Cyclic group generated by the dilation of translation length ``ell``."""
    return GroupSpec("cyclic", (Isometry.dilation(ell, dim),))


def _axis_translation(ell):
    ch, sh = math.cosh(ell / 2), math.sinh(ell / 2)
    return np.array([[ch, sh], [sh, ch]])


def schottky_pair(ell1=2.2, ell2=3.1, sep=3.5, dim=2):
    """Two-generator Schottky group with disjoint axes (the reference example).

    The first generator translates by ``ell1`` along the unit semicircle;
    the second translates by ``ell2`` along the semicircle of radius
    ``e^sep`` (conjugation by ``z -> e^sep z``).  The basepoint is
    ``i e^(sep/2)``, halfway between the two axes.  Incommensurate
    translation lengths keep the orbit-counting function free of a
    dominant period.  With the defaults the isometric circles are
    disjoint and the critical exponent is about 0.29.
    """
    a = np.diag([math.exp(sep / 2), math.exp(-sep / 2)])
    ainv = np.diag([math.exp(-sep / 2), math.exp(sep / 2)])
    g1 = _axis_translation(ell1)
    g2 = a @ _axis_translation(ell2) @ ainv
    bp = HPoint(dim, (0.0,) * (dim - 1) + (math.exp(sep / 2),))
    return GroupSpec("schottky", (Isometry.from_matrix(g1, dim), Isometry.from_matrix(g2, dim)), bp)


# ---------------------------------------------------------------------------
# orbit enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrbitElement:
    word: tuple
    element: Isometry
    displacement: float


@dataclass(frozen=True, eq=False)
class OrbitTable:
    """Vectorized orbit data: words, matrices and displacements, sorted."""

    words: tuple
    mats: np.ndarray
    disp: np.ndarray
    R: float

    def __len__(self):
        return len(self.disp)

    def upto(self, R):
        k = int(np.searchsorted(self.disp, R, side="right"))
        return OrbitTable(self.words[:k], self.mats[:k], self.disp[:k], R)


def _halfspace_distance(w, t, center, radius):
    """Distance from ``(w, t)`` to the closed region inside the hemisphere ``(center, radius)``."""
    gap = np.abs(w - center) ** 2 + t * t - radius * radius
    return np.where(gap <= 0.0, 0.0, np.arcsinh(np.maximum(gap, 0.0) / (2.0 * radius * t)))


def _dedupe(mats, disp, tol=1e-9):
    keep = np.ones(len(disp), dtype=bool)
    start = 0
    n = len(disp)
    while start < n:
        stop = start + 1
        while stop < n and disp[stop] - disp[start] < tol:
            stop += 1
        if stop - start > 1:
            for i in range(start, stop):
                if not keep[i]:
                    continue
                for j in range(i + 1, stop):
                    if keep[j]:
                        dm = np.max(np.abs(mats[i] - mats[j]))
                        dp = np.max(np.abs(mats[i] + mats[j]))
                        if min(dm, dp) < tol:
                            keep[j] = False
        start = stop
    return keep


def _cyclic_words(gspec, R, cap):
    # d(p, g^k p) >= |k| ell, so powers beyond R / ell cannot qualify
    ell = gspec.generators[0].translation_length()
    kmax = int(math.floor(R / ell)) + 1
    if 2 * kmax > _LEVEL_CAP:
        raise CapacityError(cap, f"cyclic enumeration needs {2 * kmax} powers (cap {_LEVEL_CAP})")
    letters = gspec.letters()
    out_w, out_m = [], []
    for b in (0, 1):
        m = np.eye(2, dtype=complex)
        for k in range(1, kmax + 1):
            m = m @ letters[b]
            out_w.append((b,) * k)
            out_m.append(m.copy())
    return out_w, np.array(out_m)


@functools.lru_cache(maxsize=32)
def _orbit_cached(key, R, cap):
    kind, dim, gens, bp = key
    gspec = _rebuild(key)
    w0, t0 = gspec.basepoint._wt()
    all_words, all_mats, all_disp = [], [], []

    if kind == "cyclic":
        words, mats = _cyclic_words(gspec, R, cap)
        d = _dist_wt(w0, t0, *_apply_wt(mats, w0, t0))
        sel = d <= R
        if sel.sum() > cap:
            raise CapacityError(cap)
        all_words = [wd for wd, k in zip(words, sel) if k]
        all_mats, all_disp = [mats[sel]], [d[sel]]
    else:
        # Ping-pong pruning: letter b maps the common exterior of the isometric
        # circles into the disc bounded by I(b^-1), so every descendant of the
        # word w.b sends the basepoint into w(disc of b^-1).  A branch is cut
        # once that region lies farther than R from the basepoint.
        letters = gspec.letters()
        nlet = len(letters)
        inv = np.arange(nlet) ^ 1
        circles = [isometric_circle(letters[b ^ 1]) for b in range(nlet)]
        centers = np.array([c for c, _ in circles])
        radii = np.array([r for _, r in circles])
        slack = 1e-9 * max(1.0, R)
        total = 0
        # frontier: words, their matrices and the inverses applied to the basepoint
        pre_w = np.zeros((1, 0), dtype=np.int16)
        pre_m = np.eye(2, dtype=complex)[None]
        pre_last = np.array([-1])
        level = 0
        while len(pre_m):
            level += 1
            inv_m = np.stack([pre_m[:, 1, 1], -pre_m[:, 0, 1], -pre_m[:, 1, 0], pre_m[:, 0, 0]], axis=-1)
            pw, pt = _apply_wt(inv_m.reshape(-1, 2, 2), w0, t0)
            nxt_w, nxt_m, nxt_last = [], [], []
            for b in range(nlet):
                bound = _halfspace_distance(pw, pt, centers[b], radii[b])
                sel = (pre_last != inv[b]) & (bound <= R + slack)
                if not sel.any():
                    continue
                wb = np.empty((int(sel.sum()), level), dtype=np.int16)
                wb[:, :-1] = pre_w[sel]
                wb[:, -1] = b
                nxt_w.append(wb)
                nxt_m.append(pre_m[sel] @ letters[b])
                nxt_last.append(np.full(int(sel.sum()), b))
            if not nxt_w:
                break
            pre_w = np.concatenate(nxt_w)
            pre_m = np.concatenate(nxt_m)
            pre_last = np.concatenate(nxt_last)
            if len(pre_m) > _LEVEL_CAP:
                raise CapacityError(cap, f"word level {level} keeps {len(pre_m)} live words (cap {_LEVEL_CAP})")
            d = _dist_wt(w0, t0, *_apply_wt(pre_m, w0, t0))
            sel = d <= R
            cnt = int(sel.sum())
            total += cnt
            if total > cap:
                raise CapacityError(cap)
            if cnt:
                all_mats.append(pre_m[sel])
                all_disp.append(d[sel])
                all_words.extend(tuple(int(x) for x in row) for row in pre_w[sel])

    if not all_disp:
        empty = np.zeros((0, 2, 2), dtype=complex)
        return OrbitTable((), empty, np.zeros(0), R)
    mats = np.concatenate(all_mats)
    disp = np.concatenate(all_disp)
    # canonical order: displacement, then word length, then lexicographic word
    maxlen = max(len(wd) for wd in all_words)
    padded = np.full((len(all_words), maxlen), -1, dtype=np.int32)
    for i, wd in enumerate(all_words):
        padded[i, : len(wd)] = wd
    lengths = np.array([len(wd) for wd in all_words])
    keys = [padded[:, j] for j in range(maxlen - 1, -1, -1)] + [lengths, np.round(disp, 12)]
    order = np.lexsort(keys)
    mats, disp = mats[order], disp[order]
    # ties broken by word can leave ulp-level inversions; keep the list nondecreasing
    disp = np.maximum.accumulate(disp)
    words = [all_words[i] for i in order]
    # numerically coincident elements (and anything equal to the identity)
    keep = _dedupe(mats, disp)
    ident = np.minimum(np.max(np.abs(mats - np.eye(2)), axis=(1, 2)),
                       np.max(np.abs(mats + np.eye(2)), axis=(1, 2))) < 1e-9
    keep &= ~ident
    if not keep.all():
        mats, disp = mats[keep], disp[keep]
        words = [wd for wd, k in zip(words, keep) if k]
    if dim == 2:
        mats = mats.real.copy()
    mats.setflags(write=False)
    disp.setflags(write=False)
    return OrbitTable(tuple(words), mats, disp, R)


def _rebuild(key):
    kind, dim, gens, bp = key
    out = []
    for flat in gens:
        m = np.array(flat, dtype=complex).reshape(2, 2)
        out.append(Isometry(dim, m.real if dim == 2 else m))
    return GroupSpec(kind, tuple(out), HPoint(dim, bp))


def orbit_table(G: GroupSpec, R: float, cap: int = DEFAULT_CAP) -> OrbitTable:
    """Orbit data for every nontrivial element with displacement at most ``R``."""
    if not R > 0:
        raise ContractViolation(f"R must be positive, got {R}")
    return _orbit_cached(G.key(), float(R), int(cap))


def enumerate_orbit(G: GroupSpec, R: float, cap: int = DEFAULT_CAP) -> list:
    """List every nontrivial element with ``r_gamma <= R``.

    Elements come sorted by displacement.  Cyclic groups stop at powers
    ``|k| > R / ell`` since ``r_{g^k} >= |k| ell``.  Schottky groups are
    searched over reduced words with a ping-pong bound: every extension of
    ``w b`` maps the basepoint into ``w`` applied to the disc bounded by the
    isometric circle of ``b^-1``, so a branch is dropped once that region
    is farther than ``R`` from the basepoint.  The search is therefore
    complete without a word-length cutoff.

    Raises
    ------
    CapacityError
        If more than ``cap`` elements qualify.
    """
    tab = orbit_table(G, R, cap)
    dim = G.dim
    return [OrbitElement(wd, Isometry(dim, m), float(d)) for wd, m, d in zip(tab.words, tab.mats, tab.disp)]


def orbit_distances(G: GroupSpec, z: HPoint, zp: HPoint, R: float, cap: int = DEFAULT_CAP):
    """``rho(z, gamma z')`` for the identity followed by every orbit element."""
    if z.dim != G.dim or zp.dim != G.dim:
        raise ContractViolation("points and group differ in dimension")
    tab = orbit_table(G, R, cap)
    w, t = z._wt()
    wp, tp = zp._wt()
    if len(tab):
        w2, t2 = _apply_wt(tab.mats, wp, tp)
        rest = _dist_wt(w, t, w2, t2)
    else:
        rest = np.zeros(0)
    return np.concatenate([[float(_dist_wt(w, t, wp, tp))], rest])


# ---------------------------------------------------------------------------
# Poincare series and critical exponent
# ---------------------------------------------------------------------------


def count_grid(disp, R_max, spacing=1.0):
    """Orbit counts ``N(R)`` on the grid ``R_max, R_max - spacing, ...`` down to ``R_max/2``."""
    grid = np.arange(R_max, 0.5 * R_max - 1e-9, -spacing)[::-1]
    return grid, np.searchsorted(np.asarray(disp), grid, side="right")


def _fit_growth(disp, R_max, spacing=1.0):
    """Least-squares slope of log N(R) on the upper half of (0, R_max]."""
    grid, counts = count_grid(disp, R_max, spacing)
    sel = counts > 0
    if sel.sum() < 3:
        raise DataInsufficiencyError(3, int(sel.sum()), "fewer than 3 populated grid radii in the upper half of the R range")
    fit = stats.linregress(grid[sel], np.log(counts[sel]))
    return float(fit.slope), float(fit.stderr)


def growth_rate(G: GroupSpec, R: float, cap: int = DEFAULT_CAP) -> float:
    """Empirical exponential growth rate of the orbit count up to ``R``."""
    if G.kind == "cyclic":
        return 0.0
    tab = orbit_table(G, R, cap)
    if len(tab) >= 50:
        try:
            return max(_fit_growth(tab.disp, R)[0], 0.0)
        except DataInsufficiencyError:
            pass
    if len(tab) == 0:
        return 0.0
    return math.log(len(tab) + 1) / R


def shell_tail(disp, R, width, rate, weight):
    """Extrapolated sum of ``weight(r)`` over orbit points beyond ``R``.

    The count in each shell ``(R + (k-1) w, R + k w]`` is taken as the
    count of the last enumerated shell times ``exp(rate * k * w)``; the
    weight is evaluated at the inner radius of the shell, so ``weight``
    must be nonincreasing.
    """
    disp = np.asarray(disp)
    n_last = max(int(np.count_nonzero(disp > R - width)), 1)
    total = 0.0
    k = 1
    while True:
        term = n_last * math.exp(rate * k * width) * weight(R + (k - 1) * width)
        if not math.isfinite(term):
            return math.inf
        total += term
        if term <= 1e-17 * total or term == 0.0:
            return total
        k += 1
        if k > 200_000:
            return math.inf


def poincare_partial_sum(G: GroupSpec, s: float, z: HPoint, zp: HPoint, R: float,
                         cap: int = DEFAULT_CAP):
    """Truncated Poincare series and an extrapolated tail bound.

    Returns
    -------
    value : float
        Sum of ``exp(-s rho(z, gamma z'))`` over the identity and every
        element with ``r_gamma <= R``.
    tail_bound : float
        Geometric extrapolation of the omitted mass from the empirical
        orbit growth rate; ``inf`` when ``s`` does not exceed that rate.
    """
    if s < 0:
        raise ContractViolation(f"s must be nonnegative, got {s}")
    m = G.min_displacement()
    if R < m:
        raise ContractViolation(f"R = {R} below the minimal displacement {m:.6g}")
    rho = orbit_distances(G, z, zp, R, cap)
    value = float(np.sum(np.exp(-s * rho)))
    rate = growth_rate(G, R, cap)
    if s <= rate:
        return value, math.inf
    e = G.basepoint
    offset = hyp_distance(z, e) + hyp_distance(zp, e)
    disp = orbit_table(G, R, cap).disp
    n_last = max(int(np.count_nonzero(disp > R - m)), 1)
    tail = math.exp(s * offset) * n_last * math.exp(rate * m) * math.exp(-s * R) / (-math.expm1(-(s - rate) * m))
    return value, tail


def estimate_delta(G: GroupSpec, R_max: float, cap: int = DEFAULT_CAP, min_count: int = 50,
                   spacing: float = 1.0):
    """Critical exponent from the growth of the orbit-counting function.

    Returns ``(delta, stderr)``: the least-squares slope of ``log N(R)``
    against ``R``, sampled every ``spacing`` on ``[R_max/2, R_max]``.
    Cyclic groups return exactly ``(0.0, 0.0)``.
    """
    if G.kind == "cyclic":
        return 0.0, 0.0
    tab = orbit_table(G, R_max, cap)
    if len(tab) < min_count:
        raise DataInsufficiencyError(min_count, len(tab),
                                     f"estimate_delta needs at least {min_count} orbit elements, got {len(tab)}; raise R_max")
    return _fit_growth(tab.disp, R_max, spacing)


def random_point(rng, dim, spread=1.0):
    """Random point with log-height and boundary coordinates of size ``spread``."""
    y = math.exp(rng.uniform(-spread, spread))
    xs = rng.uniform(-spread, spread, size=dim - 1)
    return HPoint(dim, tuple(xs) + (y,))


def random_isometry(rng, dim, scale=1.0):
    """Random unimodular matrix, real for ``dim=2``."""
    if dim == 2:
        while True:
            m = rng.normal(scale=scale, size=(2, 2))
            if _det(m) > 0.05:
                return Isometry(2, _normalize(m))
    while True:
        m = rng.normal(scale=scale, size=(2, 2)) + 1j * rng.normal(scale=scale, size=(2, 2))
        if abs(_det(m)) > 0.05:
            return Isometry(3, _normalize(m))


def words_to_matrix(G: GroupSpec, word: Sequence[int]):
    letters = G.letters()
    m = np.eye(2, dtype=complex)
    for k in word:
        m = m @ letters[k]
    return m
