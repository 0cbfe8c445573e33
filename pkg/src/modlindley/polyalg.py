"""Complex-analytic and linear-algebra workhorses.

The root finder locates zeros of an analytic function in the open right
half-plane by the argument principle: the winding number of f over a closed
contour equals the number of enclosed zeros.  Rectangles are quadrisected
until each cell holds at most one zero, then Newton polishes each cell's
zero.  All counting is done on phase increments with an unwrap guard, and
every result is cross-checked by a fresh count over the original contour.

Functions passed in must be vectorised: they map a complex ndarray of shape
(m,) to a complex ndarray of shape (m,).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    ContourError,
    RankDeficiencyError,
    RepeatedZeroError,
    RootCountError,
    SingularSystemError,
)

_GUARD = 1e-8  # min |f| on a contour, relative to the contour median
_UNWRAP = np.pi / 2  # max phase step before the sampling is declared too coarse


@dataclass(frozen=True)
class RectContour:
    """Axis-aligned rectangle traversed counterclockwise."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError("degenerate rectangle")

    def sample(self, n: int) -> np.ndarray:
        w = self.re_max - self.re_min
        h = self.im_max - self.im_min
        per = 2 * (w + h)
        counts = [max(8, int(round(n * l / per))) for l in (w, h, w, h)]
        bottom = self.re_min + np.arange(counts[0]) / counts[0] * w
        right = self.re_max + 1j * (self.im_min + np.arange(counts[1]) / counts[1] * h)
        top = self.re_max - np.arange(counts[2]) / counts[2] * w
        left = self.re_min + 1j * (self.im_max - np.arange(counts[3]) / counts[3] * h)
        return np.concatenate(
            [bottom + 1j * self.im_min, right, top + 1j * self.im_max, left]
        )

    def contains(self, z: complex, slack: float = 0.0) -> bool:
        return (
            self.re_min - slack <= z.real <= self.re_max + slack
            and self.im_min - slack <= z.imag <= self.im_max + slack
        )

    @property
    def diameter(self) -> float:
        return max(self.re_max - self.re_min, self.im_max - self.im_min)

    def split(self, fr_re: float = 0.5, fr_im: float = 0.5) -> list["RectContour"]:
        mr = self.re_min + fr_re * (self.re_max - self.re_min)
        mi = self.im_min + fr_im * (self.im_max - self.im_min)
        return [
            RectContour(self.re_min, mr, self.im_min, mi),
            RectContour(mr, self.re_max, self.im_min, mi),
            RectContour(self.re_min, mr, mi, self.im_max),
            RectContour(mr, self.re_max, mi, self.im_max),
        ]


@dataclass(frozen=True)
class CircleContour:
    center: complex
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def sample(self, n: int) -> np.ndarray:
        theta = 2.0 * np.pi * np.arange(n) / n
        return self.center + self.radius * np.exp(1j * theta)


Contour = RectContour | CircleContour


@dataclass(frozen=True)
class MatrixFunction:
    """Matrix-valued analytic function with its declared analyticity margin.

    ``fn`` maps a complex array of shape (m,) to an array (m, size, size);
    the function is analytic for Re(s) > -zeta.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    size: int
    zeta: float = np.inf
    label: str = ""

    def __call__(self, s: np.ndarray) -> np.ndarray:
        return self.fn(np.atleast_1d(np.asarray(s, dtype=complex)))

    def det(self, s) -> np.ndarray:
        """Vectorised determinant; scalar in, scalar out."""
        arr = np.atleast_1d(np.asarray(s, dtype=complex))
        d = np.linalg.det(self.fn(arr))
        return d if np.ndim(s) else complex(d[0])


@dataclass(frozen=True)
class AffineVector:
    """Vector-valued affine form ``const + coeffs @ c`` in unknowns c.

    Carrying the unknown coefficient vector symbolically through the series
    evaluation keeps the boundary systems exactly linear.
    """

    const: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.const, dtype=complex)
        A = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 1 or A.ndim != 2 or A.shape[0] != c.shape[0]:
            raise ValueError("const must be (N,), coeffs (N, K)")
        object.__setattr__(self, "const", c)
        object.__setattr__(self, "coeffs", A)

    def evaluate(self, c: np.ndarray) -> np.ndarray:
        return self.const + self.coeffs @ np.asarray(c, dtype=complex)

    def apply(self, M: np.ndarray) -> "AffineVector":
        return AffineVector(M @ self.const, M @ self.coeffs)

    def __add__(self, other: "AffineVector") -> "AffineVector":
        return AffineVector(self.const + other.const, self.coeffs + other.coeffs)

    def __sub__(self, other: "AffineVector") -> "AffineVector":
        return AffineVector(self.const - other.const, self.coeffs - other.coeffs)

    def __mul__(self, a: complex) -> "AffineVector":
        return AffineVector(a * self.const, a * self.coeffs)

    __rmul__ = __mul__

    def norm_inf(self) -> float:
        m1 = float(np.max(np.abs(self.const))) if self.const.size else 0.0
        m2 = float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0
        return max(m1, m2)


@dataclass(frozen=True)
class ZeroSet:
    """Simple zeros located inside a contour, with the verified count."""

    zeros: np.ndarray
    contour: Contour
    count: int
    multiplicities: tuple[int, ...]


def solve_dense(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    """Solve A x = b, returning (x, condition estimate).

    One step of iterative refinement is applied if the raw residual misses
    the 1e-10 * (1 + ||b||_inf) bound.

    Raises:
        SingularSystemError: singular or residual still out of bounds.
    """
    A = np.asarray(A)
    b = np.asarray(b)
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularSystemError("matrix is singular to working precision", cond)
    x = np.linalg.solve(A, b)
    bnorm = float(np.max(np.abs(b))) if b.size else 0.0
    bound = 1e-10 * (1.0 + bnorm)
    resid = float(np.max(np.abs(A @ x - b))) if b.size else 0.0
    if resid > bound:
        x = x + np.linalg.solve(A, b - A @ x)
        resid = float(np.max(np.abs(A @ x - b)))
        if resid > bound:
            raise SingularSystemError(
                f"residual {resid:.3e} exceeds bound {bound:.3e}", cond
            )
    return x, cond


def _winding_once(f, contour: Contour, n: int) -> tuple[int | None, float, float]:
    """One winding evaluation: (integer or None if too coarse, minabs, scale)."""
    z = contour.sample(n)
    vals = np.asarray(f(z), dtype=complex)
    absv = np.abs(vals)
    scale = float(np.median(absv)) if absv.size else 0.0
    min_abs = float(absv.min()) if absv.size else 0.0
    if scale == 0.0 or min_abs < _GUARD * scale:
        raise ContourError(
            f"|f| dips to {min_abs:.3e} on the contour (median {scale:.3e}); "
            "a zero lies on or near the contour - perturb the contour and retry",
            min_abs,
        )
    ratios = vals[np.r_[1 : len(vals), 0]] / vals
    dphi = np.angle(ratios)
    if np.max(np.abs(dphi)) >= _UNWRAP:
        return None, min_abs, scale
    total = float(dphi.sum()) / (2.0 * np.pi)
    k = int(round(total))
    if abs(total - k) > 0.25:
        return None, min_abs, scale
    return k, min_abs, scale


def count_zeros(f, contour: Contour, n_points: int = 256) -> int:
    """Number of zeros of analytic f inside the contour (with multiplicity).

    Phase increments are summed along the sampled boundary; the point count
    doubles until every increment is below pi/2 and two successive
    resolutions agree on the winding number.

    Raises:
        ContourError: |f| on the contour falls under the relative guard, or
            the winding never stabilises.
    """
    prev: int | None = None
    n = max(64, n_points)
    for _ in range(14):
        k, _, _ = _winding_once(f, contour, n)
        if k is not None:
            if prev is not None and k == prev:
                return k
            prev = k
        else:
            prev = None
        n *= 2
    raise ContourError("winding number failed to stabilise under refinement", -1.0)


def _newton_refine(
    f,
    z0: complex,
    re_floor: float,
    f_scale: float,
    tol: float = 1e-12,
    max_iter: int = 120,
) -> complex | None:
    """Damped Newton iteration kept inside Re(z) >= re_floor.

    After reaching the scaled target the zero is polished with a few plain
    Newton steps so the raw residual drops to its floating-point floor.
    """
    z = complex(z0)
    fz = complex(f(np.array([z]))[0])

    def deriv(zz: complex) -> complex:
        h = 1e-7 * max(1.0, abs(zz))
        return (
            complex(f(np.array([zz + h]))[0]) - complex(f(np.array([zz - h]))[0])
        ) / (2.0 * h)

    hit = False
    for _ in range(max_iter):
        if abs(fz) <= tol * f_scale:
            hit = True
            break
        fp = deriv(z)
        if fp == 0.0:
            return None
        step = fz / fp
        # damp until the residual actually decreases
        lam = 1.0
        for _ in range(30):
            zn = z - lam * step
            if zn.real < re_floor:
                zn = complex(re_floor, zn.imag)
            fn_ = complex(f(np.array([zn]))[0])
            if abs(fn_) < abs(fz):
                z, fz = zn, fn_
                break
            lam *= 0.5
        else:
            return None
    if not hit and abs(fz) > tol * f_scale:
        return None
    for _ in range(6):  # polish to the machine floor
        fp = deriv(z)
        if fp == 0.0:
            break
        zn = z - fz / fp
        if zn.real < re_floor:
            zn = complex(re_floor, zn.imag)
        fn_ = complex(f(np.array([zn]))[0])
        if abs(fn_) >= abs(fz):
            break
        z, fz = zn, fn_
    return z


def _count_with_retries(f, rect: RectContour, n_points: int = 256) -> int:
    """count_zeros with split-line jitter: on contour collisions the cell
    boundary is nudged by a tiny relative amount before giving up."""
    nudges = [0.0, 1.3e-5, -1.7e-5, 3.1e-5]
    last: ContourError | None = None
    for nu in nudges:
        d = nu * max(1.0, rect.diameter)
        trial = RectContour(
            rect.re_min - d, rect.re_max + d, rect.im_min - d, rect.im_max + d
        )
        try:
            return count_zeros(f, trial, n_points)
        except ContourError as exc:
            last = exc
    raise last  # type: ignore[misc]


def find_zeros_right_halfplane(
    f,
    expected_count: int,
    search_bound: float,
    inset: float = 1e-9,
    min_cell: float = 1e-7,
) -> ZeroSet:
    """Locate all zeros of f in Re(z) > 0 and verify the expected count.

    The search region is the rectangle [inset, B] x [-B, B].  If the initial
    count falls short of ``expected_count`` the bound is doubled once (roots
    beyond the heuristic bound), then a structured error is raised.

    Raises:
        RootCountError: located/expected mismatch that subdivision cannot fix.
        RepeatedZeroError: a cell at the minimum size still has winding > 1.
    """
    bound = float(search_bound)
    rect = RectContour(inset, bound, -bound, bound)
    total = _count_with_retries(f, rect, n_points=512)
    if total != expected_count and total < expected_count:
        rect = RectContour(inset, 2 * bound, -2 * bound, 2 * bound)
        total = _count_with_retries(f, rect, n_points=1024)
    if total != expected_count:
        raise RootCountError(
            total, expected_count, f"counting contour {rect}"
        )
    # reference scale for the Newton stopping rule
    boundary_vals = np.abs(np.asarray(f(rect.sample(512)), dtype=complex))
    f_scale = max(float(np.median(boundary_vals)), 1e-300)

    zeros: list[complex] = []
    # off-centre split fractions: the first horizontal cut would otherwise run
    # exactly along the real axis, where real zeros live
    fractions = [(0.5, 0.5 + 1.37e-2), (0.5 + 1.7e-2, 0.5 - 2.3e-2), (0.5 - 3.1e-2, 0.5 + 2.9e-2)]

    def recurse(cell: RectContour, k: int):
        if k == 0:
            return
        if k == 1:
            z0 = complex(
                0.5 * (cell.re_min + cell.re_max), 0.5 * (cell.im_min + cell.im_max)
            )
            z = _newton_refine(f, z0, inset, f_scale)
            # Newton may escape to a zero belonging to another cell; keep
            # shrinking this cell until the iteration stays inside it.  The
            # slack must stay tiny: anything proportional to the cell size
            # can swallow a neighbouring cell's zero and register it twice.
            if z is None or not cell.contains(z, slack=1e-9 * (1.0 + abs(z))):
                if cell.diameter <= min_cell:
                    raise RootCountError(
                        0, 1, f"Newton failed to converge inside cell around {z0}"
                    )
                subdivide(cell, 1)
                return
            zeros.append(z)
            return
        if cell.diameter <= min_cell:
            raise RepeatedZeroError(
                complex(
                    0.5 * (cell.re_min + cell.re_max),
                    0.5 * (cell.im_min + cell.im_max),
                ),
                k,
            )
        subdivide(cell, k)

    def subdivide(cell: RectContour, k: int):
        last_exc: Exception | None = None
        for fr_re, fr_im in fractions:
            try:
                parts = cell.split(fr_re, fr_im)
                counts = [_count_with_retries(f, p) for p in parts]
                if sum(counts) != k:
                    last_exc = RootCountError(
                        sum(counts), k, f"subdivision of {cell} lost zeros"
                    )
                    continue
                for p, kp in zip(parts, counts):
                    recurse(p, kp)
                return
            except ContourError as exc:
                last_exc = exc
        raise last_exc  # type: ignore[misc]

    recurse(rect, total)

    # snap real-axis zeros, deduplicate, and validate
    cleaned: list[complex] = []
    for z in zeros:
        if abs(z.imag) < 1e-9 * (1.0 + abs(z.real)):
            z = complex(z.real, 0.0)
        if not any(abs(z - w) < 1e-8 * (1.0 + abs(w)) for w in cleaned):
            cleaned.append(z)
    if len(cleaned) != expected_count:
        raise RootCountError(
            len(cleaned), expected_count, "duplicate zeros after refinement"
        )
    zs = np.array(sorted(cleaned, key=lambda z: (z.real, z.imag)), dtype=complex)
    # postcondition |f(z)| < 1e-9 (1 + |f'(z)|) on the raw function
    for z in zs:
        h = 1e-7 * max(1.0, abs(z))
        fp = (complex(f(np.array([z + h]))[0]) - complex(f(np.array([z - h]))[0])) / (
            2.0 * h
        )
        fz = abs(complex(f(np.array([z]))[0]))
        if fz >= 1e-9 * (1.0 + abs(fp)):
            raise RootCountError(
                expected_count,
                expected_count,
                f"zero at {z} fails the residual bound: |f|={fz:.3e}",
            )
    return ZeroSet(
        zeros=zs, contour=rect, count=len(zs), multiplicities=(1,) * len(zs)
    )


def _null_vector(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    if n == 1:
        if abs(A[0, 0]) > 1e-8:
            raise RankDeficiencyError((float(abs(A[0, 0])),))
        return np.array([1.0 + 0.0j])
    _, S, Vh = np.linalg.svd(A)
    smax = float(S[0])
    if smax == 0.0:
        raise RankDeficiencyError(tuple(float(s) for s in S))
    rel = S / smax
    if rel[-1] >= 1e-8 or rel[-2] <= 1e-6:
        raise RankDeficiencyError(tuple(float(s) for s in S))
    v = Vh[-1].conj()
    # make the first non-negligible component positive real
    idx = int(np.argmax(np.abs(v) > 1e-9 * np.max(np.abs(v))))
    phase = v[idx] / abs(v[idx])
    v = v / phase
    return v / np.linalg.norm(v)


def null_vector_right(A: np.ndarray) -> np.ndarray:
    """Unit right null vector of a numerically rank-(N-1) matrix.

    Sign convention: the first component with magnitude above 1e-9 of the
    max is made positive real, so repeated runs agree bit-for-bit.

    Raises:
        RankDeficiencyError: rank deficiency is not exactly one.
    """
    return _null_vector(A)


def null_vector_left(A: np.ndarray) -> np.ndarray:
    """Unit left null vector w (w A = 0), same conventions as the right one."""
    return _null_vector(np.asarray(A).T)
