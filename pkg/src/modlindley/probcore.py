"""Probabilistic primitives: modulating chains and Laplace-Stieltjes transforms.

Everything downstream works with the three transform carriers defined here:

* :class:`RationalLst` — transforms that are ratios of polynomials with all
  denominator roots in the open left half-plane.  These admit exact algebra
  (root bookkeeping, Taylor moments) and are required wherever the solvers
  substitute denominator roots into linear systems.
* :class:`GeneralLst` — an opaque evaluable transform with a declared
  analyticity margin and declared moments.  Used where only pointwise values
  are needed.
* :class:`NegativeMultiplierLaw` — a finite atomic law on the negative axis.

Polynomials are stored as ascending coefficient arrays compatible with
``numpy.polynomial.polynomial``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import ConfigError, PoleEvaluationError, ReducibleChainError

_MAX_DEGREE = 64

# Mixture component used by the simulator: Erlang(shape, rate) with a weight;
# shape 0 encodes a point mass at `rate` (value reinterpreted).  Constructors
# attach these so the simulator can sample exactly; hand-built transforms
# without mixture data are analytics-only.
MixtureComponent = tuple[float, float, int]


def _as_poly(coeffs: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(coeffs, dtype=float))
    # strip trailing zeros but keep at least the constant term
    nz = np.nonzero(arr)[0]
    return arr[: nz[-1] + 1] if nz.size else arr[:1]


@dataclass(frozen=True)
class ModulationChain:
    """Irreducible background chain with its stationary law.

    Attributes:
        transition: row-stochastic matrix P, shape (N, N).
        stationary: stationary probability vector, solves pi P = pi.
    """

    transition: np.ndarray
    stationary: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ConfigError("transition matrix must be square")
        if np.any(P < -1e-15):
            raise ConfigError("transition matrix has negative entries")
        rows = P.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > 1e-12:
            raise ConfigError(
                f"rows must sum to 1 within 1e-12 (max deviation {np.max(np.abs(rows - 1.0)):.2e})"
            )
        _check_irreducible(P)
        pi = np.asarray(self.stationary, dtype=float)
        if pi.shape != (P.shape[0],):
            raise ConfigError("stationary vector has wrong shape")
        if np.max(np.abs(pi @ P - pi)) > 1e-10 or abs(pi.sum() - 1.0) > 1e-10:
            raise ConfigError("stationary vector does not solve pi P = pi")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "stationary", pi)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @classmethod
    def from_matrix(cls, P: Sequence[Sequence[float]] | np.ndarray) -> "ModulationChain":
        P = np.asarray(P, dtype=float)
        return cls(P, stationary_distribution(P))


def _check_irreducible(P: np.ndarray) -> None:
    n = P.shape[0]
    adj = P > 0.0
    reach = adj | np.eye(n, dtype=bool)
    # Warshall closure; n is small so cubic is fine
    for k in range(n):
        reach = reach | (reach[:, k : k + 1] & reach[k : k + 1, :])
    if not reach.all():
        bad = {j for i in range(n) for j in range(n) if not reach[i, j]}
        raise ReducibleChainError(tuple(sorted(bad)))


def stationary_distribution(P: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    """Stationary vector of a row-stochastic irreducible matrix.

    Solves the linear system (P^T - I) pi = 0 with the last equation replaced
    by sum(pi) = 1, which also covers periodic chains where power iteration
    would oscillate.

    Raises:
        ReducibleChainError: if some state pair is not mutually reachable.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ConfigError("transition matrix must be square")
    _check_irreducible(P)
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = np.max(np.abs(pi @ P - pi))
    if resid > 1e-10:
        raise ConfigError(f"stationary solve residual {resid:.2e} exceeds 1e-10")
    return pi


def _taylor_of_ratio(num: np.ndarray, den: np.ndarray, order: int) -> np.ndarray:
    """Taylor coefficients of num/den at 0 up to s^order (den[0] != 0)."""
    a = np.zeros(order + 1)
    for k in range(order + 1):
        nk = num[k] if k < num.size else 0.0
        acc = nk
        for i in range(k):
            dki = den[k - i] if (k - i) < den.size else 0.0
            acc -= a[i] * dki
        a[k] = acc / den[0]
    return a


@dataclass(frozen=True)
class RationalLst:
    """Transform N(s)/D(s) with every root of D in the open left half-plane.

    ``denominator_roots`` lists the roots of D with multiplicity; they are the
    values the solvers substitute into boundary systems, so they are part of
    the carrier rather than recomputed on demand.
    """

    numerator: np.ndarray
    denominator: np.ndarray
    denominator_roots: np.ndarray
    mixture: tuple[MixtureComponent, ...] | None = None

    def __post_init__(self):
        num = _as_poly(self.numerator)
        den = _as_poly(self.denominator)
        roots = np.atleast_1d(np.asarray(self.denominator_roots, dtype=complex))
        if num.size - 1 > den.size - 1:
            raise ConfigError("numerator degree exceeds denominator degree")
        if den.size - 1 > _MAX_DEGREE:
            raise ConfigError(f"denominator degree {den.size - 1} exceeds guard {_MAX_DEGREE}")
        if abs(den[0]) < 1e-300:
            raise ConfigError("denominator vanishes at 0")
        if abs(num[0] / den[0] - 1.0) > 1e-12:
            raise ConfigError("transform must equal 1 at s = 0 within 1e-12")
        if roots.size != den.size - 1:
            raise ConfigError("denominator_roots must list deg(D) roots with multiplicity")
        if roots.size and np.max(roots.real) >= 0.0:
            raise ConfigError("denominator roots must have negative real part")
        if roots.size:
            recon = den[-1] * np.real_if_close(
                npoly.polyfromroots(roots), tol=1000
            )
            recon = np.asarray(recon, dtype=complex)
            scale = max(1.0, float(np.max(np.abs(den))))
            if np.max(np.abs(recon - den)) > 1e-10 * scale:
                raise ConfigError("denominator_roots do not reproduce the denominator")
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)
        object.__setattr__(self, "denominator_roots", roots)

    @property
    def degree(self) -> int:
        return self.denominator.size - 1

    def __call__(self, s):
        return lst_eval(self, s)

    def taylor_moments(self, r_max: int) -> np.ndarray:
        """Moments (order 0..r_max) from the exact Taylor expansion at 0."""
        a = _taylor_of_ratio(self.numerator, self.denominator, r_max)
        return np.array(
            [((-1.0) ** r) * math.factorial(r) * a[r] for r in range(r_max + 1)]
        )


@dataclass(frozen=True)
class GeneralLst:
    """Evaluable transform with declared analyticity margin and moments.

    Attributes:
        fn: vectorised callable on complex s with Re(s) > -zeta.
        zeta: analyticity margin (the transform is analytic on Re(s) > -zeta).
        moments: declared raw moments (gamma_1, ..., gamma_r).
    """

    fn: Callable[[np.ndarray], np.ndarray]
    zeta: float
    moments: tuple[float, ...] = ()
    mixture: tuple[MixtureComponent, ...] | None = None
    label: str = ""

    def __post_init__(self):
        if self.zeta < 0:
            raise ConfigError("analyticity margin zeta must be >= 0")
        v0 = complex(self.fn(np.asarray(0.0 + 0.0j)))
        if abs(v0 - 1.0) > 1e-12:
            raise ConfigError(f"transform must equal 1 at s = 0 within 1e-12, got {v0}")
        if any(m < 0 for m in self.moments):
            raise ConfigError("declared moments must be nonnegative")
        # Spot-check declared moments against central differences.  Orders
        # r >= 3 are skipped: float64 central differences at step 1e-4 carry
        # ~1e-16/h^r roundoff, which already swamps the tolerance at r = 3.
        h = 1e-4
        if self.zeta > h:
            f = lambda x: complex(self.fn(np.asarray(complex(x))))
            checks = {}
            if len(self.moments) >= 1:
                checks[1] = -(f(h) - f(-h)).real / (2 * h)
            if len(self.moments) >= 2:
                checks[2] = (f(h) - 2 * f(0.0) + f(-h)).real / h**2
            for r, numeric in checks.items():
                declared = self.moments[r - 1]
                if abs(declared - numeric) > 1e-6 * (1.0 + abs(declared)):
                    raise ConfigError(
                        f"declared moment {r} = {declared} disagrees with central "
                        f"difference {numeric}"
                    )

    def __call__(self, s):
        return lst_eval(self, s)


@dataclass(frozen=True)
class NegativeMultiplierLaw:
    """Finite atomic law of the negative multiplier values.

    atoms: tuple of (value, weight) with value < 0, weight in (0, 1],
    weights summing to 1.
    """

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ConfigError("negative multiplier law needs at least one atom")
        total = 0.0
        for value, weight in self.atoms:
            if value >= 0:
                raise ConfigError(f"atom value {value} must be negative")
            if not (0.0 < weight <= 1.0):
                raise ConfigError(f"atom weight {weight} must lie in (0, 1]")
            total += weight
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"atom weights sum to {total}, expected 1 within 1e-12")

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])


def lst_eval(lst: RationalLst | GeneralLst, s):
    """Evaluate a transform at scalar or array argument s.

    Raises:
        PoleEvaluationError: when s is within 1e-12 (relative to the pole
            magnitude) of a denominator root of a rational transform.
    """
    s_arr = np.asarray(s, dtype=complex)
    if isinstance(lst, GeneralLst):
        out = np.asarray(lst.fn(s_arr), dtype=complex)
        return complex(out) if np.isscalar(s) or s_arr.ndim == 0 else out
    den = npoly.polyval(s_arr, lst.denominator)
    flat = np.atleast_1d(s_arr)
    for root in lst.denominator_roots:
        dist = np.abs(flat - root)
        if np.any(dist < 1e-12 * (1.0 + abs(root))):
            idx = int(np.argmin(dist))
            raise PoleEvaluationError(complex(flat[idx]), complex(root))
    out = npoly.polyval(s_arr, lst.numerator) / den
    return complex(out) if np.isscalar(s) or s_arr.ndim == 0 else out


def lst_one_minus(lst: RationalLst | GeneralLst, s):
    """Evaluate 1 - lst(s) without subtractive cancellation near s = 0.

    Forming 1 - N(s)/D(s) numerically loses digits where the transform is
    close to 1; (D - N)(s) / D(s) keeps full precision because N(0) = D(0)
    cancels at the coefficient level (any residue there is construction
    roundoff and is dropped).
    """
    if isinstance(lst, GeneralLst):
        return 1.0 - lst_eval(lst, s)
    num = np.asarray(lst.numerator, dtype=float)
    den = np.asarray(lst.denominator, dtype=float)
    diff = np.zeros(max(num.size, den.size))
    diff[: den.size] += den
    diff[: num.size] -= num
    if abs(diff[0]) <= 1e-12 * abs(den[0]):
        diff[0] = 0.0
    s_arr = np.asarray(s, dtype=complex)
    flat = np.atleast_1d(s_arr)
    for root in lst.denominator_roots:
        dist = np.abs(flat - root)
        if np.any(dist < 1e-12 * (1.0 + abs(root))):
            idx = int(np.argmin(dist))
            raise PoleEvaluationError(complex(flat[idx]), complex(root))
    out = npoly.polyval(s_arr, diff) / npoly.polyval(s_arr, den)
    return complex(out) if np.isscalar(s) or s_arr.ndim == 0 else out


# ---------------------------------------------------------------------------
# constructors


def exponential_lst(rate: float) -> RationalLst:
    """LST of an exponential(rate) variable: rate / (rate + s)."""
    if rate <= 0:
        raise ConfigError("exponential rate must be positive")
    return RationalLst(
        numerator=[rate],
        denominator=[rate, 1.0],
        denominator_roots=[-rate],
        mixture=((1.0, rate, 1),),
    )


def erlang_mixture_lst(
    weights: Sequence[float], rate: float, max_phases: int | None = None
) -> RationalLst:
    """Mixture of Erlang(k, rate) phases, k = 1..len(weights).

    Transform sum_k w_k (rate/(rate+s))^k over the common denominator
    (rate+s)^K, so deg D = K = number of phases.
    """
    w = np.asarray(weights, dtype=float)
    if max_phases is None:
        max_phases = w.size
    if w.size != max_phases:
        raise ConfigError("weights must have length max_phases")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ConfigError("mixture weights must be nonnegative and sum to 1")
    if rate <= 0:
        raise ConfigError("Erlang rate must be positive")
    K = int(max_phases)
    den = npoly.polypow([rate, 1.0], K)
    num = np.zeros(K + 1)
    for k in range(1, K + 1):
        # w_k * rate^k * (rate+s)^(K-k)
        term = (w[k - 1] * rate**k) * npoly.polypow([rate, 1.0], K - k)
        num[: term.size] += term
    mixture = tuple(
        (float(w[k - 1]), float(rate), k) for k in range(1, K + 1) if w[k - 1] > 0
    )
    return RationalLst(
        numerator=num,
        denominator=den,
        denominator_roots=[-rate] * K,
        mixture=mixture,
    )


def hyperexponential_lst(
    weights: Sequence[float], rates: Sequence[float]
) -> RationalLst:
    """Mixture of exponentials: sum_k w_k rate_k/(rate_k + s)."""
    w = np.asarray(weights, dtype=float)
    r = np.asarray(rates, dtype=float)
    if w.size != r.size or w.size == 0:
        raise ConfigError("weights and rates must have equal positive length")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ConfigError("mixture weights must be nonnegative and sum to 1")
    if np.any(r <= 0):
        raise ConfigError("rates must be positive")
    den = np.array([1.0])
    for rate in r:
        den = npoly.polymul(den, [rate, 1.0])
    num = np.zeros(den.size)
    for k in range(r.size):
        term = np.array([w[k] * r[k]])
        for j in range(r.size):
            if j != k:
                term = npoly.polymul(term, [r[j], 1.0])
        num[: term.size] += term
    num = num[: max(1, np.max(np.nonzero(num)[0]) + 1)] if np.any(num) else num[:1]
    mixture = tuple((float(w[k]), float(r[k]), 1) for k in range(r.size) if w[k] > 0)
    return RationalLst(
        numerator=num,
        denominator=den,
        denominator_roots=[-rate for rate in r],
        mixture=mixture,
    )


def degenerate_lst() -> RationalLst:
    """Point mass at 0 as a rational transform (identically 1)."""
    return RationalLst(
        numerator=[1.0],
        denominator=[1.0],
        denominator_roots=[],
        mixture=((1.0, 0.0, 0),),
    )


def point_mass_lst(value: float) -> GeneralLst:
    """Point mass at value >= 0: exp(-s*value), entire."""
    if value < 0:
        raise ConfigError("point mass value must be nonnegative")
    v = float(value)
    return GeneralLst(
        fn=lambda s: np.exp(-np.asarray(s, dtype=complex) * v),
        zeta=np.inf,
        moments=(v, v**2, v**3, v**4),
        mixture=((1.0, v, 0),),
        label=f"point_mass({v})",
    )


def general_from_rational(lst: RationalLst, r_max: int = 4) -> GeneralLst:
    """Wrap a rational transform as a GeneralLst with exact declared moments."""
    margin = float(-np.max(lst.denominator_roots.real)) if lst.degree else np.inf
    moms = lst.taylor_moments(r_max)[1:]
    return GeneralLst(
        fn=lambda s: npoly.polyval(np.asarray(s, dtype=complex), lst.numerator)
        / npoly.polyval(np.asarray(s, dtype=complex), lst.denominator),
        zeta=margin,
        moments=tuple(float(m.real) for m in moms),
        mixture=lst.mixture,
    )


def raw_moments(lst: RationalLst | GeneralLst, r_max: int) -> np.ndarray:
    """First r_max raw moments (order 1..r_max) of either transform carrier."""
    if isinstance(lst, RationalLst):
        return lst.taylor_moments(r_max)[1:].astype(float)
    if len(lst.moments) < r_max:
        raise ConfigError(
            f"transform declares {len(lst.moments)} moments, {r_max} required"
        )
    return np.asarray(lst.moments[:r_max], dtype=float)


def _scaled_mixture(
    mixture: tuple[MixtureComponent, ...] | None, u: float
) -> tuple[MixtureComponent, ...] | None:
    if mixture is None:
        return None
    # Point-mass components (shape 0) carry a value, gamma components a rate.
    return tuple(
        (w, v * u if shape == 0 else v / u, shape) for (w, v, shape) in mixture
    )


def time_scaled_lst(
    lst: RationalLst | GeneralLst, u: float
) -> RationalLst | GeneralLst:
    """Transform of u*X when lst is the transform of X, i.e. s -> lst(u*s).

    Coefficient c_k of s^k picks up u^k, poles and the analyticity margin
    shrink by u, the k-th moment grows by u^k, and mixture components are
    rescaled so sampling stays in sync with the transform.
    """
    if u <= 0:
        raise ConfigError("time scale factor must be positive")
    u = float(u)
    if isinstance(lst, RationalLst):
        return RationalLst(
            numerator=lst.numerator * u ** np.arange(lst.numerator.size),
            denominator=lst.denominator * u ** np.arange(lst.denominator.size),
            denominator_roots=lst.denominator_roots / u,
            mixture=_scaled_mixture(lst.mixture, u),
        )
    inner = lst.fn
    return GeneralLst(
        fn=lambda s, _f=inner, _u=u: _f(np.asarray(s, dtype=complex) * _u),
        zeta=lst.zeta / u,
        moments=tuple(g * u ** (k + 1) for k, g in enumerate(lst.moments)),
        mixture=_scaled_mixture(lst.mixture, u),
        label=f"{lst.label}@x{u:g}" if lst.label else "",
    )
