"""Workload engine for the contracting-multiplier model.

The recursion is W' = [V W + S - A]+ where V is 1 with probability p1, a
fixed contraction a in (0,1) with probability p2, and a negative atom
otherwise.  With rational service/interarrival transforms the stationary
transform vector solves

    (I - p1 F(s)) Phi(s) = p2 F(s) Phi(a s) + v(s),

where F(s) carries the modulation (F[j,i] = P[i,j] B_i(s) A_j(-s)) and v(s)
is a rational vector whose polynomial numerators hold the unknown
coefficients.  Iterating the equation produces the backward series

    Phi(s) = sum_k R(s) R(a s) ... R(a^{k-1} s) V(a^k s),

which this module evaluates in affine form (constant + matrix * unknowns) so
the two families of boundary conditions - left null rows at the zeros of
det(I - p1 F) in the right half-plane, and rows at the service denominator
roots fed through the negative atoms - stay exactly linear in the unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    ConfigError,
    InstabilityError,
    PoleEvaluationError,
    RepeatedZeroError,
    SeriesDivergenceError,
    SingularSystemError,
)
from .polyalg import (
    AffineVector,
    ZeroSet,
    find_zeros_right_halfplane,
    null_vector_left,
    solve_dense,
)
from .probcore import (
    GeneralLst,
    ModulationChain,
    NegativeMultiplierLaw,
    RationalLst,
    lst_eval,
)

STABILITY_SEED = 0xC0FFEE


def _flip_poly(coeffs: np.ndarray) -> np.ndarray:
    """Coefficients of p(-s) from those of p(s)."""
    out = coeffs.astype(float).copy()
    out[1::2] *= -1.0
    return out


@dataclass(frozen=True)
class Model1Spec:
    """Instance data for the contracting-multiplier model."""

    chain: ModulationChain
    service: tuple[RationalLst, ...]
    interarrival: tuple[RationalLst | GeneralLst, ...]
    p1: float
    p2: float
    p3: float
    a: float
    v_negative: NegativeMultiplierLaw | None = None

    def __post_init__(self):
        n = self.chain.n_states
        if len(self.service) != n or len(self.interarrival) != n:
            raise ConfigError("one service and one interarrival law per state required")
        for lst in self.service:
            if not isinstance(lst, RationalLst):
                raise ConfigError("service transforms must be rational")
        if min(self.p1, self.p2, self.p3) < 0:
            raise ConfigError("multiplier probabilities must be nonnegative")
        if abs(self.p1 + self.p2 + self.p3 - 1.0) > 1e-12:
            raise ConfigError("p1 + p2 + p3 must equal 1 within 1e-12")
        if self.p1 + self.p2 >= 1.0:
            raise ConfigError("p1 + p2 must be < 1 (a negative branch is required)")
        if not (0.0 < self.a < 1.0):
            raise ConfigError("contraction factor a must lie in (0, 1)")
        if self.p3 > 0 and self.v_negative is None:
            raise ConfigError("negative multiplier law required when p3 > 0")
        if self.p1 + self.p2 > 0:
            for lst in self.interarrival:
                if not isinstance(lst, RationalLst):
                    raise ConfigError(
                        "interarrival transforms must be rational unless p1 = p2 = 0"
                    )

    @property
    def n_states(self) -> int:
        return self.chain.n_states

    def service_root_pool(self) -> np.ndarray:
        """All service denominator roots pooled across states.

        The boundary system substitutes each root once, so they must be
        simple and distinct across the pool.
        """
        pool: list[complex] = []
        for lst in self.service:
            pool.extend(complex(r) for r in lst.denominator_roots)
        for i, r in enumerate(pool):
            for w in pool[:i]:
                if abs(r - w) < 1e-6 * (1.0 + abs(w)):
                    raise RepeatedZeroError(r, 2)
        return np.array(pool, dtype=complex)


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    p3: float
    probe_frequency: float
    pair_frequencies: np.ndarray
    closed_form: float | None
    detail: str


def check_stability_model1(
    spec: Model1Spec, n_draws: int = 100_000, seed: int = STABILITY_SEED
) -> StabilityReport:
    """Stability verdict with a Monte-Carlo probe of P(S <= A).

    A negative multiplier branch (p3 > 0) keeps the workload from drifting,
    so the verdict is p3 > 0; when every multiplier is negative (p1 = p2 = 0)
    the chain additionally needs some transition along which the increment
    can be negative, which the probe checks pairwise.  When all interarrival
    laws are exponential the probe has the closed form
    sum_ij pi_i P_ij B_i(lambda_j), reported alongside.
    """
    if spec.p3 <= 0.0:
        return StabilityReport(
            False, spec.p3, 0.0, np.zeros((spec.n_states,) * 2), None, "p3 = 0 rejected"
        )
    rng = np.random.default_rng(seed)
    n = spec.n_states
    z = rng.choice(n, size=n_draws, p=spec.chain.stationary)
    z_next = np.empty(n_draws, dtype=np.int64)
    for i in range(n):
        mask = z == i
        z_next[mask] = rng.choice(n, size=int(mask.sum()), p=spec.chain.transition[i])
    s_draw = np.empty(n_draws)
    a_draw = np.empty(n_draws)
    for i in range(n):
        mask = z == i
        s_draw[mask] = _sample_mixture(rng, spec.service[i], int(mask.sum()))
        mask = z_next == i
        a_draw[mask] = _sample_mixture(rng, spec.interarrival[i], int(mask.sum()))
    neg = s_draw <= a_draw
    pair = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            m = (z == i) & (z_next == j)
            pair[i, j] = float(np.mean(neg[m])) if m.any() else 0.0
    freq = float(np.mean(neg))
    closed = None
    if all(
        isinstance(lst, RationalLst) and lst.degree == 1 for lst in spec.interarrival
    ):
        rates = [float(-lst.denominator_roots[0].real) for lst in spec.interarrival]
        closed = float(
            sum(
                spec.chain.stationary[i]
                * spec.chain.transition[i, j]
                * lst_eval(spec.service[i], rates[j]).real
                for i in range(n)
                for j in range(n)
            )
        )
    if spec.p1 + spec.p2 == 0.0 and not np.any(pair > 0):
        return StabilityReport(
            False, spec.p3, freq, pair, closed, "no transition admits S < A"
        )
    return StabilityReport(True, spec.p3, freq, pair, closed, "stable")


def _sample_mixture(rng: np.random.Generator, lst, size: int) -> np.ndarray:
    """Exact sampler for constructor-built transforms (probe use only)."""
    if size == 0:
        return np.empty(0)
    mixture = getattr(lst, "mixture", None)
    if mixture is None:
        raise ConfigError("transform carries no mixture data for sampling")
    weights = np.array([w for w, _, _ in mixture])
    comp = rng.choice(len(mixture), size=size, p=weights / weights.sum())
    out = np.empty(size)
    for k, (_, rate, shape) in enumerate(mixture):
        m = comp == k
        if not m.any():
            continue
        if shape == 0:
            out[m] = rate  # point mass; field holds the value
        else:
            out[m] = rng.gamma(shape, 1.0 / rate, size=int(m.sum()))
    return out


# ---------------------------------------------------------------------------
# transform machinery


def build_H1(spec: Model1Spec):
    """Vectorised kernel H[i,j](s) = B_i(s) * A_j(-s), shape (m, N, N)."""
    n = spec.n_states

    def H(s: np.ndarray) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        b = np.stack(
            [
                npoly.polyval(s, lst.numerator) / npoly.polyval(s, lst.denominator)
                for lst in spec.service
            ],
            axis=1,
        )
        a = np.stack(
            [
                npoly.polyval(-s, lst.numerator) / npoly.polyval(-s, lst.denominator)
                for lst in spec.interarrival
            ],
            axis=1,
        )
        return b[:, :, None] * a[:, None, :]

    return H


class _Series:
    """Backward-series evaluator carrying the unknown coefficients affinely.

    Unknowns are the polynomial coefficients c[j, w] for w = 1..K_j flattened
    state-major; the constant coefficients c[j, 0] are known up front.
    """

    def __init__(self, spec: Model1Spec):
        self.spec = spec
        n = spec.n_states
        self.n = n
        sum_m = sum(lst.degree for lst in spec.service)
        self.degrees = [lst.degree + sum_m for lst in spec.interarrival]
        self.offsets = np.concatenate([[0], np.cumsum(self.degrees)]).astype(int)
        self.n_unknowns = int(self.offsets[-1])
        prod_db = np.array([1.0])
        for lst in spec.service:
            prod_db = npoly.polymul(prod_db, lst.denominator)
        self.prod_db = prod_db
        self.dens = [
            npoly.polymul(_flip_poly(lst.denominator), prod_db)
            for lst in spec.interarrival
        ]
        pi = spec.chain.stationary
        self.c0 = np.array(
            [
                pi[j]
                * spec.p3
                * npoly.polyval(0.0, spec.interarrival[j].denominator)
                * npoly.polyval(0.0, prod_db)
                for j in range(n)
            ]
        )
        # poles of v in the right half-plane: reflected interarrival roots
        self.v_poles = np.array(
            [-r for lst in spec.interarrival for r in np.atleast_1d(lst.denominator_roots)],
            dtype=complex,
        )
        self.H = build_H1(spec)
        self.P = spec.chain.transition

    def F(self, s: complex) -> np.ndarray:
        h = self.H(np.array([s]))[0]
        return (self.P * h).T

    def _pole_guard(self, s: complex) -> None:
        if self.v_poles.size:
            dist = np.abs(self.v_poles - s)
            k = int(np.argmin(dist))
            if dist[k] < 1e-6 * (1.0 + abs(self.v_poles[k])):
                raise PoleEvaluationError(s, complex(self.v_poles[k]))

    def v_affine(self, s: complex) -> AffineVector:
        self._pole_guard(s)
        den = np.array([npoly.polyval(s, d) for d in self.dens])
        const = self.c0 / den
        coeffs = np.zeros((self.n, self.n_unknowns), dtype=complex)
        for j in range(self.n):
            for w in range(1, self.degrees[j] + 1):
                coeffs[j, self.offsets[j] + w - 1] = s**w / den[j]
        return AffineVector(const, coeffs)

    def operators_at(self, s: complex) -> tuple[np.ndarray, AffineVector]:
        """(R(s), V(s)); raises if s sits on the determinant zero set."""
        self._pole_guard(s)
        A = np.eye(self.n, dtype=complex) - self.spec.p1 * self.F(s)
        det = np.linalg.det(A)
        scale = max(1.0, float(np.max(np.abs(A))) ** self.n)
        if abs(det) < 1e-10 * scale:
            raise PoleEvaluationError(s, s)
        Ainv = np.linalg.inv(A)
        v = self.v_affine(s)
        return self.spec.p2 * (Ainv @ self.F(s)), v.apply(Ainv)

    def phi_affine(
        self, s: complex, tol: float = 1e-7, max_terms: int = 10_000, _depth: int = 0
    ) -> AffineVector:
        """Phi(s) = sum_k prod_{m<k} R(a^m s) V(a^k s) as an affine form.

        Truncates when two consecutive terms differ by less than tol in
        max norm (constant and coefficient blocks both).  When some a^k s
        lands on a pole of v or a determinant zero, the singularity of the
        full series is removable, so the value is recovered as the average
        over two small complex detours s (1 +/- i h): the odd singular parts
        cancel there, leaving an O(h^2) error.
        """
        a = self.spec.a
        try:
            R0, term = self.operators_at(s)
            total = term
            prod = R0
            prev = term
            for k in range(1, max_terms):
                Rk, Vk = self.operators_at(s * a**k)
                term = Vk.apply(prod)
                total = total + term
                if (term - prev).norm_inf() <= tol:
                    return total
                prod = prod @ Rk
                prev = term
        except PoleEvaluationError:
            if _depth >= 2 or s == 0:
                raise
            h = 1e-5
            up = self.phi_affine(
                s * (1 + 1j * h), tol=tol, max_terms=max_terms, _depth=_depth + 1
            )
            dn = self.phi_affine(
                s * (1 - 1j * h), tol=tol, max_terms=max_terms, _depth=_depth + 1
            )
            return 0.5 * (up + dn)
        raise SeriesDivergenceError(max_terms, prev.norm_inf())


def build_series_operators(spec: Model1Spec):
    """The pair (R, V) of series operators; V is affine in the unknowns."""
    series = _Series(spec)
    return (
        lambda s: series.operators_at(s)[0],
        lambda s: series.operators_at(s)[1],
    )


def evaluate_phi_series(
    spec: Model1Spec,
    s: complex,
    coefficients: np.ndarray | None = None,
    tol: float = 1e-7,
    max_terms: int = 10_000,
) -> AffineVector | np.ndarray:
    """Series evaluation of the transform vector at one point.

    With ``coefficients`` the affine form is collapsed to a plain vector.
    """
    av = _Series(spec).phi_affine(s, tol=tol, max_terms=max_terms)
    if coefficients is None:
        return av
    return av.evaluate(coefficients)


def default_search_bound(spec: Model1Spec) -> float:
    mags = [1.0]
    for lst in list(spec.service) + [
        l for l in spec.interarrival if isinstance(l, RationalLst)
    ]:
        mags.extend(abs(r) for r in np.atleast_1d(lst.denominator_roots))
    return 10.0 * max(mags) + 10.0


def find_delta_roots(spec: Model1Spec, search_bound: float | None = None) -> ZeroSet:
    """Zeros of det(I - p1 F(s)) in Re(s) > 0 - exactly sum_j deg(D_A_j).

    det(I - p1 F) itself has poles at the reflected interarrival roots, so
    the winding is taken on the pole-cleared analytic function
    det(I - p1 F(s)) * prod_j D_A_j(-s), whose zeros in the open right
    half-plane are exactly the wanted roots.
    """
    n = spec.n_states
    expected = sum(lst.degree for lst in spec.interarrival)
    if expected == 0:
        return ZeroSet(np.array([], dtype=complex), None, 0, ())
    if search_bound is None:
        search_bound = default_search_bound(spec)
    P = spec.chain.transition
    da_flips = [_flip_poly(lst.denominator) for lst in spec.interarrival]
    na_flips = [_flip_poly(np.asarray(lst.numerator)) for lst in spec.interarrival]

    def K(s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        da = np.stack([npoly.polyval(s, d) for d in da_flips], axis=1)  # (m, N)
        na = np.stack([npoly.polyval(s, d) for d in na_flips], axis=1)
        nb_over_db = np.stack(
            [
                npoly.polyval(s, lst.numerator) / npoly.polyval(s, lst.denominator)
                for lst in spec.service
            ],
            axis=1,
        )
        m = s.shape[0]
        mat = np.zeros((m, n, n), dtype=complex)
        idx = np.arange(n)
        mat[:, idx, idx] = da
        mat -= spec.p1 * np.einsum("mj,mi,ij->mji", na, nb_over_db, P)
        return np.linalg.det(mat)

    return find_zeros_right_halfplane(K, expected, search_bound)


@dataclass(frozen=True)
class Model1Solution:
    """Solved coefficient sets plus evaluators for the transform vector."""

    spec: Model1Spec
    mode: str  # "general" or "special"
    c0: np.ndarray
    coefficients: np.ndarray
    delta_roots: np.ndarray
    t_roots: np.ndarray
    cond: float
    max_imag: float
    residual_max: float
    warnings: tuple[str, ...] = ()

    def coefficient_polys(self) -> list[np.ndarray]:
        """Per-state numerator polynomials [c0_j, c1_j, ...] (ascending)."""
        series = _coeff_layout(self.spec, self.mode)
        out = []
        for j in range(self.spec.n_states):
            lo, hi = series[j]
            out.append(np.concatenate([[self.c0[j]], self.coefficients[lo:hi]]))
        return out

    def evaluate(self, s: complex, tol: float = 1e-9) -> np.ndarray:
        """Transform vector at s (componentwise E[e^{-sW}; Z=j])."""
        if self.mode == "special":
            polys = self.coefficient_polys()
            q = np.array([1.0])
            for lst in self.spec.service:
                q = npoly.polymul(q, lst.denominator)
            qs = npoly.polyval(complex(s), q)
            return np.array([npoly.polyval(complex(s), p) for p in polys]) / qs
        av = _Series(self.spec).phi_affine(complex(s), tol=tol)
        return av.evaluate(self.coefficients)

    def evaluate_grid(self, points: Sequence[complex], tol: float = 1e-9) -> np.ndarray:
        return np.stack([self.evaluate(s, tol=tol) for s in points], axis=0)


def _coeff_layout(spec: Model1Spec, mode: str) -> list[tuple[int, int]]:
    sum_m = sum(lst.degree for lst in spec.service)
    if mode == "special":
        degs = [sum_m] * spec.n_states
    else:
        degs = [lst.degree + sum_m for lst in spec.interarrival]
    offs = np.concatenate([[0], np.cumsum(degs)]).astype(int)
    return [(int(offs[j]), int(offs[j + 1])) for j in range(spec.n_states)]


def assemble_and_solve_coefficients(
    spec: Model1Spec,
    delta_roots: ZeroSet | None = None,
    assembly_tol: float = 1e-9,
    residual_tol: float = 1e-6,
) -> Model1Solution:
    """Build and solve the square linear system for the unknown coefficients.

    Rows: one left-null-vector row per determinant zero delta (the series is
    evaluated at a*delta in affine form), and one row per (service root t,
    state j) pair feeding the negative atoms through the series at t*y.

    Raises:
        SingularSystemError: ill-conditioned or inconsistent system.
        RootCountError / RepeatedZeroError: propagated from root finding.
    """
    stab = check_stability_model1(spec)
    if not stab.stable:
        raise InstabilityError(stab.detail)
    n = spec.n_states
    series = _Series(spec)
    t_roots = spec.service_root_pool()
    if delta_roots is None:
        delta_roots = find_delta_roots(spec)
    K = series.n_unknowns
    rows = np.zeros((K, K), dtype=complex)
    rhs = np.zeros(K, dtype=complex)
    r = 0

    # boundary rows at the zeros of the pole-cleared determinant.  For p1 > 0
    # these are zeros of det(I - p1 F) and contribute left-null-vector rows;
    # at p1 = 0 the counted zeros are the reflected interarrival roots, where
    # the condition is instead analyticity of the transform (the numerator of
    # the solved equation must vanish there).
    layout = _coeff_layout(spec, "general")
    for delta in delta_roots.zeros:
        d = complex(delta)
        da_at = np.array(
            [npoly.polyval(-d, lst.denominator) for lst in spec.interarrival]
        )
        da_scale = np.array(
            [
                max(1.0, abs(d)) ** lst.degree * max(np.max(np.abs(lst.denominator)), 1.0)
                for lst in spec.interarrival
            ]
        )
        owners = np.nonzero(np.abs(da_at) < 1e-8 * da_scale)[0]
        if owners.size == 0:
            # genuine determinant zero: left null row
            A = np.eye(n, dtype=complex) - spec.p1 * series.F(d)
            zeta = null_vector_left(A)
            phi_a = series.phi_affine(spec.a * d, tol=assembly_tol)
            v_d = series.v_affine(d)
            lead = spec.p2 * (zeta @ series.F(d))
            rows[r] = lead @ phi_a.coeffs + zeta @ v_d.coeffs
            rhs[r] = -(lead @ phi_a.const + zeta @ v_d.const)
            r += 1
            continue
        if spec.p1 != 0.0 or owners.size > 1:
            # a det zero colliding with a reflected interarrival root cannot
            # be separated numerically; report rather than deform
            raise PoleEvaluationError(d, d)
        j = int(owners[0])
        phi_a = series.phi_affine(spec.a * d, tol=assembly_tol)
        na_j = npoly.polyval(-d, np.asarray(spec.interarrival[j].numerator))
        nb = np.array([npoly.polyval(d, lst.numerator) for lst in spec.service])
        db = np.array([npoly.polyval(d, lst.denominator) for lst in spec.service])
        g = np.array(
            [
                spec.chain.transition[i, j] * nb[i] * np.prod(np.delete(db, i))
                for i in range(n)
            ]
        )
        row = spec.p2 * na_j * (g @ phi_a.coeffs)
        lo, hi = layout[j]
        for w in range(1, hi - lo + 1):
            row[lo + w - 1] += d**w
        rows[r] = row
        rhs[r] = -series.c0[j] - spec.p2 * na_j * (g @ phi_a.const)
        r += 1

    # service-root rows through the negative atoms
    law = spec.v_negative
    assert law is not None
    atom_vals = law.values
    atom_wts = law.weights
    for t in t_roots:
        # affine series at t*y for each atom, shared across target states
        phis = [
            series.phi_affine(complex(t) * float(y), tol=assembly_tol)
            for y in atom_vals
        ]
        mixed_const = sum(w * p.const for w, p in zip(atom_wts, phis))
        mixed_coeffs = sum(w * p.coeffs for w, p in zip(atom_wts, phis))
        nb = np.array([npoly.polyval(t, lst.numerator) for lst in spec.service])
        db = np.array([npoly.polyval(t, lst.denominator) for lst in spec.service])
        prod_db_t = np.prod(db)
        for j in range(n):
            na_j = npoly.polyval(-t, np.asarray(spec.interarrival[j].numerator))
            g = np.empty(n, dtype=complex)
            for i in range(n):
                # prod over nu != i of D_B_nu(t); t is a root of exactly one
                others = np.prod(np.delete(db, i))
                g[i] = spec.chain.transition[i, j] * nb[i] * na_j * others
            row = spec.p3 * (g @ mixed_coeffs)
            lo, hi = layout[j]
            for w in range(1, hi - lo + 1):
                row[lo + w - 1] -= t**w
            rows[r] = row
            rhs[r] = series.c0[j] - spec.p3 * (g @ mixed_const)
            r += 1

    assert r == K, f"assembled {r} rows for {K} unknowns"
    sol, cond = solve_dense(rows, rhs)
    max_imag = float(np.max(np.abs(sol.imag))) if K else 0.0
    scale = float(np.max(np.abs(sol))) if K else 1.0
    if max_imag > 1e-6 * (1.0 + scale):
        raise SingularSystemError(
            f"coefficients came out non-real (max imag {max_imag:.3e})", cond
        )
    coeffs = sol.real

    solution = Model1Solution(
        spec=spec,
        mode="general",
        c0=series.c0,
        coefficients=coeffs,
        delta_roots=delta_roots.zeros,
        t_roots=t_roots,
        cond=cond,
        max_imag=max_imag,
        residual_max=np.nan,
    )
    resid = residual_grid_max(solution)
    if resid > residual_tol:
        raise SingularSystemError(
            f"balance residual {resid:.3e} exceeds {residual_tol:.1e} on the grid", cond
        )
    object.__setattr__(solution, "residual_max", resid)
    phi0 = np.real(solution.evaluate(0.0, tol=1e-10))
    if np.max(np.abs(phi0 - spec.chain.stationary)) > 1e-8:
        raise SingularSystemError("normalisation check failed at s = 0", cond)
    return solution


def verification_grid() -> np.ndarray:
    re = np.linspace(0.1, 5.0, 5)
    im = np.linspace(-2.0, 2.0, 4)
    return (re[:, None] + 1j * im[None, :]).ravel()


def residual_grid_max(solution: Model1Solution, tol: float = 1e-9) -> float:
    """Max balance-equation residual over the 20-point verification grid.

    Grid points that collide with a transform pole or a determinant zero are
    nudged by 1e-4 before evaluation.
    """
    spec = solution.spec
    series = _Series(spec)
    c = solution.coefficients
    worst = 0.0
    for s in verification_grid():
        for attempt in range(4):
            try:
                phi_s = series.phi_affine(s, tol=tol).evaluate(c)
                phi_as = series.phi_affine(spec.a * s, tol=tol).evaluate(c)
                v_s = series.v_affine(s).evaluate(c)
                F_s = series.F(s)
                resid = phi_s - spec.p1 * (F_s @ phi_s) - spec.p2 * (F_s @ phi_as) - v_s
                worst = max(worst, float(np.max(np.abs(resid))))
                break
            except (PoleEvaluationError, SingularSystemError, ZeroDivisionError):
                s = s + 1e-4  # pole collision: nudge and retry
        else:
            raise PoleEvaluationError(s, s)
    return worst


def mean_workload(solution: Model1Solution, check_tol: float = 1e-4) -> np.ndarray:
    """State-wise stationary means E[W; Z=j] from the transform derivative.

    Cross-checked against a central difference of the evaluator (step 1e-5,
    relative tolerance 1e-4).
    """
    spec = solution.spec
    n = spec.n_states
    pi = spec.chain.stationary
    if solution.mode == "special":
        q = np.array([1.0])
        for lst in spec.service:
            q = npoly.polymul(q, lst.denominator)
        q0 = npoly.polyval(0.0, q)
        dq0 = npoly.polyval(0.0, npoly.polyder(q))
        m = np.empty(n)
        for j, poly in enumerate(solution.coefficient_polys()):
            p0 = npoly.polyval(0.0, poly)
            dp0 = npoly.polyval(0.0, npoly.polyder(poly))
            m[j] = -(dp0 * q0 - p0 * dq0) / q0**2
    else:
        series = _Series(spec)
        # H'(0)[i,j] = -E[S_i] + E[A_j]
        es = np.array([lst.taylor_moments(1)[1] for lst in spec.service])
        ea = np.array([lst.taylor_moments(1)[1] for lst in spec.interarrival])
        hprime = -es[:, None] + ea[None, :]
        fprime = (spec.chain.transition * hprime).T
        vprime = np.empty(n)
        polys = solution.coefficient_polys()
        for j in range(n):
            den = series.dens[j]
            d0 = npoly.polyval(0.0, den)
            dd0 = npoly.polyval(0.0, npoly.polyder(den))
            p0 = npoly.polyval(0.0, polys[j])
            dp0 = npoly.polyval(0.0, npoly.polyder(polys[j]))
            vprime[j] = (dp0 * d0 - p0 * dd0) / d0**2
        lhs = (spec.p1 + spec.a * spec.p2) * spec.chain.transition.T - np.eye(n)
        rhs = (spec.p1 + spec.p2) * (fprime @ pi) + vprime
        m = np.linalg.solve(lhs, rhs)
    if np.any(m < -1e-10):
        raise SingularSystemError(f"negative mean component in {m}", 0.0)
    m = np.clip(m, 0.0, None)
    # independent check through the evaluator
    h = 1e-5
    numeric = (
        np.real(solution.evaluate(-h, tol=1e-10))
        - np.real(solution.evaluate(h, tol=1e-10))
    ) / (2.0 * h)
    err = np.max(np.abs(numeric - m) / (1.0 + np.abs(m)))
    if err > check_tol:
        raise SingularSystemError(
            f"mean cross-check failed: analytic {m}, numeric {numeric}", 0.0
        )
    return m


def solve_model1(spec: Model1Spec, assembly_tol: float = 1e-9) -> Model1Solution:
    """Stability check, root location, assembly, and verification in one go.

    Dispatches to the rational shortcut when the multiplier is negative
    almost surely (p1 = p2 = 0); the series machinery is not needed there.
    """
    if spec.p1 == 0.0 and spec.p2 == 0.0:
        return solve_model1_special(spec)
    return assemble_and_solve_coefficients(spec, assembly_tol=assembly_tol)


def solve_model1_special(spec: Model1Spec) -> Model1Solution:
    """Pure-negative-multiplier case: V < 0 almost surely (p1 = p2 = 0).

    The transform vector is rational outright,
    Phi_j(s) = (c0_j + sum_w c_wj s^w) / prod_k D_B_k(s), and the unknown
    coefficients solve the square system obtained at the pooled service
    roots.  The interarrival transforms only enter pointwise, so they may be
    any evaluable law.
    """
    if spec.p1 != 0.0 or spec.p2 != 0.0:
        raise ConfigError("special path requires p1 = p2 = 0")
    stab = check_stability_model1(spec)
    if not stab.stable:
        raise InstabilityError(stab.detail)
    n = spec.n_states
    law = spec.v_negative
    assert law is not None
    t_roots = spec.service_root_pool()
    sum_m = len(t_roots)
    pi = spec.chain.stationary
    q = np.array([1.0])
    for lst in spec.service:
        q = npoly.polymul(q, lst.denominator)
    c0 = pi * npoly.polyval(0.0, q)
    K = n * sum_m
    layout = _coeff_layout(spec, "special")
    rows = np.zeros((K, K), dtype=complex)
    rhs = np.zeros(K, dtype=complex)
    r = 0
    for t in t_roots:
        nb = np.array([npoly.polyval(t, lst.numerator) for lst in spec.service])
        db = np.array([npoly.polyval(t, lst.denominator) for lst in spec.service])
        # inner integral: for each source state i, sum_y w_y Phi_i(t y) with
        # Phi_i given by the rational ansatz evaluated at t*y
        q_ty = np.array([npoly.polyval(complex(t) * float(y), q) for y in law.values])
        inner_const = np.array(
            [np.sum(law.weights * c0[i] / q_ty) for i in range(n)], dtype=complex
        )
        inner_coeffs = np.zeros((n, K), dtype=complex)
        for i in range(n):
            lo, hi = layout[i]
            for w in range(1, sum_m + 1):
                inner_coeffs[i, lo + w - 1] = np.sum(
                    law.weights * (complex(t) * law.values) ** w / q_ty
                )
        for j in range(n):
            phi_a_j = lst_eval(spec.interarrival[j], -t)
            g = np.empty(n, dtype=complex)
            for i in range(n):
                others = np.prod(np.delete(db, i))
                g[i] = spec.chain.transition[i, j] * nb[i] * others
            row = phi_a_j * (g @ inner_coeffs)
            lo, hi = layout[j]
            for w in range(1, sum_m + 1):
                row[lo + w - 1] -= t**w
            rows[r] = row
            rhs[r] = c0[j] - phi_a_j * (g @ inner_const)
            r += 1
    sol, cond = solve_dense(rows, rhs)
    max_imag = float(np.max(np.abs(sol.imag))) if K else 0.0
    scale = float(np.max(np.abs(sol))) if K else 1.0
    if max_imag > 1e-6 * (1.0 + scale):
        raise SingularSystemError(
            f"coefficients came out non-real (max imag {max_imag:.3e})", cond
        )
    solution = Model1Solution(
        spec=spec,
        mode="special",
        c0=c0,
        coefficients=sol.real,
        delta_roots=np.array([], dtype=complex),
        t_roots=t_roots,
        cond=cond,
        max_imag=max_imag,
        residual_max=0.0,
    )
    phi0 = solution.evaluate(0.0)
    if np.max(np.abs(phi0 - pi)) > 1e-10:
        raise SingularSystemError("normalisation check failed at s = 0", cond)
    return solution
