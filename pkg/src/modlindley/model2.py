"""Workload engine for the sign-flipping two-branch model.

The recursion is W' = [W + B - A]+ with probability p and
W' = [D - C - W]+ with probability q = 1 - p, modulated by a background
chain: the jump laws B (service) and C (alternate service) follow the
current state, while the exponential gaps A ~ exp(lambda_j) and
D ~ exp(mu_j) follow the next state.  The stationary transform row vector
Phi(s) = (E[e^{-sW}; Z=j])_j satisfies

    Phi(s) G(s) = v(s),      G(s) = p B*(s) P Lam + s I - Lam,

with v(s) = (s k1 + s^2 k2 - q pi Lam M)(M + sI)^{-1} determined by the
2 N^2 transform values at the rates, x[i,j] = Phi_i(lambda_j) and
y[i,l] = Phi_i(mu_l).  Substituting s = mu_l and s = lambda_k (k != j) into
the balance equation and demanding analyticity of Phi at the N zeros of
det G in the right half-plane closes a square linear system.  The pure
branches p = 0 and p = 1 degenerate and get dedicated reductions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    ConfigError,
    InstabilityError,
    PoleEvaluationError,
    RepeatedZeroError,
    RootCountError,
    SingularSystemError,
)
from .polyalg import (
    MatrixFunction,
    RectContour,
    ZeroSet,
    count_zeros,
    find_zeros_right_halfplane,
    null_vector_right,
    solve_dense,
)
from .probcore import (
    GeneralLst,
    ModulationChain,
    RationalLst,
    lst_eval,
    lst_one_minus,
    raw_moments,
)

_ADJUGATE_GUARD = 8


def _margin(lst: RationalLst | GeneralLst) -> float:
    """Analyticity margin: the transform is analytic on Re(s) > -margin."""
    if isinstance(lst, GeneralLst):
        return float(lst.zeta)
    if lst.degree == 0:
        return math.inf
    return float(-np.max(lst.denominator_roots.real))


@dataclass(frozen=True)
class Model2Spec:
    """Instance data for the sign-flipping model.

    arrival_rate[j] is the exponential rate of A given the next state is j;
    gap_rate[j] the rate of D likewise.  service[i] / service_alt[i] are the
    transforms of B and C given the current state is i.  Rates that collide
    (lambda_j = lambda_k or lambda_j = mu_l) would put removable 0/0 factors
    into the boundary system, so they are nudged apart by one part in 1e5 and
    the nudge is recorded in ``warnings``.
    """

    chain: ModulationChain
    arrival_rate: tuple[float, ...]
    gap_rate: tuple[float, ...]
    service: tuple[RationalLst | GeneralLst, ...]
    service_alt: tuple[RationalLst | GeneralLst, ...]
    p: float
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        n = self.chain.n_states
        lam = np.asarray(self.arrival_rate, dtype=float)
        mu = np.asarray(self.gap_rate, dtype=float)
        if lam.shape != (n,) or mu.shape != (n,):
            raise ConfigError("one arrival and one gap rate per state required")
        if np.any(lam <= 0) or np.any(mu <= 0):
            raise ConfigError("rates must be positive")
        if len(self.service) != n or len(self.service_alt) != n:
            raise ConfigError("one service and one alternate law per state required")
        if not (0.0 <= self.p <= 1.0):
            raise ConfigError("branch probability p must lie in [0, 1]")
        notes = list(self.warnings)
        if self.p > 0.0:
            lam, bumped = _separate(lam, np.array([]), "arrival rates")
            notes.extend(bumped)
        if 0.0 < self.p < 1.0:
            lam, bumped = _separate(lam, mu, "arrival/gap rates")
            notes.extend(bumped)
        object.__setattr__(self, "arrival_rate", tuple(float(v) for v in lam))
        object.__setattr__(self, "gap_rate", tuple(float(v) for v in mu))
        object.__setattr__(self, "warnings", tuple(notes))

    @property
    def n_states(self) -> int:
        return self.chain.n_states

    @property
    def q(self) -> float:
        return 1.0 - self.p


_NUDGE_REL = 1e-5


def _separate(values: np.ndarray, others: np.ndarray, what: str):
    """Nudge entries of ``values`` apart from each other and from ``others``.

    Exactly coincident rates put removable 0/0 factors into the boundary
    rows; a relative shift of 1e-5 keeps the system well conditioned while
    perturbing the solution by the same (negligible) order.
    """
    out = values.copy()
    notes = []
    for idx in range(out.size):
        for _ in range(5):
            rest = np.concatenate([np.delete(out, idx), others])
            if rest.size == 0 or np.min(np.abs(rest - out[idx])) > _NUDGE_REL * out[idx]:
                break
            out[idx] *= 1.0 + _NUDGE_REL
        else:
            raise ConfigError(f"{what} could not be separated near {out[idx]}")
        if out[idx] != values[idx]:
            notes.append(
                f"{what}: rate {values[idx]:.12g} nudged to {out[idx]:.12g} "
                "to avoid a coincident-rate degeneracy"
            )
    return out, notes


@dataclass(frozen=True)
class StabilityReport2:
    stable: bool
    p: float
    load_plus: float
    detail: str


def check_stability_model2(spec: Model2Spec) -> StabilityReport2:
    """Any positive reset probability stabilises the chain; the pure additive
    branch (p = 1) needs its usual load condition."""
    pi = spec.chain.stationary
    lam = np.asarray(spec.arrival_rate)
    mean_b = np.array([raw_moments(lst, 1)[0] for lst in spec.service])
    load = float(np.sum(pi * mean_b) / np.sum(pi / lam))
    if spec.p < 1.0:
        return StabilityReport2(True, spec.p, load, "reset branch active")
    if load < 1.0:
        return StabilityReport2(True, spec.p, load, "additive branch subcritical")
    return StabilityReport2(False, spec.p, load, f"load {load:.6g} >= 1")


def build_G(spec: Model2Spec) -> MatrixFunction:
    """G(s) = p B*(s) P Lam + s I - Lam as a batched matrix function.

    Evaluated as -p (1 - B*(s)) P Lam + (p P Lam - Lam) + s I: near s = 0
    with p = 1 the direct form subtracts nearly equal matrices and the lost
    digits end up amplified in anything built on the solve there, while the
    1 - B*(s) factors come out cancellation-free at the coefficient level.
    """
    n = spec.n_states
    P = spec.chain.transition
    lam = np.asarray(spec.arrival_rate)
    PL = P * lam[None, :]
    base = spec.p * PL - np.diag(lam)
    eye = np.eye(n)
    zeta = min(_margin(lst) for lst in spec.service)

    def fn(s: np.ndarray) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        out = np.empty((s.size, n, n), dtype=complex)
        if spec.p > 0.0:
            omb = np.stack([lst_one_minus(lst, s) for lst in spec.service], axis=1)
            out[:] = -spec.p * omb[:, :, None] * PL[None, :, :]
        else:
            out[:] = 0.0
        out += base[None, :, :]
        out += s[:, None, None] * eye[None, :, :]
        return out

    return MatrixFunction(fn=fn, size=n, zeta=zeta, label="balance kernel")


def default_search_bound2(spec: Model2Spec) -> float:
    return 4.0 * float(np.max(spec.arrival_rate)) + 10.0


def find_si_roots(
    spec: Model2Spec, search_bound: float | None = None
) -> tuple[ZeroSet, list[np.ndarray]]:
    """Zeros of det G in Re(s) > 0 with right null vectors of G there.

    There are N such zeros for p < 1 and N - 1 for p = 1 (one more sits at
    the origin).  The zeros must be simple and pairwise distinct.
    """
    n = spec.n_states
    if search_bound is None:
        search_bound = default_search_bound2(spec)
    G = build_G(spec)
    expected = n - 1 if spec.p == 1.0 else n
    if expected == 0:
        return ZeroSet(np.array([], dtype=complex), None, 0, ()), []
    inset = 1e-5 if spec.p == 1.0 else 1e-9
    zs = find_zeros_right_halfplane(G.det, expected, search_bound, inset=inset)
    for i, r in enumerate(zs.zeros):
        for w in zs.zeros[:i]:
            if abs(r - w) < 1e-6 * (1.0 + abs(w)):
                raise RepeatedZeroError(complex(r), 2)
    vecs = [null_vector_right(G(np.array([r]))[0]) for r in zs.zeros]
    return zs, vecs


@dataclass(frozen=True)
class Model2Solution:
    """Solved boundary unknowns plus evaluators for the transform vector."""

    spec: Model2Spec
    mode: str  # "general", "plus_only" (p = 1) or "minus_only" (p = 0)
    x: np.ndarray  # x[i, j] = Phi_i(lambda_j)
    y: np.ndarray  # y[i, l] = Phi_i(mu_l)
    v1: np.ndarray
    v_neg: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    si_roots: np.ndarray
    cond: float
    max_imag: float
    residual_max: float
    mismatch_max: float
    warnings: tuple[str, ...] = ()

    def evaluate(self, s: complex) -> np.ndarray:
        return evaluate_phi2(self, s)

    def evaluate_grid(self, points: Sequence[complex]) -> np.ndarray:
        return np.stack([evaluate_phi2(self, s) for s in points], axis=0)


def _v_row(spec: Model2Spec, k1: np.ndarray, k2: np.ndarray, s: complex) -> np.ndarray:
    pi = spec.chain.stationary
    lam = np.asarray(spec.arrival_rate)
    mu = np.asarray(spec.gap_rate)
    return (s * k1 + s * s * k2 - spec.q * pi * lam * mu) / (mu + s)


def _beta_at(spec: Model2Spec, rates: np.ndarray) -> np.ndarray:
    """Matrix [i, j] = B*_i(rates[j])."""
    return np.array([[complex(lst_eval(lst, r)).real for r in rates] for lst in spec.service])


def _calt_at_mu(spec: Model2Spec) -> np.ndarray:
    """Matrix [i, j] = C*_i(mu_j)."""
    mu = np.asarray(spec.gap_rate)
    return np.array(
        [[complex(lst_eval(lst, m)).real for m in mu] for lst in spec.service_alt]
    )


def assemble_unknowns(
    spec: Model2Spec, roots: tuple[ZeroSet, list[np.ndarray]] | None = None
) -> Model2Solution:
    """Build and solve the 2 N^2 boundary system for 0 < p < 1.

    Unknown order: x[i, j] (state-major), then y[i, l].  Rows: the balance
    equation at each s = mu_l for every target state j (N^2), at each
    s = lambda_k with k != j (N(N-1)), and the analyticity conditions
    v(s_i) a_i = 0 at the determinant zeros (N).
    """
    if not (0.0 < spec.p < 1.0):
        raise ConfigError("assemble_unknowns requires 0 < p < 1")
    n = spec.n_states
    p, q = spec.p, spec.q
    P = spec.chain.transition
    pi = spec.chain.stationary
    lam = np.asarray(spec.arrival_rate)
    mu = np.asarray(spec.gap_rate)
    if roots is None:
        roots = find_si_roots(spec)
    zs, avecs = roots
    b_lam = _beta_at(spec, lam)  # B*_i(lambda_j)
    b_mu = _beta_at(spec, mu)  # B*_i(mu_l)
    c_mu = _calt_at_mu(spec)  # C*_i(mu_j)

    K = 2 * n * n
    rows = np.zeros((K, K), dtype=complex)
    rhs = np.zeros(K, dtype=complex)

    def ix(i, j):
        return i * n + j

    def iy(i, l):
        return n * n + i * n + l

    r = 0
    # balance equation at s = mu_l, target state j
    for j in range(n):
        for l in range(n):
            row = rows[r]
            row[iy(j, l)] += 1.0
            d = lam[j] - mu[l]
            for i in range(n):
                row[iy(i, l)] -= p * lam[j] * P[i, j] * b_mu[i, l] / d
                row[ix(i, j)] += p * mu[l] * P[i, j] * b_lam[i, j] / d
                row[iy(i, j)] += q * mu[l] * P[i, j] * c_mu[i, j] / (mu[j] + mu[l])
            rhs[r] = q * pi[j]
            r += 1
    # balance equation at s = lambda_k, target state j != k
    for j in range(n):
        for k in range(n):
            if k == j:
                continue
            row = rows[r]
            row[ix(j, k)] += 1.0
            d = lam[j] - lam[k]
            for i in range(n):
                row[ix(i, k)] -= p * lam[j] * P[i, j] * b_lam[i, k] / d
                row[ix(i, j)] += p * lam[k] * P[i, j] * b_lam[i, j] / d
                row[iy(i, j)] += q * lam[k] * P[i, j] * c_mu[i, j] / (mu[j] + lam[k])
            rhs[r] = q * pi[j]
            r += 1
    # analyticity at the determinant zeros: v(s_i) a_i = 0
    for root, avec in zip(zs.zeros, avecs):
        s = complex(root)
        row = rows[r]
        for j in range(n):
            w = avec[j]
            for i in range(n):
                row[ix(i, j)] += w * s * p * P[i, j] * b_lam[i, j]
                row[iy(i, j)] += (
                    w * q * s * (lam[j] - s) * P[i, j] * c_mu[i, j] / (mu[j] + s)
                )
            rhs[r] += w * q * pi[j] * (lam[j] - s)
        r += 1
    assert r == K

    sol, cond = solve_dense(rows, rhs)
    if cond > 1e10:
        raise SingularSystemError("boundary system is too ill-conditioned", cond)
    max_imag = float(np.max(np.abs(sol.imag)))
    if max_imag > 1e-6 * (1.0 + float(np.max(np.abs(sol)))):
        raise SingularSystemError(
            f"boundary unknowns came out non-real (max imag {max_imag:.3e})", cond
        )
    vals = sol.real
    x = vals[: n * n].reshape(n, n)
    y = vals[n * n :].reshape(n, n)
    # transform values at positive rates must lie in (0, pi_i]
    for name, arr in (("arrival", x), ("gap", y)):
        if np.any(arr <= 0.0) or np.any(arr > pi[:, None] + 1e-8):
            raise SingularSystemError(
                f"transform values at the {name} rates fall outside (0, pi_i]", cond
            )
    v1 = p * np.array([np.sum(P[:, j] * b_lam[:, j] * x[:, j]) for j in range(n)])
    v_neg = q * (pi - np.array([np.sum(P[:, j] * c_mu[:, j] * y[:, j]) for j in range(n)]))
    k1 = q * pi * mu + mu * v1 - lam * v_neg
    k2 = v1 + v_neg
    solution = Model2Solution(
        spec=spec,
        mode="general",
        x=x,
        y=y,
        v1=v1,
        v_neg=v_neg,
        k1=k1,
        k2=k2,
        si_roots=zs.zeros,
        cond=cond,
        max_imag=max_imag,
        residual_max=np.nan,
        mismatch_max=np.nan,
        warnings=spec.warnings,
    )
    return _verified(solution)


def _solve_minus_only(spec: Model2Spec) -> Model2Solution:
    """p = 0: W' = [D - C - W]+ always; the transform is rational outright.

    Phi_j(s) = (pi_j mu_j + s v_j) / (mu_j + s) where the v_j solve an N x N
    real system obtained by substituting s = mu_j back into the definition.
    """
    n = spec.n_states
    P = spec.chain.transition
    pi = spec.chain.stationary
    mu = np.asarray(spec.gap_rate)
    c_mu = _calt_at_mu(spec)
    A = np.empty((n, n))
    b = np.empty(n)
    for j in range(n):
        for i in range(n):
            A[j, i] = (1.0 if i == j else 0.0) + P[i, j] * c_mu[i, j] * mu[j] / (
                mu[i] + mu[j]
            )
        b[j] = pi[j] - np.sum(
            P[:, j] * c_mu[:, j] * pi * mu / (mu + mu[j])
        )
    v, cond = solve_dense(A.astype(complex), b.astype(complex))
    v = v.real
    y = np.empty((n, n))
    for i in range(n):
        for l in range(n):
            y[i, l] = (pi[i] * mu[i] + mu[l] * v[i]) / (mu[i] + mu[l])
    v1 = np.zeros(n)
    lam = np.asarray(spec.arrival_rate)
    k1 = pi * mu - lam * v
    k2 = v.copy()
    solution = Model2Solution(
        spec=spec,
        mode="minus_only",
        x=np.zeros((n, n)),
        y=y,
        v1=v1,
        v_neg=v,
        k1=k1,
        k2=k2,
        si_roots=np.array([], dtype=complex),
        cond=cond,
        max_imag=0.0,
        residual_max=np.nan,
        mismatch_max=np.nan,
        warnings=spec.warnings,
    )
    return _verified(solution)


def _adjugate(A: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    if n > _ADJUGATE_GUARD:
        raise ConfigError(f"adjugate computed by cofactors only up to size {_ADJUGATE_GUARD}")
    if n == 1:
        return np.ones((1, 1), dtype=complex)
    out = np.empty((n, n), dtype=complex)
    idx = np.arange(n)
    for i in range(n):
        for j in range(n):
            minor = A[np.ix_(idx != i, idx != j)]
            out[j, i] = (-1.0) ** (i + j) * np.linalg.det(minor)
    return out


def _det_derivative(G: MatrixFunction, s: complex, h: float = 1e-7) -> complex:
    """d/ds det G. det G is real on the real axis, so a complex step avoids
    the subtractive cancellation a central difference suffers near a zero."""
    s = complex(s)
    step = h * (1.0 + abs(s))
    if abs(s.imag) < 1e-14:
        return complex(complex(G.det(s + 1j * step)).imag / step)
    return (G.det(s + step) - G.det(s - step)) / (2.0 * step)


def _solve_plus_only(spec: Model2Spec) -> Model2Solution:
    """p = 1: W' = [W + B - A]+ always.

    v(s) = s v1 is linear, the unknowns are only x[i, j] = Phi_i(lambda_j),
    and the determinant zero at the origin supplies the normalisation row
    v1 Adj(G(0)) 1 = (det G)'(0) in place of its analyticity row.
    """
    stab = check_stability_model2(spec)
    if not stab.stable:
        raise InstabilityError(stab.detail)
    n = spec.n_states
    P = spec.chain.transition
    pi = spec.chain.stationary
    lam = np.asarray(spec.arrival_rate)
    mu = np.asarray(spec.gap_rate)
    b_lam = _beta_at(spec, lam)
    zs, avecs = find_si_roots(spec)
    G = build_G(spec)
    K = n * n
    rows = np.zeros((K, K), dtype=complex)
    rhs = np.zeros(K, dtype=complex)

    def ix(i, j):
        return i * n + j

    r = 0
    for j in range(n):
        for k in range(n):
            if k == j:
                continue
            row = rows[r]
            row[ix(j, k)] += 1.0
            d = lam[j] - lam[k]
            for i in range(n):
                row[ix(i, k)] -= lam[j] * P[i, j] * b_lam[i, k] / d
                row[ix(i, j)] += lam[k] * P[i, j] * b_lam[i, j] / d
            rhs[r] = 0.0
            r += 1
    for root, avec in zip(zs.zeros, avecs):
        s = complex(root)
        row = rows[r]
        for j in range(n):
            for i in range(n):
                row[ix(i, j)] += avec[j] * s * P[i, j] * b_lam[i, j]
        rhs[r] = 0.0
        r += 1
    w = _adjugate(G(np.array([0.0]))[0]) @ np.ones(n)
    for j in range(n):
        for i in range(n):
            rows[r, ix(i, j)] += w[j] * P[i, j] * b_lam[i, j]
    rhs[r] = _det_derivative(G, 0.0)
    r += 1
    assert r == K

    sol, cond = solve_dense(rows, rhs)
    if cond > 1e10:
        raise SingularSystemError("boundary system is too ill-conditioned", cond)
    max_imag = float(np.max(np.abs(sol.imag)))
    if max_imag > 1e-6 * (1.0 + float(np.max(np.abs(sol)))):
        raise SingularSystemError(
            f"boundary unknowns came out non-real (max imag {max_imag:.3e})", cond
        )
    x = sol.real.reshape(n, n)
    if np.any(x <= 0.0) or np.any(x > pi[:, None] + 1e-8):
        raise SingularSystemError(
            "transform values at the arrival rates fall outside (0, pi_i]", cond
        )
    v1 = np.array([np.sum(P[:, j] * b_lam[:, j] * x[:, j]) for j in range(n)])
    k1 = mu * v1
    k2 = v1.copy()
    solution = Model2Solution(
        spec=spec,
        mode="plus_only",
        x=x,
        y=np.zeros((n, n)),
        v1=v1,
        v_neg=np.zeros(n),
        k1=k1,
        k2=k2,
        si_roots=zs.zeros,
        cond=cond,
        max_imag=max_imag,
        residual_max=np.nan,
        mismatch_max=np.nan,
        warnings=spec.warnings,
    )
    return _verified(solution)


def solve_model2(spec: Model2Spec, search_bound: float | None = None) -> Model2Solution:
    """Dispatch on the branch probability and solve.

    A determinant zero may land on an arrival rate for isolated parameter
    combinations (det G(lambda_k) = 0); the root row then duplicates the
    balance row at that rate and the boundary system drops rank.  As with
    coincident rates, the instance is nudged - arrival rates scaled by
    1 + 1e-4, escalating - and re-solved, with the nudge recorded.
    """
    stab = check_stability_model2(spec)
    if not stab.stable:
        raise InstabilityError(stab.detail)
    if spec.p == 0.0:
        return _solve_minus_only(spec)
    if spec.p == 1.0:
        return _solve_plus_only(spec)
    work = spec
    delta = 1e-4
    for _ in range(4):
        roots = find_si_roots(work, search_bound)
        lam = np.asarray(work.arrival_rate)
        zeros = roots[0].zeros
        gap = np.min(np.abs(zeros[:, None] - lam[None, :]) / (1.0 + lam[None, :]))
        if gap > 1e-5:
            return assemble_unknowns(work, roots=roots)
        k = int(np.argmin(np.min(np.abs(zeros[:, None] - lam[None, :]), axis=0)))
        note = (
            f"determinant zero collides with arrival rate {lam[k]:.9g}; "
            f"arrival rates scaled by 1 + {delta:g} to restore full rank"
        )
        work = Model2Spec(
            chain=work.chain,
            arrival_rate=tuple(float(v) * (1.0 + delta) for v in work.arrival_rate),
            gap_rate=work.gap_rate,
            service=work.service,
            service_alt=work.service_alt,
            p=work.p,
            warnings=work.warnings + (note,),
        )
        delta *= 4.0
    raise SingularSystemError(
        "a determinant zero stays on an arrival rate after repeated nudges", math.inf
    )


def _phi_plain(solution: Model2Solution, s: complex) -> np.ndarray:
    spec = solution.spec
    G = build_G(spec)(np.array([s]))[0]
    v = _v_row(spec, solution.k1, solution.k2, s)
    return np.linalg.solve(G.T, v)


def evaluate_phi2(solution: Model2Solution, s: complex) -> np.ndarray:
    """Transform vector at s via the dense solve Phi(s) G(s) = v(s).

    Points within 1e-6 of a determinant zero (including the origin when
    p = 1) are recovered as the average over two straddling offsets, where
    the simple-pole parts cancel.  Points at -mu_j are genuine poles.
    """
    spec = solution.spec
    s = complex(s)
    mu = np.asarray(spec.gap_rate)
    dist_mu = np.abs(s + mu)
    k = int(np.argmin(dist_mu))
    if dist_mu[k] < 1e-9 * (1.0 + mu[k]):
        raise PoleEvaluationError(s, complex(-mu[k]))
    if solution.mode == "minus_only":
        pi = spec.chain.stationary
        return (pi * mu + s * solution.v_neg) / (mu + s)
    singular = list(solution.si_roots)
    if spec.p == 1.0:
        singular.append(0.0 + 0.0j)
    for root in singular:
        if abs(s - root) < 1e-6 * (1.0 + abs(root)):
            # Average over a 4-point cross: the simple-pole part and every
            # Taylor term through h^3 cancel, so the radius can sit at 1e-4
            # where G is still well conditioned (a straddling pair at 1e-6
            # would drag ~1e-10 of solve roundoff into the value).
            h = 1e-4 * (1.0 + abs(root))
            vals = [_phi_plain(solution, root + d) for d in (h, -h, 1j * h, -1j * h)]
            return 0.25 * sum(vals)
    return _phi_plain(solution, s)


def _verification_points() -> np.ndarray:
    re = np.linspace(0.1, 5.0, 5)
    im = np.linspace(-2.0, 2.0, 4)
    return (re[:, None] + 1j * im[None, :]).ravel()


def _verified(solution: Model2Solution, tol: float = 1e-8) -> Model2Solution:
    """Residual of the pointwise balance equation on the verification grid,
    plus self-consistency of the boundary unknowns against the evaluator."""
    spec = solution.spec
    n = spec.n_states
    p, q = spec.p, spec.q
    P = spec.chain.transition
    pi = spec.chain.stationary
    lam = np.asarray(spec.arrival_rate)
    mu = np.asarray(spec.gap_rate)
    b_lam = _beta_at(spec, lam)
    c_mu = _calt_at_mu(spec)
    worst = 0.0
    for s in _verification_points():
        phi = evaluate_phi2(solution, s)
        b_s = np.array([complex(lst_eval(lst, s)) for lst in spec.service])
        for j in range(n):
            plus = 0.0 + 0.0j
            if p > 0.0:
                acc = 0.0 + 0.0j
                for i in range(n):
                    acc += P[i, j] * (
                        lam[j] * b_s[i] * phi[i] - s * b_lam[i, j] * solution.x[i, j]
                    )
                plus = p * acc / (lam[j] - s)
            minus = q * pi[j]
            if q > 0.0:
                minus -= (
                    q
                    * s
                    * np.sum(P[:, j] * c_mu[:, j] * solution.y[:, j])
                    / (mu[j] + s)
                )
            worst = max(worst, abs(phi[j] - plus - minus))
    mismatch = 0.0
    if p > 0.0:
        for j in range(n):
            phi_l = evaluate_phi2(solution, lam[j])
            mismatch = max(mismatch, float(np.max(np.abs(phi_l.real - solution.x[:, j]))))
    if q > 0.0:
        for l in range(n):
            phi_m = evaluate_phi2(solution, mu[l])
            mismatch = max(mismatch, float(np.max(np.abs(phi_m.real - solution.y[:, l]))))
    if worst > tol or mismatch > 100.0 * tol:
        raise SingularSystemError(
            f"balance residual {worst:.3e} / boundary mismatch {mismatch:.3e} "
            f"exceed tolerance {tol:.1e}",
            solution.cond,
        )
    object.__setattr__(solution, "residual_max", worst)
    object.__setattr__(solution, "mismatch_max", mismatch)
    return solution


def moments_model2(solution: Model2Solution, r_max: int = 2) -> np.ndarray:
    """Stationary moment rows m_r[j] = E[W^r; Z=j] for r = 0..r_max.

    Matching powers of s in Phi(s) G(s) (M + sI) = s k1 + s^2 k2 - q pi Lam M
    gives a linear recursion in the moment rows.  For p = 1 the leading
    matrix is singular (left kernel pi); each row is then the least-squares
    particular solution plus alpha pi, with alpha pinned by projecting the
    next-order identity onto the right kernel of the leading matrix.
    """
    spec = solution.spec
    n = spec.n_states
    p, q = spec.p, spec.q
    P = spec.chain.transition
    pi = spec.chain.stationary
    lam = np.asarray(spec.arrival_rate)
    mu = np.asarray(spec.gap_rate)
    Lam = np.diag(lam)
    M = np.diag(mu)
    eye = np.eye(n)
    need = r_max + (1 if p == 1.0 else 0)
    gam = np.ones((need + 1, n))
    for i, lst in enumerate(spec.service):
        gam[1:, i] = raw_moments(lst, need)
    PLM = P @ Lam @ M
    PL = P @ Lam

    def A_k(k: int) -> np.ndarray:
        if k == 0:
            return (p * P - eye) @ Lam @ M
        if k == 1:
            return p * (PL - np.diag(gam[1]) @ PLM) + M - Lam
        if k == 2:
            return p * (0.5 * np.diag(gam[2]) @ PLM - np.diag(gam[1]) @ PL) + eye
        sign = (-1.0) ** k
        return p * (
            sign * np.diag(gam[k]) @ PLM / math.factorial(k)
            - sign * np.diag(gam[k - 1]) @ PL / math.factorial(k - 1)
        )

    def b_r(r: int) -> np.ndarray:
        if r == 0:
            return -q * pi * lam * mu
        if r == 1:
            return solution.k1
        if r == 2:
            return solution.k2
        return np.zeros(n)

    A0 = A_k(0)
    m = np.zeros((r_max + 1, n))
    m[0] = pi
    if p < 1.0:
        for r in range(1, r_max + 1):
            rhs = b_r(r).astype(float).copy()
            for j in range(r):
                rhs -= ((-1.0) ** j / math.factorial(j)) * (m[j] @ A_k(r - j))
            coef = (-1.0) ** r / math.factorial(r)
            m[r] = np.linalg.solve(A0.T, rhs / coef)
    else:
        z = np.linalg.solve(Lam @ M, np.ones(n))
        for r in range(1, r_max + 1):
            rhs = b_r(r).astype(float).copy()
            for j in range(r):
                rhs -= ((-1.0) ** j / math.factorial(j)) * (m[j] @ A_k(r - j))
            coef = (-1.0) ** r / math.factorial(r)
            part = np.linalg.lstsq(A0.T, rhs / coef, rcond=None)[0]
            # pin the pi-direction from the solvability of the next order
            resid = b_r(r + 1).astype(float).copy()
            for j in range(r):
                resid -= ((-1.0) ** j / math.factorial(j)) * (m[j] @ A_k(r + 1 - j))
            resid -= coef * (part @ A_k(1))
            denom = coef * float(pi @ A_k(1) @ z)
            alpha = float(resid @ z) / denom
            m[r] = part + alpha * pi
    if np.any(m[1] < -1e-9):
        raise SingularSystemError(f"negative mean component in {m[1]}", solution.cond)
    m[1] = np.clip(m[1], 0.0, None)
    if r_max >= 2:
        jensen = pi * m[2] - m[1] ** 2
        if np.any(jensen < -1e-8 * (1.0 + m[2])):
            raise SingularSystemError(
                f"second moments violate the per-state variance bound: {jensen}",
                solution.cond,
            )
    return m


@dataclass(frozen=True)
class DecayProfile:
    """Tail profile P(W > x; Z=j) ~ prefactor_j * exp(-rate * x)."""

    rate: float
    zero: complex
    coefficients: np.ndarray | None
    tail_prefactors: np.ndarray | None
    dominated: bool
    oscillatory: bool
    caveats: tuple[str, ...]


def decay_profile(solution: Model2Solution, search_bound: float | None = None) -> DecayProfile:
    """Rightmost zero of det G in (-zeta, 0) and the residue row there.

    zeta is the service-transform analyticity margin.  When the zero does
    not dominate (a pole of v at some -mu_j lies to its right, or the
    rightmost zeros form a complex pair) the profile is flagged and the
    coefficients are omitted.
    """
    spec = solution.spec
    G = build_G(spec)
    m0 = min(_margin(lst) for lst in spec.service)
    zeta = m0 - max(1e-6 * (1.0 + m0), 1e-3 * m0) if math.isfinite(m0) else math.inf
    if search_bound is not None:
        zeta = min(zeta, float(search_bound))
    if not math.isfinite(zeta):
        raise ConfigError(
            "service margin is unbounded; pass search_bound to bound the strip"
        )
    if zeta <= 1e-6:
        raise ConfigError("service transforms leave no analyticity strip to search")
    # multiplying out rational service denominators removes the transform
    # poles at the strip margin, which otherwise wreck the winding integral
    # (the service transforms only enter det G when the additive branch is
    # active); at p = 1 the known simple zero at the origin is divided out
    # so the contour inset does not sit on top of it
    denoms = (
        [
            np.asarray(lst.denominator)
            for lst in spec.service
            if isinstance(lst, RationalLst) and lst.degree > 0
        ]
        if spec.p > 0.0
        else []
    )

    def g(z: np.ndarray) -> np.ndarray:
        s = -np.atleast_1d(np.asarray(z, dtype=complex))
        vals = np.linalg.det(G(s))
        for den in denoms:
            vals = vals * npoly.polyval(s, den)
        if spec.p == 1.0:
            vals = vals / s
        return vals

    inset = 1e-9
    contour = RectContour(inset, zeta, -zeta, zeta)
    found = count_zeros(g, contour)
    if found == 0:
        raise RootCountError(0, 1, f"no determinant zero in (-{zeta:.6g}, 0)")
    zs = find_zeros_right_halfplane(g, found, zeta)
    order = np.argsort(zs.zeros.real)
    front = zs.zeros[order[0]]
    rate = float(front.real)
    oscillatory = abs(front.imag) > 1e-9 * (1.0 + rate)
    caveats = []
    if oscillatory:
        caveats.append(
            "rightmost determinant zeros form a complex pair; the tail "
            "oscillates around the exponential envelope"
        )
    mu = np.asarray(spec.gap_rate)
    # at p = 1 the inhomogeneous term is s v1 outright, so the gap rates
    # are inert and cannot dominate the tail
    dominated = bool(spec.q > 0.0 and rate >= np.min(mu) - 1e-9)
    if dominated:
        caveats.append(
            "a pole of the inhomogeneous term at -mu lies right of the "
            "determinant zero; the reported rate is an upper envelope only"
        )
    coefficients = None
    prefactors = None
    if not oscillatory and (spec.q == 0.0 or np.all(np.abs(rate - mu) > 1e-9)):
        s0 = -rate
        dprime = _det_derivative(G, s0)
        scale = float(np.median(np.abs(G.det(np.array([s0 - 0.1, s0 + 0.1j, s0 + 0.1])))))
        if abs(dprime) < 1e-8 * max(scale, 1e-30):
            raise RepeatedZeroError(complex(s0), 2)
        adj = _adjugate(G(np.array([s0]))[0])
        if spec.q == 0.0:
            v = s0 * solution.v1.astype(complex)
        else:
            v = _v_row(spec, solution.k1, solution.k2, s0)
        coefficients = np.real(v @ adj / dprime)
        prefactors = coefficients / rate
    return DecayProfile(
        rate=rate,
        zero=complex(-front.real, -front.imag if oscillatory else 0.0),
        coefficients=coefficients,
        tail_prefactors=prefactors,
        dominated=dominated,
        oscillatory=oscillatory,
        caveats=tuple(caveats),
    )
