"""Tests for the contracting-multiplier workload solver."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modlindley.errors import (
    ConfigError,
    InstabilityError,
    PoleEvaluationError,
    RepeatedZeroError,
)
from modlindley.model1 import (
    Model1Spec,
    _Series,
    build_H1,
    check_stability_model1,
    evaluate_phi_series,
    find_delta_roots,
    mean_workload,
    solve_model1,
    solve_model1_special,
)
from modlindley.probcore import (
    ModulationChain,
    NegativeMultiplierLaw,
    exponential_lst,
    hyperexponential_lst,
    point_mass_lst,
)

TRANSFORM_TOL = 1e-8
RESIDUAL_TOL = 1e-6

ATOM_MINUS_ONE = NegativeMultiplierLaw(atoms=((-1.0, 1.0),))


def alternating_chain() -> ModulationChain:
    return ModulationChain.from_matrix([[0.0, 1.0], [1.0, 0.0]])


def example_spec(p1=1.0 / 3.0, p2=1.0 / 3.0, a=0.2) -> Model1Spec:
    """Two-state instance: services exp(10)/exp(8), interarrivals exp(2)/exp(3)."""
    return Model1Spec(
        chain=alternating_chain(),
        service=(exponential_lst(10.0), exponential_lst(8.0)),
        interarrival=(exponential_lst(2.0), exponential_lst(3.0)),
        p1=p1,
        p2=p2,
        p3=1.0 - p1 - p2,
        a=a,
        v_negative=ATOM_MINUS_ONE,
    )


def single_state_spec(lam=2.0, mu=10.0, p1=1.0 / 3.0, p2=1.0 / 3.0, a=0.2) -> Model1Spec:
    return Model1Spec(
        chain=ModulationChain.from_matrix([[1.0]]),
        service=(exponential_lst(mu),),
        interarrival=(exponential_lst(lam),),
        p1=p1,
        p2=p2,
        p3=1.0 - p1 - p2,
        a=a,
        v_negative=ATOM_MINUS_ONE,
    )


class TestSpecValidation:
    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            Model1Spec(
                chain=ModulationChain.from_matrix([[1.0]]),
                service=(exponential_lst(5.0),),
                interarrival=(exponential_lst(2.0),),
                p1=0.3,
                p2=0.3,
                p3=0.3,
                a=0.5,
                v_negative=ATOM_MINUS_ONE,
            )

    def test_negative_branch_required(self):
        with pytest.raises(ConfigError):
            Model1Spec(
                chain=ModulationChain.from_matrix([[1.0]]),
                service=(exponential_lst(5.0),),
                interarrival=(exponential_lst(2.0),),
                p1=0.5,
                p2=0.5,
                p3=0.0,
                a=0.5,
                v_negative=ATOM_MINUS_ONE,
            )

    def test_atom_law_required_when_p3_positive(self):
        with pytest.raises(ConfigError):
            Model1Spec(
                chain=ModulationChain.from_matrix([[1.0]]),
                service=(exponential_lst(5.0),),
                interarrival=(exponential_lst(2.0),),
                p1=0.3,
                p2=0.3,
                p3=0.4,
                a=0.5,
                v_negative=None,
            )

    def test_contraction_factor_range(self):
        with pytest.raises(ConfigError):
            single_state_spec(a=1.0)

    def test_general_interarrival_needs_pure_negative_multiplier(self):
        # a point-mass interarrival law is fine for p1 = p2 = 0 but not here
        with pytest.raises(ConfigError):
            Model1Spec(
                chain=ModulationChain.from_matrix([[1.0]]),
                service=(exponential_lst(5.0),),
                interarrival=(point_mass_lst(0.5),),
                p1=0.3,
                p2=0.3,
                p3=0.4,
                a=0.5,
                v_negative=ATOM_MINUS_ONE,
            )

    def test_repeated_service_roots_rejected(self):
        spec = Model1Spec(
            chain=alternating_chain(),
            service=(exponential_lst(7.0), exponential_lst(7.0)),
            interarrival=(exponential_lst(2.0), exponential_lst(3.0)),
            p1=1.0 / 3.0,
            p2=1.0 / 3.0,
            p3=1.0 / 3.0,
            a=0.5,
            v_negative=ATOM_MINUS_ONE,
        )
        with pytest.raises(RepeatedZeroError):
            spec.service_root_pool()


class TestStability:
    def test_closed_form_single_state(self):
        # P(S <= A) = B*(lambda) = 10/12 for exp(10) service, exp(2) gaps
        report = check_stability_model1(single_state_spec())
        assert report.stable
        assert report.closed_form == pytest.approx(10.0 / 12.0, rel=1e-12)
        assert report.probe_frequency == pytest.approx(10.0 / 12.0, abs=1e-2)

    def test_probe_matches_closed_form_two_states(self):
        report = check_stability_model1(example_spec())
        assert report.stable
        assert report.closed_form is not None
        assert report.probe_frequency == pytest.approx(report.closed_form, abs=1e-2)

    def test_pure_negative_multiplier_needs_negative_increments(self):
        # deterministic zero-length gaps make S <= A impossible
        spec = Model1Spec(
            chain=ModulationChain.from_matrix([[1.0]]),
            service=(exponential_lst(1.0),),
            interarrival=(point_mass_lst(0.0),),
            p1=0.0,
            p2=0.0,
            p3=1.0,
            a=0.5,
            v_negative=ATOM_MINUS_ONE,
        )
        report = check_stability_model1(spec)
        assert not report.stable
        with pytest.raises(InstabilityError):
            solve_model1_special(spec)


class TestKernelAndSeries:
    def test_kernel_values(self):
        H = build_H1(example_spec())
        at1 = H(np.array([1.0]))[0]
        assert at1[0, 0] == pytest.approx(20.0 / 11.0, rel=1e-12)
        assert at1[0, 1] == pytest.approx(15.0 / 11.0, rel=1e-12)
        assert at1[1, 0] == pytest.approx(16.0 / 9.0, rel=1e-12)
        assert at1[1, 1] == pytest.approx(4.0 / 3.0, rel=1e-12)
        at0 = H(np.array([0.0]))[0]
        assert np.allclose(at0, np.ones((2, 2)), atol=1e-12)

    def test_modulated_kernel_at_zero_is_transition_transpose(self):
        spec = example_spec()
        F0 = _Series(spec).F(0.0)
        assert np.allclose(F0, spec.chain.transition.T, atol=1e-12)

    def test_known_constant_coefficients(self):
        # c0_j = pi_j p3 D_A_j(0) prod_k D_B_k(0) with pi = (1/2, 1/2)
        series = _Series(example_spec())
        assert series.c0[0] == pytest.approx(80.0 / 3.0, rel=1e-12)
        assert series.c0[1] == pytest.approx(40.0, rel=1e-12)

    def test_inhomogeneous_term_guards_poles(self):
        series = _Series(example_spec())
        with pytest.raises(PoleEvaluationError):
            series.v_affine(2.0)
        with pytest.raises(PoleEvaluationError):
            series.v_affine(3.0 + 0.0j)

    def test_series_contraction_factor(self):
        # column sums of R(0) equal p2 / (1 - p1)
        spec = example_spec()
        R0, _ = _Series(spec).operators_at(0.0)
        assert np.allclose(R0.sum(axis=0), 0.5, atol=1e-12)

    def test_affine_form_shapes(self):
        spec = example_spec()
        av = evaluate_phi_series(spec, 1.0 + 0.5j)
        assert av.const.shape == (2,)
        assert av.coeffs.shape == (2, 6)


class TestDeltaRoots:
    def test_example_roots_satisfy_quartic(self):
        # det(I - p1 F(s)) = 0 iff (10+s)(8+s)(3-s)(2-s) = 480/9 here
        spec = example_spec()
        zs = find_delta_roots(spec)
        assert zs.count == 2
        assert np.all(zs.zeros.real > 0)
        for d in zs.zeros:
            lhs = (10 + d) * (8 + d) * (3 - d) * (2 - d)
            assert lhs == pytest.approx(480.0 / 9.0, rel=1e-8)

    def test_single_state_closed_form(self):
        # s^2 - (lam - mu) s - lam mu (1 - p1) = 0, positive branch
        spec = single_state_spec()
        zs = find_delta_roots(spec)
        assert zs.count == 1
        expect = (-8.0 + math.sqrt(64.0 + 4.0 * 20.0 * (2.0 / 3.0))) / 2.0
        assert zs.zeros[0].real == pytest.approx(expect, abs=1e-9)
        assert zs.zeros[0].imag == pytest.approx(0.0, abs=1e-12)

    def test_zero_p1_counts_reflected_interarrival_roots(self):
        spec = single_state_spec(lam=2.0, mu=10.0, p1=0.0, p2=0.4, a=0.5)
        zs = find_delta_roots(spec)
        assert zs.count == 1
        assert zs.zeros[0] == pytest.approx(2.0, abs=1e-8)


class TestSolveGeneral:
    def test_example_instance(self):
        spec = example_spec()
        sol = solve_model1(spec)
        assert sol.mode == "general"
        assert sol.c0[0] == pytest.approx(80.0 / 3.0, rel=1e-12)
        assert sol.residual_max < RESIDUAL_TOL
        phi0 = np.real(sol.evaluate(0.0, tol=1e-10))
        assert np.max(np.abs(phi0 - spec.chain.stationary)) < TRANSFORM_TOL

    def test_example_transform_shape_properties(self):
        sol = solve_model1(example_spec())
        grid = [0.25, 0.5, 1.0, 2.0, 4.0]
        vals = np.real(sol.evaluate_grid(grid))
        # componentwise in (0, pi_j], decreasing in s
        assert np.all(vals > 0)
        assert np.all(vals <= 0.5 + 1e-10)
        assert np.all(np.diff(vals, axis=0) < 0)

    def test_conjugate_symmetry(self):
        sol = solve_model1(example_spec())
        up = sol.evaluate(1.0 + 1.0j)
        dn = sol.evaluate(1.0 - 1.0j)
        assert np.allclose(up, np.conj(dn), atol=1e-7)

    def test_example_means(self):
        sol = solve_model1(example_spec())
        m = mean_workload(sol)
        assert m.shape == (2,)
        assert np.all(m >= 0.0)
        assert np.all(np.isfinite(m))

    def test_single_state_instance(self):
        sol = solve_model1(single_state_spec())
        assert abs(sol.evaluate(0.0, tol=1e-10)[0] - 1.0) < TRANSFORM_TOL
        assert mean_workload(sol)[0] >= 0.0

    def test_zero_p1_instance(self):
        # exercises the analyticity rows that replace the null-vector rows
        spec = single_state_spec(lam=2.0, mu=10.0, p1=0.0, p2=0.4, a=0.5)
        sol = solve_model1(spec)
        assert sol.mode == "general"
        assert sol.residual_max < RESIDUAL_TOL
        assert abs(sol.evaluate(0.0, tol=1e-10)[0] - 1.0) < TRANSFORM_TOL
        assert mean_workload(sol)[0] >= 0.0

    def test_hyperexponential_service(self):
        spec = Model1Spec(
            chain=alternating_chain(),
            service=(
                hyperexponential_lst([0.4, 0.6], [4.0, 9.0]),
                exponential_lst(6.0),
            ),
            interarrival=(exponential_lst(1.5), exponential_lst(2.5)),
            p1=0.25,
            p2=0.25,
            p3=0.5,
            a=0.4,
            v_negative=ATOM_MINUS_ONE,
        )
        sol = solve_model1(spec)
        phi0 = np.real(sol.evaluate(0.0, tol=1e-10))
        assert np.max(np.abs(phi0 - spec.chain.stationary)) < TRANSFORM_TOL


class TestSolveSpecial:
    def test_single_state_closed_form(self):
        # exp(5) service, exp(3) gaps, V = -1 a.s.; at t = -5 the boundary
        # condition collapses to c1 = (2 - A*(5)) / (2 + A*(5)) = 13/19
        spec = Model1Spec(
            chain=ModulationChain.from_matrix([[1.0]]),
            service=(exponential_lst(5.0),),
            interarrival=(exponential_lst(3.0),),
            p1=0.0,
            p2=0.0,
            p3=1.0,
            a=0.5,
            v_negative=ATOM_MINUS_ONE,
        )
        sol = solve_model1_special(spec)
        assert sol.mode == "special"
        assert sol.coefficients[0] == pytest.approx(13.0 / 19.0, rel=1e-12)
        assert mean_workload(sol)[0] == pytest.approx(6.0 / 95.0, rel=1e-10)
        # atom at zero equals the transform limit at infinity
        assert sol.evaluate(1e9)[0].real == pytest.approx(13.0 / 19.0, rel=1e-6)

    def test_single_state_point_mass_gaps(self):
        spec = Model1Spec(
            chain=ModulationChain.from_matrix([[1.0]]),
            service=(exponential_lst(5.0),),
            interarrival=(point_mass_lst(0.8),),
            p1=0.0,
            p2=0.0,
            p3=1.0,
            a=0.5,
            v_negative=ATOM_MINUS_ONE,
        )
        sol = solve_model1_special(spec)
        a5 = math.exp(-5.0 * 0.8)
        assert sol.coefficients[0] == pytest.approx((2.0 - a5) / (2.0 + a5), rel=1e-12)

    def test_two_state_mixed_laws(self):
        chain = ModulationChain.from_matrix([[0.3, 0.7], [0.6, 0.4]])
        spec = Model1Spec(
            chain=chain,
            service=(exponential_lst(5.0), exponential_lst(7.0)),
            interarrival=(point_mass_lst(0.8), exponential_lst(3.0)),
            p1=0.0,
            p2=0.0,
            p3=1.0,
            a=0.5,
            v_negative=NegativeMultiplierLaw(atoms=((-0.5, 0.6), (-1.5, 0.4))),
        )
        sol = solve_model1_special(spec)
        assert np.allclose(sol.c0, chain.stationary * 35.0, atol=1e-12)
        phi0 = np.real(sol.evaluate(0.0))
        assert np.max(np.abs(phi0 - chain.stationary)) < 1e-10
        vals = np.real(sol.evaluate_grid([0.5, 1.0, 2.0]))
        assert np.all(np.diff(vals, axis=0) < 0)
        assert np.all(mean_workload(sol) >= 0.0)


class TestGeneralMatchesSpecial:
    def test_small_positive_branch_is_a_perturbation(self):
        chain = ModulationChain.from_matrix([[0.3, 0.7], [0.6, 0.4]])
        kwargs = dict(
            chain=chain,
            service=(exponential_lst(6.0), exponential_lst(9.0)),
            interarrival=(exponential_lst(2.0), exponential_lst(3.0)),
            a=0.5,
            v_negative=ATOM_MINUS_ONE,
        )
        base = Model1Spec(p1=0.0, p2=0.0, p3=1.0, **kwargs)
        eps = 1e-3
        bumped = Model1Spec(p1=eps, p2=eps, p3=1.0 - 2.0 * eps, **kwargs)
        sol0 = solve_model1_special(base)
        sol1 = solve_model1(bumped)
        for s in (0.5, 1.0, 2.0):
            d = np.max(np.abs(sol0.evaluate(s) - sol1.evaluate(s)))
            assert d < 5e-3


@settings(max_examples=6, deadline=None)
@given(
    lam=st.floats(min_value=0.5, max_value=4.0),
    mu=st.floats(min_value=1.0, max_value=12.0),
    p1=st.floats(min_value=0.05, max_value=0.4),
    p2=st.floats(min_value=0.05, max_value=0.4),
    a=st.floats(min_value=0.15, max_value=0.85),
)
def test_random_single_state_instances_solve_cleanly(lam, mu, p1, p2, a):
    spec = single_state_spec(lam=lam, mu=mu, p1=p1, p2=p2, a=a)
    sol = solve_model1(spec)
    assert abs(sol.evaluate(0.0, tol=1e-10)[0] - 1.0) < TRANSFORM_TOL
    at_one = sol.evaluate(1.0)[0].real
    assert 0.0 < at_one < 1.0
    assert mean_workload(sol)[0] >= 0.0
