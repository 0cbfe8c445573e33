"""Chain and transform layer.

Oracle values are frozen from hand derivations: the stationary vector of
[[.2,.8],[.6,.4]] solves pi1 = .6/(.8+.6) = 3/7, and all transform values
below are direct arithmetic on the defining formulas.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modlindley.errors import ConfigError, PoleEvaluationError, ReducibleChainError
from modlindley.probcore import (
    GeneralLst,
    ModulationChain,
    NegativeMultiplierLaw,
    RationalLst,
    degenerate_lst,
    erlang_mixture_lst,
    exponential_lst,
    general_from_rational,
    hyperexponential_lst,
    lst_eval,
    point_mass_lst,
    raw_moments,
    stationary_distribution,
    time_scaled_lst,
)

TOL = 1e-12


class TestStationary:
    def test_two_state_uniform(self):
        pi = stationary_distribution([[0.5, 0.5], [0.5, 0.5]])
        assert pi == pytest.approx([0.5, 0.5], abs=TOL)

    def test_two_state_asymmetric(self):
        # frozen oracle: pi = (3/7, 4/7)
        pi = stationary_distribution([[0.2, 0.8], [0.6, 0.4]])
        assert pi == pytest.approx([3.0 / 7.0, 4.0 / 7.0], abs=1e-12)

    def test_single_state(self):
        assert stationary_distribution([[1.0]]) == pytest.approx([1.0])

    def test_periodic_chain(self):
        # power iteration would oscillate here; the linear solve must not
        pi = stationary_distribution([[0.0, 1.0], [1.0, 0.0]])
        assert pi == pytest.approx([0.5, 0.5], abs=TOL)

    def test_reducible_raises(self):
        with pytest.raises(ReducibleChainError) as exc:
            stationary_distribution([[1.0, 0.0], [0.5, 0.5]])
        assert 1 in exc.value.unreachable

    def test_chain_validation(self):
        with pytest.raises(ConfigError):
            ModulationChain.from_matrix([[0.7, 0.2], [0.5, 0.5]])
        chain = ModulationChain.from_matrix([[0.2, 0.8], [0.6, 0.4]])
        assert chain.n_states == 2
        assert chain.stationary @ chain.transition == pytest.approx(chain.stationary)

    @given(
        st.lists(
            st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3),
            min_size=3,
            max_size=3,
        )
    )
    @settings(max_examples=40, deadline=None)
    def test_stationary_is_fixed_point(self, raw):
        P = np.array(raw)
        P = P / P.sum(axis=1, keepdims=True)
        pi = stationary_distribution(P)
        assert np.max(np.abs(pi @ P - pi)) < 1e-10
        assert pi.sum() == pytest.approx(1.0)
        assert np.all(pi > 0)


class TestRationalLst:
    def test_exponential_values(self):
        lst = exponential_lst(2.0)
        assert lst_eval(lst, 3.0) == pytest.approx(0.4)
        assert lst_eval(lst, 0.0) == pytest.approx(1.0)
        assert lst.denominator_roots == pytest.approx([-2.0])

    def test_erlang_mixture(self):
        lst = erlang_mixture_lst([0.5, 0.5], 3.0, 2)
        assert lst.degree == 2
        # 0.5*(3/6) + 0.5*(3/6)^2 = 0.25 + 0.125
        assert lst_eval(lst, 3.0) == pytest.approx(0.375)
        assert lst.denominator_roots == pytest.approx([-3.0, -3.0])

    def test_hyperexponential(self):
        lst = hyperexponential_lst([0.4, 0.6], [1.0, 5.0])
        assert lst_eval(lst, 1.0) == pytest.approx(0.4 * 0.5 + 0.6 * 5.0 / 6.0)
        assert sorted(lst.denominator_roots.real) == pytest.approx([-5.0, -1.0])

    def test_pole_eval_raises_with_root(self):
        lst = exponential_lst(2.0)
        with pytest.raises(PoleEvaluationError) as exc:
            lst_eval(lst, -2.0)
        assert exc.value.pole == pytest.approx(-2.0)

    def test_taylor_moments_exponential(self):
        # E[X^r] = r!/rate^r
        m = exponential_lst(2.0).taylor_moments(3)
        assert m == pytest.approx([1.0, 0.5, 0.5, 0.75])

    def test_validation_rejects_bad_roots(self):
        with pytest.raises(ConfigError):
            RationalLst([2.0], [2.0, 1.0], [+2.0])  # root in wrong half-plane
        with pytest.raises(ConfigError):
            RationalLst([2.0], [2.0, 1.0], [-1.0])  # root does not reproduce D
        with pytest.raises(ConfigError):
            RationalLst([1.0, 1.0], [1.0], [])  # numerator degree too high
        with pytest.raises(ConfigError):
            RationalLst([2.0, 1.0], [4.0, 1.0], [-4.0])  # value at 0 is 1/2

    def test_degree_guard(self):
        with pytest.raises(ConfigError):
            erlang_mixture_lst([0.0] * 64 + [1.0], 1.0, 65)

    def test_degenerate(self):
        lst = degenerate_lst()
        assert lst_eval(lst, 17.3) == pytest.approx(1.0)
        assert lst.degree == 0


class TestGeneralLst:
    def test_point_mass(self):
        lst = point_mass_lst(2.0)
        assert lst_eval(lst, 1.0) == pytest.approx(np.exp(-2.0))
        assert lst.moments[1] == pytest.approx(4.0)

    def test_moment_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            GeneralLst(
                fn=lambda s: 2.0 / (2.0 + np.asarray(s, dtype=complex)),
                zeta=2.0,
                moments=(0.9,),  # true first moment is 0.5
            )

    def test_value_at_zero_enforced(self):
        with pytest.raises(ConfigError):
            GeneralLst(fn=lambda s: 0.5 * np.ones_like(np.asarray(s)), zeta=1.0)

    def test_from_rational_roundtrip(self):
        rat = hyperexponential_lst([0.3, 0.7], [1.0, 4.0])
        gen = general_from_rational(rat)
        grid = np.linspace(0.0, 10.0, 21)
        assert np.allclose(lst_eval(gen, grid), lst_eval(rat, grid), atol=1e-13)
        assert raw_moments(gen, 2) == pytest.approx(raw_moments(rat, 2))

    def test_raw_moments_requires_enough_declared(self):
        lst = GeneralLst(
            fn=lambda s: 2.0 / (2.0 + np.asarray(s, dtype=complex)),
            zeta=2.0,
            moments=(0.5,),
        )
        with pytest.raises(ConfigError):
            raw_moments(lst, 3)


class TestTimeScaling:
    def test_exponential_scaled_is_slower_exponential(self):
        # u*X with X ~ exp(10) is exp(10/u); transforms must agree pointwise.
        scaled = time_scaled_lst(exponential_lst(10.0), 2.5)
        target = exponential_lst(4.0)
        grid = np.array([0.3, 1.0, 2.0 + 1.5j])
        assert np.allclose(lst_eval(scaled, grid), lst_eval(target, grid), atol=TOL)
        assert scaled.denominator_roots == pytest.approx([-4.0])
        assert scaled.mixture == ((1.0, 4.0, 1),)

    def test_general_scaling_moves_moments_and_margin(self):
        gen = general_from_rational(erlang_mixture_lst([0.3, 0.7], 6.0), r_max=2)
        scaled = time_scaled_lst(gen, 3.0)
        assert scaled.zeta == pytest.approx(2.0)
        assert scaled.moments[0] == pytest.approx(3.0 * gen.moments[0])
        assert scaled.moments[1] == pytest.approx(9.0 * gen.moments[1])
        s = np.array([0.8])
        assert lst_eval(scaled, s) == pytest.approx(lst_eval(gen, 3.0 * s))

    def test_point_mass_scaling(self):
        scaled = time_scaled_lst(point_mass_lst(0.4), 5.0)
        assert scaled.mixture == ((1.0, 2.0, 0),)
        assert lst_eval(scaled, 1.0) == pytest.approx(np.exp(-2.0))

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ConfigError):
            time_scaled_lst(exponential_lst(1.0), 0.0)


class TestNegativeMultiplierLaw:
    def test_valid(self):
        law = NegativeMultiplierLaw(((-1.0, 0.25), (-0.5, 0.75)))
        assert law.values == pytest.approx([-1.0, -0.5])
        assert law.weights.sum() == pytest.approx(1.0)

    def test_rejects_positive_atom(self):
        with pytest.raises(ConfigError):
            NegativeMultiplierLaw(((0.5, 1.0),))

    def test_rejects_bad_weights(self):
        with pytest.raises(ConfigError):
            NegativeMultiplierLaw(((-1.0, 0.5), (-2.0, 0.4)))


@given(
    st.lists(st.floats(0.1, 1.0), min_size=1, max_size=4),
    st.lists(st.floats(0.2, 9.0), min_size=4, max_size=4),
)
@settings(max_examples=60, deadline=None)
def test_lst_monotone_in_unit_interval(weights, rates):
    """Any completely monotone mixture: 0 < L(s) <= 1, nonincreasing on [0,10]."""
    w = np.array(weights[: len(rates)] + [0.1] * max(0, len(rates) - len(weights)))
    w = w / w.sum()
    lst = hyperexponential_lst(w, rates[: len(w)])
    grid = np.arange(0.0, 10.0 + 1e-9, 0.1)
    vals = np.real(lst_eval(lst, grid))
    assert np.all(vals > 0.0)
    assert np.all(vals <= 1.0 + 1e-15)
    assert np.all(np.diff(vals) <= 1e-15)


@given(st.floats(0.0, 20.0), st.floats(-30.0, 30.0))
@settings(max_examples=60, deadline=None)
def test_lst_bounded_on_right_half_plane(re, im):
    lst = erlang_mixture_lst([0.2, 0.3, 0.5], 2.5, 3)
    assert abs(lst_eval(lst, complex(re, im))) <= 1.0 + 1e-12
