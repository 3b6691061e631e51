import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.special import gammaln, logsumexp

from conftest import random_spd
from limis.mixture import (DegenerateComponentError, ImportanceMixture, StudentTComponent,
                           WeightedSampleSet, add_component, mixture_log_density, reweight_all,
                           sample_component, student_t_log_density)
from limis.targets import GaussianTarget, warped_mixture_target


def test_t3_density_at_location():
    c = StudentTComponent([0.0], [[3.0]], 3)
    expected = math.exp(gammaln(2.0) - gammaln(1.5)) / math.sqrt(3 * math.pi)
    assert math.exp(student_t_log_density(c, np.zeros(1))) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.36755, abs=1e-5)
    c1 = StudentTComponent([0.0], [[1.0]], 3)
    assert math.exp(c1.log_density(np.zeros(1))) == pytest.approx(0.63662, abs=1e-5)


def test_scale_parametrisation():
    a = StudentTComponent.build([0.0], [[1.0]], 3, "scale")
    b = StudentTComponent([0.0], [[3.0]], 3)
    np.testing.assert_allclose(a.covariance, b.covariance)
    with pytest.raises(ValueError):
        StudentTComponent.build([0.0], [[1.0]], 3, "precision")


def test_large_dof_is_gaussian(rng):
    S = random_spd(rng, 3)
    c = StudentTComponent(np.zeros(3), S, 1e6)
    g = GaussianTarget(np.zeros(3), S)
    X = rng.normal(size=(20, 3))
    np.testing.assert_allclose(c.log_density(X), g.log_density(X), atol=1e-3)


def test_t_density_integrates_to_one():
    c = StudentTComponent([1.0], [[2.0]], 3)
    val = integrate.quad(lambda x: math.exp(c.log_density(np.array([x]))), -np.inf, np.inf)[0]
    assert val == pytest.approx(1.0, abs=1e-8)


def test_dof_and_shape_validation():
    with pytest.raises(ValueError):
        StudentTComponent([0.0], [[1.0]], 2.0)
    with pytest.raises(ValueError):
        StudentTComponent([0.0, 0.0], [[1.0]], 3)
    with pytest.raises(DegenerateComponentError):
        StudentTComponent([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]], 3)


def test_sample_moments_and_determinism(rng):
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    c = StudentTComponent([1.0, -1.0], S, 3)
    X = sample_component(c, 1_000_000, np.random.default_rng(7))
    Y = sample_component(c, 1_000_000, np.random.default_rng(7))
    assert np.array_equal(X, Y)
    assert np.all(np.abs(X.mean(axis=0) - [1.0, -1.0]) < 5 * np.sqrt(np.diag(S) / X.shape[0]))
    # t3 has no fourth moment, so the covariance converges slowly; loose band
    np.testing.assert_allclose(np.cov(X, rowvar=False), S, rtol=0.15, atol=0.1)
    with pytest.raises(ValueError):
        sample_component(c, 0, rng)


def test_heavy_tails_kurtosis_grows():
    c = StudentTComponent([0.0], [[1.0]], 3)
    rng = np.random.default_rng(3)
    kurt = []
    for n in (10**3, 10**5, 10**7):
        x = c.sample(n, rng)[:, 0]
        kurt.append(np.mean(x ** 4) / np.mean(x ** 2) ** 2)
    assert kurt[2] > kurt[0]


def test_prior_only_mixture(rng):
    p = StudentTComponent(np.zeros(2), 100 * np.eye(2), 3)
    mix = ImportanceMixture(p, 10, 5)
    X = rng.normal(size=(4, 2))
    np.testing.assert_allclose(mixture_log_density(mix, X), p.log_density(X), rtol=1e-14)


def test_hand_case_two_components():
    p = StudentTComponent([0.0], [[4.0]], 3)
    c1 = StudentTComponent([1.0], [[1.0]], 3)
    c2 = StudentTComponent([-2.0], [[0.5]], 3)
    mix = add_component(add_component(ImportanceMixture(p, 1000, 100), c1), c2)
    x = np.array([0.4])
    direct = (1000 / 1200) * math.exp(p.log_density(x)) + (100 / 1200) * (
        math.exp(c1.log_density(x)) + math.exp(c2.log_density(x)))
    assert math.exp(mix.log_density(x)) == pytest.approx(direct, rel=1e-12)


def test_identical_component_reduces_to_prior(rng):
    p = StudentTComponent(np.zeros(2), np.eye(2), 1e8)
    mix = ImportanceMixture(p, 100, 100).add_component(StudentTComponent(np.zeros(2), np.eye(2), 1e8))
    X = rng.normal(size=(5, 2))
    np.testing.assert_allclose(mix.log_density(X), p.log_density(X), rtol=1e-12)


def test_weights_after_additions():
    mix = ImportanceMixture(StudentTComponent([0.0], [[1.0]]), 1000, 100)
    mix1 = mix.add_component(StudentTComponent([1.0], [[1.0]]))
    assert mix1.mixture_weights()[0] == pytest.approx(1000 / 1100)
    for _ in range(7):
        mix1 = mix1.add_component(StudentTComponent([1.0], [[1.0]]))
        assert mix1.mixture_weights().sum() == pytest.approx(1.0, abs=1e-15)
    assert mix.k == 0  # add_component does not mutate


def test_far_point_prior_dominates():
    p = StudentTComponent([0.0], [[100.0]], 3)
    mix = ImportanceMixture(p, 1000, 100).add_component(StudentTComponent([0.0], [[0.01]], 3))
    x = np.array([1e4])
    assert mix.log_density(x) == pytest.approx(math.log(1000 / 1100) + p.log_density(x), abs=1e-3)


@given(st.integers(0, 10_000), st.integers(0, 4))
def test_mixture_normalises_1d(seed, k):
    rng = np.random.default_rng(seed)
    mix = ImportanceMixture(StudentTComponent([0.0], [[rng.uniform(0.5, 4)]]), 50, 20)
    for _ in range(k):
        mix = mix.add_component(StudentTComponent([rng.uniform(-3, 3)], [[rng.uniform(0.1, 2)]]))
    f = lambda x: math.exp(mix.log_density(np.array([x])))
    pts = [c.location[0] for c in mix.components]
    val = sum(integrate.quad(f, a, b, limit=200, epsabs=1e-12)[0]
              for a, b in [(-np.inf, -10), (-10, 10), (10, np.inf)])
    assert val == pytest.approx(1.0, abs=1e-6)


def test_reweight_prior_only(rng):
    T = warped_mixture_target(2)
    p = StudentTComponent(np.zeros(2), 100 * np.eye(2), 3)
    mix = ImportanceMixture(p, 30, 10)
    X = p.sample(30, rng)
    s = reweight_all(mix, WeightedSampleSet.new(X, T.log_density(X), np.full(30, -1)))
    np.testing.assert_allclose(s.log_weights, T.log_density(X) - p.log_density(X), rtol=1e-14)


def test_reweight_hand_case():
    p = StudentTComponent([0.0], [[4.0]], 3)
    c = StudentTComponent([1.0], [[1.0]], 3)
    mix = ImportanceMixture(p, 2, 1).add_component(c)
    X = np.array([[0.0], [1.0], [-2.5]])
    lt = np.array([-1.0, -2.0, -3.0])
    s = reweight_all(mix, WeightedSampleSet.new(X, lt, np.array([-1, -1, 0])))
    for i in range(3):
        q = 2 / 3 * math.exp(p.log_density(X[i])) + 1 / 3 * math.exp(c.log_density(X[i]))
        assert s.weights[i] == pytest.approx(math.exp(lt[i]) / q, rel=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_incremental_equals_full(seed, k):
    rng = np.random.default_rng(seed)
    p = StudentTComponent(np.zeros(2), 25 * np.eye(2), 3)
    mix = ImportanceMixture(p, 20, 10)
    X = p.sample(20, rng)
    s = reweight_all(mix, WeightedSampleSet.new(X, -0.5 * (X ** 2).sum(1), np.full(20, -1)))
    for j in range(k):
        comp = StudentTComponent(rng.normal(size=2) * 3, random_spd(rng, 2), 3)
        mix = mix.add_component(comp)
        Xn = comp.sample(10, rng)
        s = reweight_all(mix, s.append(WeightedSampleSet.new(Xn, -0.5 * (Xn ** 2).sum(1),
                                                             np.full(10, j))))
    full = reweight_all(mix, s, incremental=False)
    np.testing.assert_allclose(s.log_proposal, full.log_proposal, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(s.log_proposal, mix.log_density(s.points), rtol=1e-12, atol=1e-12)


def test_c_hat_unbiased_for_normalised_target(rng):
    T = GaussianTarget(np.array([1.0, -1.0]), np.array([[1.0, 0.3], [0.3, 0.5]]))
    mix = ImportanceMixture(StudentTComponent(np.zeros(2), 10 * np.eye(2)), 200, 200)
    mix = mix.add_component(StudentTComponent(T.mean, T.cov * 1.5))
    X = mix.sample(50_000, rng)
    w = np.exp(T.log_density(X) - mix.log_density(X))
    assert abs(w.mean() - 1.0) < 3 * w.std() / math.sqrt(w.size)


def test_t_tails_dominate_target():
    T = warped_mixture_target(2)
    for comp in (StudentTComponent([0.0, 0.0], np.eye(2)), StudentTComponent([7.0, 8.0], 0.2 * np.eye(2))):
        mix = ImportanceMixture(StudentTComponent(np.zeros(2), np.eye(2)), 10, 10).add_component(comp)
        for ang in np.linspace(0, 2 * np.pi, 12, endpoint=False):
            u = np.array([math.cos(ang), math.sin(ang)])
            gaps = [mix.log_density(r * u) - T.log_density(r * u) for r in (20.0, 40.0)]
            assert gaps[1] > gaps[0] > 0


def test_json_roundtrip(rng):
    p = StudentTComponent(np.zeros(3), 100 * np.eye(3), 3)
    mix = ImportanceMixture(p, 30, 10).add_component(StudentTComponent(rng.normal(size=3), random_spd(rng, 3)))
    back = ImportanceMixture.from_json(mix.to_json())
    X = rng.normal(size=(6, 3))
    np.testing.assert_allclose(back.log_density(X), mix.log_density(X), rtol=1e-12)
    assert back.n0 == 30 and back.b == 10 and back.k == 1
