import numpy as np
import pytest
from scipy import stats

import certibound as cb
from certibound.distributions import (
    NumericMarginal,
    TruncatedNormalMarginal,
    UniformMarginal,
    uniform_on_cube,
)
from certibound.errors import CapabilityError, DegenerateConditioningError

# one-sample Kolmogorov-Smirnov, alpha = 0.01
KS_CRIT = 1.6276


@pytest.fixture(scope="module")
def toy_measure():
    return cb.toy_1d().measure


def test_root_probability_is_one(toy_measure):
    assert toy_measure.cube_probability(cb.decode_cube((), 1)) == pytest.approx(1.0, abs=1e-14)
    uni = cb.UniformMeasure(3)
    assert uni.cube_probability(cb.decode_cube((), 3)) == 1.0


def test_uniform_cube_probability_is_volume():
    uni = cb.UniformMeasure(2)
    assert uni.path_probability((1, 3)) == pytest.approx(2.0 ** (-4), abs=0)
    assert uni.conditional_child_probabilities((2,)).tolist() == [0.25] * 4


def test_toy_cube_probabilities_match_tail_values(toy_measure):
    # P(X in [13/16, 1]) and P(X in [12/16, 13/16]) for the truncated
    # Gaussian, against values computed directly from normal CDFs
    p_tail = toy_measure.path_probability((2, 2, 1, 2)) + toy_measure.path_probability(
        (2, 2, 2)
    )
    assert p_tail == pytest.approx(1.2668424721965499e-3, rel=1e-12)
    p_band = toy_measure.path_probability((2, 2, 1, 1))
    assert p_band == pytest.approx(2.237313211855607e-3, rel=1e-12)
    # rounded values quoted alongside the toy problem
    assert p_tail == pytest.approx(1.3e-3, abs=5e-5)
    assert p_band == pytest.approx(2.2e-3, abs=5e-5)


def test_additivity_across_splits(toy_measure):
    rng = np.random.default_rng(0)
    for model, dim in ((toy_measure, 1), (cb.UniformMeasure(2), 2)):
        for _ in range(25):
            depth = int(rng.integers(0, 8))
            parent = tuple(int(rng.integers(1, (1 << dim) + 1)) for _ in range(depth))
            p_parent = model.path_probability(parent)
            if p_parent == 0.0:
                continue
            kids = sum(
                model.path_probability(parent + (i,))
                for i in range(1, (1 << dim) + 1)
            )
            assert abs(kids - p_parent) <= 1e-12


def test_conditional_child_probabilities_sum_to_one(toy_measure):
    for parent in [(), (2,), (2, 2), (2, 2, 1), (1, 1, 2)]:
        q = toy_measure.conditional_child_probabilities(parent)
        assert q.shape == (2,)
        assert abs(q.sum() - 1.0) <= 1e-12
        assert (q >= 0).all()


def test_zero_mass_parent_raises():
    spike = cb.ProductMeasure([TruncatedNormalMarginal(0.1, 0.001)])
    # [3/4, 1] is hundreds of sigmas out: mass underflows to exactly 0
    with pytest.raises(DegenerateConditioningError):
        spike.conditional_child_probabilities((2, 2))
    with pytest.raises(DegenerateConditioningError):
        spike.exact_conditional_sample((2, 2), 10, 0)


def test_conditional_law_object(toy_measure):
    law = toy_measure.conditional((2,))
    assert law.probability == pytest.approx(toy_measure.path_probability((2,)), rel=0)
    assert np.allclose(
        law.child_probabilities(),
        toy_measure.conditional_child_probabilities((2,)),
    )
    pts = law.sample(100, np.random.default_rng(5))
    assert law.cube.contains(pts).all()


def test_exact_sampling_ks_unconditional(toy_measure):
    rng = np.random.default_rng(1234)
    pts = toy_measure.exact_conditional_sample((), 100_000, rng)[:, 0]
    marginal = toy_measure.marginals[0]
    stat = stats.kstest(pts, lambda x: np.vectorize(marginal.cdf)(x)).statistic
    assert stat < KS_CRIT / np.sqrt(100_000)


def test_exact_sampling_ks_conditional(toy_measure):
    # conditioned on [1/2, 1]; exact conditional CDF from cdf increments
    marginal = toy_measure.marginals[0]
    lo, hi = 0.5, 1.0
    mass = marginal.cdf_increment(lo, hi)

    def cond_cdf(x):
        return np.array([marginal.cdf_increment(lo, min(xi, hi)) / mass for xi in np.atleast_1d(x)])

    rng = np.random.default_rng(99)
    pts = toy_measure.exact_conditional_sample((2,), 100_000, rng)[:, 0]
    assert pts.min() >= lo and pts.max() <= hi
    stat = stats.kstest(pts, cond_cdf).statistic
    assert stat < KS_CRIT / np.sqrt(100_000)


def test_conditional_fraction_matches_child_probability(toy_measure):
    rng = np.random.default_rng(7)
    pts = toy_measure.exact_conditional_sample((), 100_000, rng)
    q = toy_measure.conditional_child_probabilities(())
    frac = float(np.mean(pts[:, 0] >= 0.5))
    sigma = np.sqrt(q[1] * (1 - q[1]) / 100_000)
    assert abs(frac - q[1]) <= 4 * sigma


def test_sample_accepts_seed_or_generator(toy_measure):
    a = toy_measure.exact_conditional_sample((2,), 50, 42)
    b = toy_measure.exact_conditional_sample((2,), 50, np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_empty_sample_valid(toy_measure):
    pts = toy_measure.exact_conditional_sample((), 0, 3)
    assert pts.shape == (0, 1)


def test_uniform_on_cube_matches_uniform_measure():
    uni = cb.UniformMeasure(2)
    cube = cb.decode_cube((3, 2), 2)
    direct = uniform_on_cube(cube, 64, np.random.default_rng(11))
    via_model = uni.exact_conditional_sample((3, 2), 64, np.random.default_rng(11))
    assert np.array_equal(direct, via_model)
    assert cube.contains(direct).all()


def test_density_view_is_density_only(toy_measure):
    view = cb.density_view(toy_measure)
    assert view.unnormalized_density
    assert not view.exact_probability
    assert not view.exact_conditional_sampling
    x = np.array([[0.3], [0.7]])
    assert np.allclose(view.unnorm_density(x), toy_measure.unnorm_density(x))
    with pytest.raises(CapabilityError):
        view.cube_probability(cb.decode_cube((), 1))
    with pytest.raises(CapabilityError):
        view.exact_conditional_sample((), 5, 0)


def test_density_bound_carried(toy_measure):
    view = cb.density_view(toy_measure)
    assert view.density_bound == toy_measure.density_bound


def test_numeric_marginal_agrees_with_closed_form():
    closed = TruncatedNormalMarginal(0.2, 0.2)
    numeric = NumericMarginal(closed.unnorm_pdf)
    for lo, hi in [(0.0, 1.0), (0.5, 1.0), (0.75, 0.875), (0.8125, 0.875), (0.0, 0.25)]:
        assert numeric.cdf_increment(lo, hi) == pytest.approx(
            closed.cdf_increment(lo, hi), rel=1e-9, abs=1e-15
        )
    u = np.linspace(0.05, 0.95, 7)
    assert np.allclose(
        numeric.conditional_ppf(0.5, 0.75, u),
        closed.conditional_ppf(0.5, 0.75, u),
        rtol=1e-7, atol=1e-9,
    )


def test_uniform_marginal_conditional_ppf():
    m = UniformMarginal()
    u = np.array([0.0, 0.5, 1.0])
    assert np.allclose(m.conditional_ppf(0.25, 0.75, u), [0.25, 0.5, 0.75])


def test_truncated_normal_upper_tail_has_relative_precision():
    m = TruncatedNormalMarginal(0.2, 0.2)
    # increments deep in the upper tail must not cancel to garbage: the
    # sum of the two half-interval masses equals the full interval mass
    lo, hi = 13 / 16, 14 / 16
    mid = (lo + hi) / 2
    whole = m.cdf_increment(lo, hi)
    parts = m.cdf_increment(lo, mid) + m.cdf_increment(mid, hi)
    assert parts == pytest.approx(whole, rel=1e-12)
    assert whole > 0


def test_measure_from_config_kinds(toy_measure):
    uni = cb.measure_from_config({"kind": "uniform", "dim": 2})
    assert isinstance(uni, cb.UniformMeasure) and uni.dim == 2
    prod = cb.measure_from_config(
        {"kind": "truncated_normal_product", "mean": [0.2], "std": [0.2]}
    )
    assert prod.path_probability((2,)) == pytest.approx(
        toy_measure.path_probability((2,)), rel=1e-12
    )
    dens = cb.measure_from_config({"kind": "custom_logdensity", "problem": "toy1d"})
    assert dens.unnormalized_density and not dens.exact_probability
    x = np.array([[0.25]])
    assert np.allclose(dens.unnorm_density(x), toy_measure.unnorm_density(x))
    with pytest.raises(ValueError):
        cb.measure_from_config({"kind": "nope"})


def test_truncated_normal_product_helper(toy_measure):
    model = cb.truncated_normal_product([0.2], [0.2])
    assert model.path_probability((2, 2)) == pytest.approx(
        toy_measure.path_probability((2, 2)), rel=0
    )
