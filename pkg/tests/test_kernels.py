import numpy as np
import pytest
from scipy.special import gamma, kv

from stableopt.kernels import KernelSpec, cross, evaluate, gram, prior_variances


def matern_bessel_oracle(r, lengthscale, nu):
    """General Matern form via the modified Bessel function of the second kind."""
    if r == 0.0:
        return 1.0
    a = np.sqrt(2.0 * nu) * r / lengthscale
    return (2.0 ** (1.0 - nu) / gamma(nu)) * a**nu * kv(nu, a)


def test_se_zero_distance_is_one():
    spec = KernelSpec.se(1.0)
    assert evaluate(spec, [0.3, -0.2], [0.3, -0.2]) == 1.0


def test_se_unit_distance():
    spec = KernelSpec.se(1.0)
    assert evaluate(spec, [0.0], [1.0]) == pytest.approx(np.exp(-0.5), abs=1e-12)


def test_se_ard_lengthscales():
    spec = KernelSpec.se((0.5, 2.0))
    x, z = np.array([0.0, 0.0]), np.array([1.0, 1.0])
    expected = np.exp(-0.5 * (1.0 / 0.25 + 1.0 / 4.0))
    assert evaluate(spec, x, z) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
def test_matern_closed_form_matches_bessel(nu):
    spec = KernelSpec.matern(nu, 1.0)
    rng = np.random.default_rng(0)
    for r in rng.uniform(1e-3, 5.0, size=100):
        ours = evaluate(spec, [0.0], [r])
        assert ours == pytest.approx(matern_bessel_oracle(r, 1.0, nu), abs=1e-8)


def test_matern_52_unit_distance_against_bessel():
    spec = KernelSpec.matern(2.5, 1.0)
    value = evaluate(spec, [0.0], [1.0])
    assert value == pytest.approx(matern_bessel_oracle(1.0, 1.0, 2.5), abs=1e-9)
    r = 1.0
    closed = (1.0 + np.sqrt(5) * r + 5.0 * r * r / 3.0) * np.exp(-np.sqrt(5) * r)
    assert value == pytest.approx(closed, rel=1e-14)


def test_linear_kernel_is_dot_product():
    spec = KernelSpec.linear()
    assert evaluate(spec, [1.0, 2.0], [3.0, -1.0]) == pytest.approx(1.0)


def test_composites_combine_children():
    se = KernelSpec.se(1.0)
    lin = KernelSpec.linear()
    x, z = [0.5], [1.5]
    assert evaluate(KernelSpec.sum_of(se, lin), x, z) == pytest.approx(
        evaluate(se, x, z) + evaluate(lin, x, z)
    )
    assert evaluate(KernelSpec.product_of(se, lin), x, z) == pytest.approx(
        evaluate(se, x, z) * evaluate(lin, x, z)
    )


def test_signal_variance_scales_diagonal():
    spec = KernelSpec.se(1.0, signal_variance=3.5)
    assert evaluate(spec, [0.0], [0.0]) == pytest.approx(3.5)


def test_dimension_mismatch_rejected():
    spec = KernelSpec.se(1.0)
    with pytest.raises(ValueError):
        evaluate(spec, [0.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        cross(KernelSpec.se((1.0, 1.0, 1.0)), np.zeros((2, 2)), np.zeros((2, 2)))


@pytest.mark.parametrize(
    "bad",
    [
        dict(family="squared-exponential", lengthscales=(0.0,)),
        dict(family="squared-exponential", lengthscales=(-1.0,)),
        dict(family="matern", lengthscales=(1.0,), nu=2.0),
        dict(family="squared-exponential", lengthscales=(1.0,), signal_variance=0.0),
        dict(family="sum-composite"),
    ],
)
def test_invalid_specs_rejected(bad):
    with pytest.raises(ValueError):
        KernelSpec(**bad)


def test_gram_empty_and_single():
    spec = KernelSpec.se(1.0)
    assert gram(spec, []).shape == (0, 0)
    single = gram(spec, [[0.7]])
    assert single.shape == (1, 1)
    assert single[0, 0] == 1.0


def test_gram_exact_symmetry_and_unit_diagonal():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-2, 2, size=(30, 3))
    for spec in (KernelSpec.se((0.5, 1.0, 2.0)), KernelSpec.matern(1.5, 0.8)):
        K = gram(spec, pts)
        assert np.array_equal(K, K.T)
        assert np.array_equal(np.diag(K), np.ones(30))


def test_gram_three_points_eigenvalues():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 1, size=(3, 2))
    K = gram(KernelSpec.se(1.0), pts) + 1e-10 * np.eye(3)
    assert np.min(np.linalg.eigvalsh(K)) >= -1e-10


@pytest.mark.parametrize(
    "spec",
    [
        KernelSpec.se(0.7),
        KernelSpec.matern(0.5, 1.2),
        KernelSpec.matern(2.5, 0.4),
        KernelSpec.sum_of(KernelSpec.se(1.0), KernelSpec.matern(1.5, 0.5)),
    ],
)
def test_gram_positive_semidefinite(spec):
    rng = np.random.default_rng(3)
    for n in (5, 20, 50):
        pts = rng.uniform(-3, 3, size=(n, 2))
        K = gram(spec, pts) + 1e-10 * np.eye(n)
        assert np.min(np.linalg.eigvalsh(K)) >= 0.0


@pytest.mark.parametrize(
    "spec",
    [KernelSpec.se(1.0), KernelSpec.matern(0.5, 1.0), KernelSpec.matern(2.5, 1.0)],
)
def test_monotone_decay_in_distance(spec):
    rng = np.random.default_rng(4)
    radii = np.sort(rng.uniform(0.0, 4.0, size=50))
    values = [evaluate(spec, [0.0], [r]) for r in radii]
    assert np.all(np.diff(values) <= 0.0)


def test_evaluate_symmetric_in_arguments():
    rng = np.random.default_rng(5)
    for spec in (KernelSpec.se((0.5, 1.5)), KernelSpec.matern(1.5, 0.9)):
        for _ in range(20):
            x, z = rng.uniform(-2, 2, size=(2, 2))
            assert evaluate(spec, x, z) == evaluate(spec, z, x)


def test_prior_variances_match_diagonal():
    rng = np.random.default_rng(6)
    pts = rng.uniform(-1, 1, size=(10, 2))
    for spec in (
        KernelSpec.se((0.5, 1.0), signal_variance=2.0),
        KernelSpec.linear(signal_variance=0.5),
        KernelSpec.product_of(KernelSpec.se(1.0), KernelSpec.linear()),
    ):
        assert np.allclose(prior_variances(spec, pts), np.diag(gram(spec, pts)))


def test_config_round_trip():
    composite = KernelSpec.sum_of(
        KernelSpec.se((0.3, 0.7), signal_variance=2.0),
        KernelSpec.matern(1.5, 1.1),
    )
    for spec in (KernelSpec.se(0.25), KernelSpec.matern(2.5, (1.0, 2.0)), composite):
        assert KernelSpec.from_config(spec.to_config()) == spec


def test_family_aliases():
    assert KernelSpec("se", (1.0,)) == KernelSpec("squared-exponential", (1.0,))
