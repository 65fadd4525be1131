import math

import numpy as np
import pytest

from cscglue import geometry
from cscglue.curvature import (
    DerivativeScheme,
    christoffel,
    conformal_scalar,
    laplace_beltrami,
    rescale_field,
    scalar_curvature,
)
from cscglue.errors import (
    IllConditionedMetric,
    NonpositiveConformalFactor,
    StencilOutOfChart,
)


@pytest.fixture(scope="module")
def flat3():
    return geometry.flat_metric(3)


@pytest.fixture(scope="module")
def flat5():
    return geometry.flat_metric(5)


def test_flat_christoffel_and_scalar(flat3):
    pt = flat3.point("flat", [0.2, -0.1, 0.4])
    gamma = christoffel(flat3, pt)
    assert np.max(np.abs(gamma)) == 0.0
    s = scalar_curvature(flat3, pt)
    assert abs(s.value) <= 1e-9


def test_christoffel_polar_sphere(fermi_a, model_a):
    k = model_a.k
    # Gamma^r_{theta theta} = -sin r cos r: zero at r = pi/2, exact at r = 1
    pt = fermi_a.point("cap-1", [0.4, 1.0, math.pi / 2, 1.1, 0.7])
    gamma = christoffel(fermi_a, pt)
    assert abs(gamma[k, k + 1, k + 1]) <= 1e-8
    pt = fermi_a.point("cap-1", [0.4, 1.0, 1.0, 1.1, 0.7])
    gamma = christoffel(fermi_a, pt)
    assert gamma[k, k + 1, k + 1] == pytest.approx(-math.sin(1.0) * math.cos(1.0),
                                                   abs=1e-9)


def test_christoffel_lower_symmetry_exact(fermi_b):
    pt = fermi_b.point("cap-1", [1.1, 0.6, 1.5, 0.9, 0.4])
    gamma = christoffel(fermi_b, pt)
    assert np.array_equal(gamma, np.swapaxes(gamma, 1, 2))


def test_mixed_product_symbols_vanish(fermi_b, model_b):
    k = model_b.k
    pt = fermi_b.point("cap-1", [1.1, 0.6, 1.5, 0.9, 0.4])
    gamma = christoffel(fermi_b, pt)
    # tangential-normal mixed symbols of a product metric
    mixed = np.concatenate([
        gamma[:k, k:, :k].ravel(), gamma[k:, :k, k:].ravel(),
        gamma[:k, :k, k:].ravel(),
    ])
    assert np.max(np.abs(mixed)) <= 1e-8


def test_scalar_curvature_sphere3(fermi_a):
    pt = fermi_a.point("cap-1", [0.3, 0.9, 1.3, 1.1, 0.6])
    s = scalar_curvature(fermi_a, pt)
    assert abs(s.value - 6.0) / 6.0 <= 1e-7


def test_scalar_curvature_model_b(fermi_b, rng):
    for _ in range(3):
        pt = fermi_b.point("cap-1", [
            rng.uniform(0.4, 2.6), rng.uniform(0, 6), rng.uniform(1.0, 2.6),
            rng.uniform(0.3, 2.8), rng.uniform(0, 6)])
        s = scalar_curvature(fermi_b, pt)
        assert abs(s.value - 7.0) / 7.0 <= 1e-6


def test_error_estimate_honest_under_refinement(fermi_a, fermi_b, flat3):
    cases = [
        (fermi_a, ("cap-1", np.array([0.3, 0.9, 1.3, 1.1, 0.6]))),
        (fermi_b, ("cap-1", np.array([1.1, 0.6, 1.5, 0.9, 0.4]))),
        (flat3, ("flat", np.array([0.2, -0.1, 0.4]))),
    ]
    for field, point in cases:
        coarse = scalar_curvature(field, point, DerivativeScheme(2e-3, 2))
        fine = scalar_curvature(field, point, DerivativeScheme(1e-3, 3))
        assert abs(fine.value - coarse.value) < coarse.error


def test_laplace_constant(flat3, fermi_a):
    for field, point in ((flat3, ("flat", np.array([0.1, 0.2, 0.3]))),
                         (fermi_a, ("cap-1", np.array([0.3, 0.9, 1.3, 1.1, 0.6])))):
        lap = laplace_beltrami(field, lambda x: 1.0 + 0.0 * x[..., 0], point)
        assert abs(lap.value) <= 1e-10


def test_laplace_harmonic_inverse_radius(flat3, rng):
    # |x|^{2-n} with n = 3 is euclidean-harmonic
    for _ in range(10):
        p = rng.uniform(0.3, 0.9) * _unit(rng)
        lap = laplace_beltrami(flat3, lambda x: 1.0 / np.linalg.norm(x, axis=-1),
                               flat3.point("flat", p))
        assert abs(lap.value) <= 1e-6


def _unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def test_laplace_sphere_eigenfunction(fermi_a, model_a):
    # cos r is the first rotationally symmetric eigenfunction on round S^3
    k = model_a.k
    for r in (1.2, 2.2, 2.6):
        pt = fermi_a.point("cap-1", [0.3, 0.9, r, 1.1, 0.6])
        lap = laplace_beltrami(fermi_a, lambda x: np.cos(x[..., k]), pt)
        assert abs(lap.value + 3.0 * math.cos(r)) / (3.0 * abs(math.cos(r))) <= 1e-5


def test_laplace_product_splits(fermi_a, model_a):
    # Delta(u(z) v(r)) = v Delta_K u + u Delta_N v on the product
    k = model_a.k
    z1, r = 0.7, 1.2
    pt = fermi_a.point("cap-1", [z1, 0.9, r, 1.1, 0.6])
    lap = laplace_beltrami(
        fermi_a, lambda x: np.sin(x[..., 0]) * np.cos(x[..., k]), pt)
    # Delta_{T^2} sin z1 = -sin z1; Delta_{S^3} cos r = -3 cos r
    exact = -math.sin(z1) * math.cos(r) - 3.0 * math.sin(z1) * math.cos(r)
    assert abs(lap.value - exact) / abs(exact) <= 1e-6


def test_conformal_identity_factor(fermi_a):
    pt = fermi_a.point("cap-1", [0.3, 0.9, 1.3, 1.1, 0.6])
    s = scalar_curvature(fermi_a, pt)
    c = conformal_scalar(fermi_a, lambda x: 1.0 + 0.0 * x[..., 0], pt, dim=5)
    assert c.value == pytest.approx(s.value, rel=1e-9)


def test_conformal_stereographic_sphere5(flat5):
    u = lambda x: (2.0 / (1.0 + np.sum(x**2, axis=-1))) ** 1.5
    for p in ([0.3, -0.2, 0.1, 0.25, -0.15], [0.0, 0.4, 0.0, -0.3, 0.2]):
        c = conformal_scalar(flat5, u, flat5.point("flat", p), dim=5)
        assert abs(c.value - 20.0) / 20.0 <= 1e-5


def _random_factor(rng, m):
    a = rng.uniform(-0.3, 0.3, size=m)
    b = rng.uniform(0.5, 2.0)

    def u(x):
        return np.exp(np.tensordot(np.sin(b * x), a, axes=([-1], [0])))

    return u


def test_conformal_vs_rescaled_field(flat3, flat5, fermi_a, fermi_b, rng):
    cases = []
    for _ in range(5):
        cases.append((flat3, ("flat", rng.uniform(-0.5, 0.5, size=3)), 3))
        cases.append((flat5, ("flat", rng.uniform(-0.5, 0.5, size=5)), 5))
        cases.append((fermi_a, ("cap-1", np.array([
            rng.uniform(0, 6), rng.uniform(0, 6), rng.uniform(1.1, 2.5),
            rng.uniform(0.4, 2.7), rng.uniform(0, 6)])), 5))
        cases.append((fermi_b, ("cap-1", np.array([
            rng.uniform(0.4, 2.6), rng.uniform(0, 6), rng.uniform(1.1, 2.5),
            rng.uniform(0.4, 2.7), rng.uniform(0, 6)])), 5))
    assert len(cases) == 20
    for field, point, d in cases:
        u = _random_factor(rng, field.dim)
        a = conformal_scalar(field, u, point, dim=d)
        b = scalar_curvature(rescale_field(field, u, d), point)
        scale = max(abs(a.value), 1.0)
        assert abs(a.value - b.value) / scale <= 1e-5


def test_conformal_cocycle(fermi_a, rng):
    point = ("cap-1", np.array([0.3, 0.9, 1.5, 1.1, 0.6]))
    u1 = _random_factor(rng, 5)
    u2 = _random_factor(rng, 5)
    both = conformal_scalar(fermi_a, lambda x: u1(x) * u2(x), point, dim=5)
    staged = conformal_scalar(rescale_field(fermi_a, u1, 5), u2, point, dim=5)
    scale = max(abs(both.value), 1.0)
    assert abs(both.value - staged.value) / scale <= 1e-5


def test_nonpositive_conformal_factor(fermi_a):
    pt = fermi_a.point("cap-1", [0.3, 0.9, 1.3, 1.1, 0.6])
    with pytest.raises(NonpositiveConformalFactor):
        conformal_scalar(fermi_a, lambda x: x[..., 2] - 1.3, pt, dim=5)


def test_ill_conditioned_metric_raises():
    chart = geometry.Chart("flat", ("x1", "x2"), (-1, -1), (1, 1),
                           (-1, -1), (1, 1), (False, False))

    def comps(chart_id, x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1e-13
        return out

    field = geometry.MetricField(2, (chart,), comps)
    with pytest.raises(IllConditionedMetric):
        scalar_curvature(field, ("flat", np.array([0.0, 0.0])))


def test_stencil_out_of_chart(fermi_a):
    pt = fermi_a.point("cap-1", [0.3, 0.9, 1.3, 0.0015, 0.6])
    with pytest.raises(StencilOutOfChart):
        scalar_curvature(fermi_a, pt)
