import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from treeprune.dyadic_tree import REGULAR, build_index, tree_levels
from treeprune.ici import IciConfig, ici_predict_batch
from treeprune.synth import (CONSTANT, LINEAR_1D, PathologicalMeasure, PowerMeasure, SyntheticSpec,
                             UniformMeasure, bayes_risk_mc, eta_true, excess_risk_at, excess_risk_mc,
                             power_box_integral, sample_synthetic)


# -- specs ------------------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(2, 0, 3.0, LINEAR_1D, 0.5, "oneDExample")
    with pytest.raises(ValueError):
        SyntheticSpec(3, 0, 2.0, "sine", 0.5, "pathological")
    with pytest.raises(ValueError):
        SyntheticSpec(3, 3, 2.0)
    with pytest.raises(ValueError):
        SyntheticSpec(3, 0, -1.0)
    with pytest.raises(ValueError):
        SyntheticSpec(3, 0, 1.0, family="bogus")


# -- quadrature oracles ---------------------------------------------------------------

@pytest.mark.parametrize("nu", [0.0, 1.0, 2.5, 5.0])
def test_power_box_integral_1d_closed_form(nu):
    got = power_box_integral([[0.2]], [[0.7]], nu)[0]
    assert got == pytest.approx((0.7 ** (nu + 1) - 0.2 ** (nu + 1)) / (nu + 1))


@pytest.mark.parametrize("nu", [1.0, 3.0, 5.0])
def test_power_box_integral_2d_matches_nquad(nu):
    lo, hi = (0.1, 0.3), (0.6, 0.8)
    want, _ = integrate.nquad(lambda x, y: math.hypot(x, y) ** nu, [[lo[0], hi[0]], [lo[1], hi[1]]])
    assert power_box_integral([lo], [hi], nu)[0] == pytest.approx(want, rel=1e-8)


@pytest.mark.parametrize("dim,k,nu", [(2, 0, 3.0), (3, 1, 2.0), (5, 0, 5.0), (5, 4, 1.0)])
def test_power_measure_total_mass_one(dim, k, nu):
    m = PowerMeasure(dim, k, nu)
    assert m.rect_mass(np.zeros(dim), np.ones(dim))[0] == pytest.approx(1.0, rel=1e-7)
    assert m.cell_masses(2).sum() == pytest.approx(1.0, rel=1e-7)


def test_acceptance_closed_forms():
    assert PowerMeasure(2, 0, 2.0).acceptance == pytest.approx((2 / 3) / 2)
    assert PowerMeasure(1, 0, 3.0).acceptance == pytest.approx(0.25)
    assert PowerMeasure(4, 0, 0.0).acceptance == 1.0


@pytest.mark.parametrize("dim,k,nu", [(2, 0, 3.0), (3, 1, 2.0), (5, 0, 5.0)])
def test_rejection_acceptance_within_3_se(dim, k, nu):
    m = PowerMeasure(dim, k, nu)
    _, proposed = m.sample(20000, np.random.default_rng(dim), return_proposals=True)
    p = m.acceptance
    se = math.sqrt(p * (1 - p) / proposed)
    assert abs(20000 / proposed - p) <= 3 * se


# -- sampling -----------------------------------------------------------------------

def test_nu_zero_is_uniform():
    _, proposed = PowerMeasure(3, 0, 0.0).sample(500, np.random.default_rng(0), return_proposals=True)
    assert proposed == 500


def test_one_d_cdf():
    X = sample_synthetic(SyntheticSpec.one_d(3.0), "source", 10 ** 5, 11).X[:, 0]
    for t in (0.25, 0.5, 0.75):
        assert abs(np.mean(X <= t) - t ** 4) <= 0.02


def test_k0_density_is_norm_power():
    m = PowerMeasure(2, 0, 3.0)
    x = np.array([[0.3, 0.4]])
    assert m.density(x)[0] * m.normalizer == pytest.approx(0.5 ** 3)


def test_singular_subspace_distance():
    m = PowerMeasure(3, 1, 2.0)
    # distance to {x2 = x3 = 0} ignores the first coordinate
    assert m.distance([[0.9, 0.3, 0.4]])[0] == pytest.approx(0.5)


def test_target_is_uniform_and_tagged():
    spec = SyntheticSpec.singular_power(0, 5.0, 5)
    t = sample_synthetic(spec, "target", 20000, 1)
    assert (t.origin == 0).all() and t.dim == 5
    assert abs(t.X.mean() - 0.5) < 0.01
    s = sample_synthetic(spec, "source", 100, 1)
    assert (s.origin == 1).all()
    assert len(sample_synthetic(spec, "source", 0, 1)) == 0
    with pytest.raises(ValueError):
        sample_synthetic(spec, "source", -1, 0)
    with pytest.raises(ValueError):
        sample_synthetic(spec, "holdout", 1, 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(["source", "target"]), st.integers(0, 3))
def test_generators_deterministic(seed, role, k):
    spec = SyntheticSpec.singular_power(k, 5.0 - k, 5)
    a, b = sample_synthetic(spec, role, 50, seed), sample_synthetic(spec, role, 50, seed)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    assert ((a.X >= 0) & (a.X <= 1)).all()


def test_labels_follow_eta():
    spec = SyntheticSpec.one_d(3.0)
    d = sample_synthetic(spec, "target", 40000, 2)
    hi = d.X[:, 0] > 0.8
    assert abs(d.y[hi].mean() - 0.9) < 0.02


# -- pathological pair ------------------------------------------------------------------

def test_pathological_masses():
    P, Q = PathologicalMeasure("P"), PathologicalMeasure("Q")
    for m in (P, Q):
        assert m.cell_masses(6).sum() == pytest.approx(1.0, rel=1e-9)
        assert m.rect_mass([0, 0], [1, 1])[0] == pytest.approx(1.0, rel=1e-9)
    # P and Q agree on every B_i and the atom sits at (0, 1)
    for i in range(4):
        c, s = Q.corner[i], Q.side[i]
        assert P.rect_mass(c - s, c)[0] == pytest.approx(Q.rect_mass(c - s, c)[0])
    assert P.atom_mass > 0 and Q.atom_mass == 0
    assert P.rect_mass([0, 0.99], [0.01, 1.0])[0] >= P.atom_mass


def test_pathological_sampler_matches_masses():
    P = PathologicalMeasure("P")
    X = P.sample(50000, np.random.default_rng(0))
    box = ([0.5, 0.0], [1.0, 0.5])  # contains B_1 and B'_1
    inside = np.all((X >= box[0]) & (X < box[1]), axis=1).mean()
    assert abs(inside - P.rect_mass(*box)[0]) < 0.01
    assert abs((X == [0.0, 1.0]).all(axis=1).mean() - P.atom_mass) < 0.01


def test_uniform_cells():
    assert UniformMeasure(2).cell_masses(3).ravel() == pytest.approx(np.full(64, 1 / 64))


# -- eta, Bayes and excess risk -----------------------------------------------------------

def test_eta_examples():
    sine = SyntheticSpec.singular_power(0, 5.0, 5)
    assert eta_true(sine, np.zeros(5)) == pytest.approx(0.5)
    assert eta_true(sine, [0.5, 0, 0, 0, 0]) == pytest.approx(1.0)
    assert eta_true(SyntheticSpec.one_d(), 0.37) == pytest.approx(0.37)
    assert eta_true(SyntheticSpec.one_d(), [0.37]) == pytest.approx(0.37)


@pytest.mark.parametrize("c", [1.0, 0.5, 0.2])
def test_bayes_risk_constant_eta(c):
    spec = SyntheticSpec(2, 0, 1.0, CONSTANT, c)
    assert abs(bayes_risk_mc(spec, 1000, 0) - min(c, 1 - c)) <= 3 / math.sqrt(1000)


def test_bayes_risk_linear_one_d():
    # E min(X, 1 - X) = 1/4 under the uniform target
    assert abs(bayes_risk_mc(SyntheticSpec.one_d(), 10 ** 5, 1) - 0.25) < 0.005


def test_excess_risk_bayes_and_anti_bayes():
    spec = SyntheticSpec.one_d()
    bayes = lambda X: (X[:, 0] >= 0.5).astype(int)
    assert excess_risk_mc(bayes, spec, 10 ** 4, 0) == 0.0
    anti = excess_risk_mc(lambda X: 1 - bayes(X), spec, 10 ** 5, 0)
    assert abs(anti - 0.5) < 0.01
    with pytest.raises(ValueError):
        excess_risk_at([0, 1], spec, [[0.1]])


def test_ici_excess_risk_decreases_with_source_size():
    spec = SyntheticSpec.one_d(3.0)
    Xt = np.random.default_rng(99).random((20000, 1))
    means = []
    for n in (256, 4096):
        vals = []
        for seed in range(10):
            data = sample_synthetic(spec, "source", n, seed)
            index = build_index(data, tree_levels(n, 0, 1, REGULAR)[-1], REGULAR)
            vals.append(excess_risk_at(ici_predict_batch(index, Xt, IciConfig()), spec, Xt))
        means.append(np.mean(vals))
    assert means[1] < means[0]
