import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from gravlasov import oracles
from gravlasov.initial_data import (
    InitialDataParams, TruncationParams, beta_admissible, beta_ceiling, eval_f0,
    eval_f0_truncated, mean_spacing, restrict_to_support, sample_ensemble, spatial_mass,
    truncated_mass, velocity_fraction,
)

UNIT = InitialDataParams(1.0, 1.0, 2.0)


def test_f0_reference_values():
    assert eval_f0(UNIT, [0, 0, 0], [0, 0, 0]) == pytest.approx(1.0, rel=1e-15)
    assert eval_f0(UNIT, [1, 0, 0], [0, 0, 0]) == pytest.approx(0.25, rel=1e-15)
    p = InitialDataParams(2.0, 0.5, 2.0)
    assert eval_f0(p, [0, 0, 0], [math.sqrt(2), 0, 0]) == pytest.approx(2 * math.exp(-1),
                                                                       rel=1e-15)
    assert 2 * math.exp(-1) == pytest.approx(0.7357589, abs=1e-7)


def test_truncation_zeroes_outside_support():
    assert eval_f0_truncated(UNIT, TruncationParams(10.0, 0.3), [0, 0, 0], [0, 0, 0]) == 1.0
    t = TruncationParams(4.0, 0.5)  # spatial radius 2
    assert eval_f0_truncated(UNIT, t, [0, 0, 0], [5, 0, 0]) == 0.0
    assert eval_f0_truncated(UNIT, t, [3, 0, 0], [0, 0, 0]) == 0.0
    assert eval_f0_truncated(UNIT, t, [1, 0, 0], [1, 0, 0]) == eval_f0(UNIT, [1, 0, 0], [1, 0, 0])


def test_vectorised_evaluation_matches_pointwise(rng):
    x = rng.normal(size=(50, 3)) * 2
    v = rng.normal(size=(50, 3))
    t = TruncationParams(2.0, 0.5)
    vals = eval_f0_truncated(UNIT, t, x, v)
    for i in range(50):
        assert vals[i] == eval_f0_truncated(UNIT, t, x[i], v[i])


def test_alpha_must_exceed_one():
    with pytest.raises(ValueError, match="alpha > 1"):
        InitialDataParams(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        InitialDataParams(-1.0, 1.0, 2.0)


def test_beta_ceiling():
    assert beta_ceiling(2.0) == pytest.approx(0.4)
    assert beta_ceiling(1.5) == pytest.approx(2 / 7.5)
    assert beta_admissible(2.0, 0.3)
    assert not beta_admissible(2.0, 0.4)
    assert math.isinf(beta_ceiling(3.5))


def test_velocity_factor_untruncated_limit():
    # C1 (pi/lambda)^{3/2} at lambda = 1
    assert velocity_fraction(1.0, 1e3) * math.pi ** 1.5 == pytest.approx(5.568328, rel=1e-6)


@pytest.mark.parametrize("lam,n", [(1.0, 0.5), (1.0, 2.0), (0.3, 1.7), (4.0, 0.9)])
def test_velocity_fraction_matches_incomplete_gamma(lam, n):
    assert velocity_fraction(lam, n) == pytest.approx(special.gammainc(1.5, lam * n * n), rel=1e-10)


@pytest.mark.parametrize("alpha", [1.5, 2.0, 2.5, 3.0, 3.5])
@pytest.mark.parametrize("radius", [0.3, 1.0, 7.5])
def test_spatial_mass_against_antiderivative(alpha, radius):
    closed = oracles.spatial_mass_closed_form(alpha, radius)
    assert spatial_mass(alpha, radius) == pytest.approx(closed, rel=1e-10)


def test_truncated_mass_reference_case():
    t = TruncationParams(5.0, 0.4)
    closed = math.pi ** 1.5 * special.gammainc(1.5, 25.0) * oracles.spatial_mass_closed_form(
        2.0, t.radius)
    m = truncated_mass(UNIT, t)
    assert m == pytest.approx(closed, rel=1e-10)
    mc, se = oracles.mc_truncated_mass(UNIT, t, samples=2_000_000, seed=5)
    assert se / mc < 1e-3
    # three significant digits
    assert abs(m - mc) < 0.5 * 10 ** (math.floor(math.log10(m)) - 2)


def test_truncated_mass_growth_bounded():
    # r^2 (1+r)^-alpha <= r^{2-alpha} bounds M^N by a multiple of N^{beta(3-alpha)}
    beta, alpha = 0.3, 2.0
    bound = UNIT.c1 * math.pi ** 1.5 * 4 * math.pi / (3 - alpha)
    for n in (10, 20, 40, 80):
        m = truncated_mass(UNIT, TruncationParams(n, beta))
        assert m / n ** (beta * (3 - alpha)) <= bound


@settings(max_examples=40, deadline=None)
@given(n=st.floats(0.5, 50), dn=st.floats(0.01, 10), beta=st.floats(0.05, 0.6),
       db=st.floats(0.01, 0.3), c1=st.floats(0.01, 5))
def test_truncated_mass_monotone(n, dn, beta, db, c1):
    p = InitialDataParams(c1, 1.0, 2.0)
    base = truncated_mass(p, TruncationParams(n, beta))
    assert truncated_mass(p, TruncationParams(n + dn, beta)) >= base
    if n > 1:
        assert truncated_mass(p, TruncationParams(n, beta + db)) >= base
    assert truncated_mass(InitialDataParams(2 * c1, 1.0, 2.0), TruncationParams(n, beta)) >= base


@settings(max_examples=60, deadline=None)
@given(x=st.lists(st.floats(-20, 20), min_size=3, max_size=3),
       v=st.lists(st.floats(-20, 20), min_size=3, max_size=3),
       n=st.floats(0.1, 30), beta=st.floats(0.05, 1.0))
def test_truncated_datum_properties(x, v, n, beta):
    t = TruncationParams(n, beta)
    ft = eval_f0_truncated(UNIT, t, x, v)
    assert 0.0 <= ft <= eval_f0(UNIT, x, v)
    # radially nonincreasing in |x|
    x2 = 1.5 * np.asarray(x)
    assert eval_f0(UNIT, x2, v) <= eval_f0(UNIT, x, v)


def test_sample_supports_and_mass():
    p = InitialDataParams(0.7, 1.3, 2.2)
    t = TruncationParams(3.0, 0.35)
    ens = sample_ensemble(p, t, 5000, seed=11)
    assert np.all(np.linalg.norm(ens.x, axis=1) <= t.radius)
    assert np.all(np.linalg.norm(ens.v, axis=1) <= t.n_cut)
    assert np.all(ens.w >= 0)
    assert ens.total_mass == pytest.approx(truncated_mass(p, t), rel=1e-12)
    assert np.array_equal(ens.ids, np.arange(5000))


def test_sampling_deterministic_and_chunk_invariant():
    t = TruncationParams(8.0, 0.3)
    a = sample_ensemble(UNIT, t, 3000, seed=4)
    b = sample_ensemble(UNIT, t, 3000, seed=4, chunk=257)
    c = sample_ensemble(UNIT, t, 3000, seed=5)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.v, b.v)
    assert not np.array_equal(a.x, c.x)
    # a prefix of a larger sample is the smaller sample
    d = sample_ensemble(UNIT, t, 1000, seed=4)
    assert np.array_equal(d.x, a.x[:1000]) and np.array_equal(d.v, a.v[:1000])


@pytest.mark.parametrize("alpha", [1.5, 2.0, 2.5])
def test_radial_marginal_ks(alpha):
    p = InitialDataParams(1.0, 1.0, alpha)
    t = TruncationParams(16.0, 0.3)
    ens = sample_ensemble(p, t, 100_000, seed=21)
    r = np.linalg.norm(ens.x, axis=1)
    total = oracles.spatial_mass_closed_form(alpha, t.radius)
    cdf = np.vectorize(lambda s: oracles.spatial_mass_closed_form(alpha, s) / total)
    assert stats.kstest(r, cdf).pvalue > 1e-3


def test_speed_marginal_ks():
    lam, n = 1.7, 1.1
    t = TruncationParams(n, 0.3)
    ens = sample_ensemble(InitialDataParams(1.0, lam, 2.0), t, 50_000, seed=8)
    speed = np.linalg.norm(ens.v, axis=1)
    # speed density ~ u^2 exp(-lam u^2) on [0, n], integrated by quadrature
    norm = integrate.quad(lambda u: u * u * math.exp(-lam * u * u), 0, n)[0]
    cdf = np.vectorize(lambda s: integrate.quad(
        lambda u: u * u * math.exp(-lam * u * u), 0, min(s, n))[0] / norm)
    assert stats.kstest(speed[:5000], cdf).pvalue > 1e-3


def test_truncated_kinetic_moment():
    lam, n = 1.0, 1.2
    t = TruncationParams(n, 0.3)
    ens = sample_ensemble(InitialDataParams(1.0, lam, 2.0), t, 100_000, seed=3)
    num = integrate.quad(lambda u: u ** 4 * math.exp(-lam * u * u), 0, n)[0]
    den = integrate.quad(lambda u: u ** 2 * math.exp(-lam * u * u), 0, n)[0]
    v2 = np.einsum("ij,ij->i", ens.v, ens.v)
    se = v2.std() / math.sqrt(len(v2))
    assert abs(v2.mean() - num / den) < 5 * se


def test_restriction_keeps_weights_and_ids():
    big = TruncationParams(32.0, 0.3)
    small = TruncationParams(8.0, 0.3)
    ens = sample_ensemble(UNIT, big, 4000, seed=2)
    sub = restrict_to_support(ens, small)
    keep = (np.linalg.norm(ens.x, axis=1) <= small.radius) & (
        np.linalg.norm(ens.v, axis=1) <= small.n_cut)
    assert np.array_equal(sub.ids, ens.ids[keep])
    assert np.array_equal(sub.w, ens.w[keep])
    assert np.array_equal(sub.x, ens.x[keep])
    assert sub.trunc == small


def test_mean_spacing():
    t = TruncationParams(8.0, 0.5)
    assert mean_spacing(t, 1000) == pytest.approx((4 / 3 * math.pi * 8 ** 1.5 / 1000) ** (1 / 3))
