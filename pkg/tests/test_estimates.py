import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import random_field, smooth_field
from gphier import baselines
from gphier.estimates import (
    MollifierConfig,
    collide_low_rank,
    collision_integral_scan,
    continuous_collision_integral,
    energy_ratio,
    energy_ratio_of,
    km_bound_ratio,
    line_integral_weight,
    lp_norm,
    poincare_gap,
    poincare_scaling,
    random_density_ensemble,
    random_symmetric_state,
    sobolev_constant,
    top_generalized_state,
)
from gphier.grid import TorusGrid, WaveFunction, symmetrize
from gphier.hierarchy import collide
from gphier.marginals import ObservableKernel, low_rank_from, projector
from gphier.nbody import NBodyHamiltonian, PotentialSpec, zero_potential


@pytest.mark.parametrize("alpha", [0.6, 0.75, 1.0, 1.3, 1.5])
@pytest.mark.parametrize("M", [0.0, 0.3, 2.0, 17.0])
def test_line_weight_matches_quadrature(alpha, M):
    ref, _ = quad(lambda x: (1 + x * x + M * M) ** (-alpha), -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)
    assert float(line_integral_weight(M, alpha)) == pytest.approx(ref, rel=1e-9)


def test_line_weight_unit_alpha_closed_form():
    M = np.linspace(0, 10, 11)
    assert np.allclose(line_integral_weight(M, 1.0), np.pi / np.sqrt(1 + M**2), rtol=1e-14)


def test_origin_value_and_parts():
    res = continuous_collision_integral(0.0, (0.0, 0.0))
    assert res.first == pytest.approx(2 * np.pi**2, rel=1e-6)
    assert res.second == pytest.approx(np.pi**3 / 2, rel=1e-6)
    assert res.total == pytest.approx(baselines.origin_independent_quadrature(1.0), rel=1e-6)
    assert res.converged


@pytest.mark.parametrize("alpha", [0.75, 1.3])
def test_origin_other_exponents_against_independent_quadrature(alpha):
    res = continuous_collision_integral(0.0, (0.0, 0.0), alpha)
    assert res.total == pytest.approx(baselines.origin_independent_quadrature(alpha), rel=5e-3)


@pytest.mark.parametrize("tau,p", [(0.0, (3.0, 0.0)), (-40.0, (2.0, 5.0)), (75.0, (30.0, -10.0))])
def test_rotation_invariance(tau, p):
    base = continuous_collision_integral(tau, p)
    assert base.converged and base.first >= 0 and base.second >= 0
    r = math.hypot(*p)
    for theta in (0.4, 1.9, 3.7):
        rot = (r * math.cos(theta), r * math.sin(theta))
        assert continuous_collision_integral(tau, rot).total == pytest.approx(base.total, rel=1e-3)


def test_alpha_range_enforced():
    with pytest.raises(ValueError):
        continuous_collision_integral(0.0, (0.0, 0.0), 0.5)
    with pytest.raises(ValueError):
        continuous_collision_integral(0.0, (0.0, 0.0), 1.6)


def test_scan_reuses_rotated_values():
    rows = collision_integral_scan([0.0, -10.0], [-3.0, 0.0, 3.0], [0.0, 4.0], p_max=4.5)
    assert all(math.hypot(r[1], r[2]) <= 4.5 for r in rows)
    by_key = {(r[0], r[1], r[2]): r[3] for r in rows}
    assert by_key[(0.0, -3.0, 0.0)] == by_key[(0.0, 3.0, 0.0)]
    direct = continuous_collision_integral(-10.0, (0.0, 4.0), order=8).total
    assert by_key[(-10.0, 0.0, 4.0)] == pytest.approx(direct, rel=1e-12)


# --- collision bound ratio ----------------------------------------------------------

G2 = TorusGrid(2, np.pi, 8)


def test_km_constant_state_vanishes():
    gamma = projector(np.ones(G2.shape), 2, G2)
    assert km_bound_ratio(gamma, 0.9) <= 1e-10


@given(st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_km_homogeneous_of_degree_zero(c, seed):
    ens = random_density_ensemble(TorusGrid(2, np.pi, 6), 1, 3, seed)[0]
    a = km_bound_ratio(ens, 0.9)
    assert km_bound_ratio(ens.scaled(c), 0.9) == pytest.approx(a, rel=1e-10)


def test_km_low_rank_matches_dense():
    ens = random_density_ensemble(G2, 2, 3, seed=5)
    for g in ens:
        dense = g.to_dense()
        assert np.max(np.abs(collide_low_rank(g) - collide(dense, 1).kernel)) <= 1e-12
        assert km_bound_ratio(g, 0.9) == pytest.approx(km_bound_ratio(dense, 0.9), rel=1e-10)
        assert dense.is_positive() and dense.hermiticity_error() <= 1e-10


def test_km_ensemble_is_reproducible_and_bosonic():
    a = random_density_ensemble(G2, 3, 2, seed=11)
    b = random_density_ensemble(G2, 3, 2, seed=11)
    for x, y in zip(a, b):
        assert np.array_equal(x.vectors, y.vectors)
        assert x.trace() == pytest.approx(1.0, rel=1e-12)
        v = x.vectors[0]
        assert np.max(np.abs(v - np.transpose(v, (2, 3, 0, 1)))) <= 1e-14


def test_km_rejects_zero_density():
    gamma = projector(np.ones(G2.shape), 2, G2).scaled(0.0)
    with pytest.raises(ValueError, match="zero denominator"):
        km_bound_ratio(gamma, 0.9)


# --- energy ratio -----------------------------------------------------------------

G1 = TorusGrid(1, np.pi, 8)
GAUSS = PotentialSpec("periodized-gaussian", 4.0, 0.5)


def test_free_energy_ratio_is_one_on_symmetric_plane_waves():
    H = NBodyHamiltonian(G1, 3, 0.4, zero_potential())
    for js in [(0, 0, 0), (1, 2, 3), (-4, 0, 2), (3, 3, -1)]:
        psi = symmetrize(WaveFunction.product_of(G1, [G1.plane_wave([j]) for j in js]))
        assert energy_ratio_of(H, psi, 1) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(0, 2**31), st.floats(0.01, 3.0))
def test_positive_interaction_only_raises_first_ratio(seed, decay):
    rng = np.random.default_rng(seed)
    psi = random_symmetric_state(G1, 3, rng, decay)
    ratios = [energy_ratio_of(NBodyHamiltonian(G1, 3, 0.4, PotentialSpec("periodized-gaussian", v0, 0.5)), psi, 1)
              for v0 in (0.0, 1.0, 4.0, 16.0)]
    assert ratios[0] >= 1 - 1e-10
    assert all(b >= a - 1e-10 for a, b in zip(ratios, ratios[1:]))


def test_second_ratio_positive():
    H = NBodyHamiltonian(G1, 3, 0.4, GAUSS)
    assert energy_ratio(H, 2, samples=20, seed=1) > 0
    with pytest.raises(ValueError):
        energy_ratio_of(H, random_symmetric_state(G1, 3, np.random.default_rng(0), 1.0), 3)


# --- Sobolev-type constant ------------------------------------------------------------

GS = TorusGrid(2, np.pi, 32)


@pytest.mark.parametrize("p_norm", [1.0, 2.0, np.inf])
def test_sobolev_constant_for_constant_potential(p_norm):
    c = 2.5
    vals = np.full(GS.shape, c)
    vol = (2 * GS.L) ** 2
    assert sobolev_constant(vals, GS, p_norm, samples=8) == pytest.approx(vol ** (-1 / p_norm), rel=1e-12)


@given(st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_sobolev_ratio_scale_invariant(c, seed):
    from gphier.estimates import _rayleigh

    V = GAUSS.values(GS)
    psi = random_field(GS, np.random.default_rng(seed)).values
    assert _rayleigh(V, c * psi, GS) == pytest.approx(_rayleigh(V, psi, GS), rel=1e-10)


def test_power_iteration_finds_the_maximizer():
    V = PotentialSpec("periodized-gaussian", 1.0, 0.5).values(GS)
    from gphier.estimates import _rayleigh

    best = _rayleigh(V, top_generalized_state(V, GS), GS)
    rng = np.random.default_rng(2)
    for _ in range(20):
        assert _rayleigh(V, random_field(GS, rng, decay=0.1).values, GS) <= best * (1 + 1e-9)


def test_sobolev_width_sweep():
    grid = TorusGrid(2, np.pi, 64)
    widths = (0.8, 0.4, 0.2, 0.1)
    pots = [PotentialSpec("periodized-gaussian", 1 / (2 * np.pi * w * w), w) for w in widths]
    assert all(lp_norm(v.values(grid), grid, 1) == pytest.approx(1.0, rel=1e-6) for v in pots)
    l1 = [sobolev_constant(v, grid, 1.0, samples=16) for v in pots]
    l2 = [sobolev_constant(v, grid, 2.0, samples=16) for v in pots]
    assert all(b > a for a, b in zip(l1, l1[1:])) and l1[-1] >= 3 * l1[0]
    assert max(l2) <= 1.05 * l2[0]


def test_sobolev_constant_stable_under_refinement():
    V = PotentialSpec("periodized-gaussian", 1.0, 0.4)
    coarse = sobolev_constant(V, TorusGrid(2, np.pi, 32), 2.0, samples=8)
    fine = sobolev_constant(V, TorusGrid(2, np.pi, 64), 2.0, samples=8)
    assert fine == pytest.approx(coarse, rel=0.02)


def test_sobolev_constant_rejects_small_p():
    with pytest.raises(ValueError):
        sobolev_constant(GAUSS, GS, 0.5)


# --- mollifier scaling ---------------------------------------------------------------

GP = TorusGrid(1, np.pi, 64)


def rank_one_pair(grid, phi):
    return low_rank_from(grid, 2, [1.0], [np.multiply.outer(phi, phi)])


def observable(grid):
    chi = np.exp(np.sin(grid.mesh()[0]))
    return ObservableKernel(grid, 1, np.multiply.outer(chi, chi.conj()))


@pytest.mark.parametrize("mult", [4, 6, 20])
def test_mollifier_is_probability_density(mult):
    h = MollifierConfig(alpha_moll=mult * GP.h).values(GP)
    assert np.all(h >= 0)
    assert GP.h * np.sum(h) == pytest.approx(1.0, abs=1e-8)


def test_mollifier_validation():
    with pytest.raises(ValueError):
        MollifierConfig(profile="box")
    with pytest.raises(ValueError):
        MollifierConfig(alpha_moll=0.0)


def test_constant_state_has_zero_gap():
    phi = np.ones(GP.shape, dtype=complex) / np.sqrt(2 * np.pi)
    gamma2 = rank_one_pair(GP, phi)
    fit = poincare_scaling(gamma2, observable(GP), MollifierConfig(), np.geomspace(4 * GP.h, 40 * GP.h, 5))
    assert np.all(fit.gaps <= 1e-13)
    assert not fit.used.any() and math.isnan(fit.slope)


def test_low_rank_gap_matches_dense():
    g = TorusGrid(1, np.pi, 16)
    phi = smooth_field(g).values
    lr = rank_one_pair(g, phi)
    moll = MollifierConfig(alpha_moll=5 * g.h)
    J = observable(g)
    assert poincare_gap(lr, J, moll) == pytest.approx(poincare_gap(lr.to_dense(), J, moll), rel=1e-10)


def test_gap_decreases_toward_grid_floor():
    phi = smooth_field(GP).values
    fit = poincare_scaling(rank_one_pair(GP, phi), observable(GP), MollifierConfig(),
                           np.geomspace(4 * GP.h, 40 * GP.h, 6))
    assert np.all(np.diff(fit.gaps) > 0)
    assert fit.slope >= 0.9


def test_scales_below_four_spacings_rejected():
    phi = smooth_field(GP).values
    with pytest.raises(ValueError, match="grid spacings"):
        poincare_scaling(rank_one_pair(GP, phi), observable(GP), MollifierConfig(), [2 * GP.h, 10 * GP.h])
