import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_field, smooth_field
from gphier.grid import FieldState, TorusGrid
from gphier.hierarchy import (
    HierarchyState,
    collide,
    collide_all,
    collide_factorized,
    duhamel_errors,
    duhamel_term,
    free_propagate,
    hierarchy_residual,
    kinetic_commutator,
)
from gphier.marginals import DensityMatrix, projector, random_low_rank
from gphier.nls import NLSTrajectory, free_evolve

G32 = TorusGrid(1, np.pi, 32)


@pytest.fixture(scope="module")
def trajectory():
    return NLSTrajectory(smooth_field(G32), 1.0, 1e-4)


def test_free_propagation_identity_and_mode_pair():
    g = TorusGrid(1, np.pi, 8)
    rng = np.random.default_rng(1)
    gamma = random_low_rank(g, 1, 2, rng).to_dense()
    assert free_propagate(gamma, 0.0) is gamma
    ep, eq = g.plane_wave([2]), g.plane_wave([-1])
    pair = DensityMatrix(g, 1, np.outer(ep, eq.conj()))
    out = free_propagate(pair, 0.3)
    kp, kq = 2 * np.pi / g.L, -np.pi / g.L
    assert np.allclose(out.kernel, np.exp(-0.3j * (kp**2 - kq**2)) * pair.kernel, atol=1e-12)


@given(st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 2**31))
def test_free_propagation_group_law(t, s, seed):
    g = TorusGrid(1, np.pi, 8)
    gamma = random_low_rank(g, 2, 2, np.random.default_rng(seed)).to_dense()
    a = free_propagate(free_propagate(gamma, t), s).kernel
    b = free_propagate(gamma, t + s).kernel
    assert np.max(np.abs(a - b)) <= 1e-11


@given(st.floats(-2, 2), st.integers(0, 2**31))
def test_free_propagation_preserves_trace_and_hermiticity(t, seed):
    g = TorusGrid(1, np.pi, 8)
    gamma = random_low_rank(g, 2, 3, np.random.default_rng(seed)).to_dense()
    out = free_propagate(gamma, t)
    assert abs(out.trace() - gamma.trace()) <= 1e-12
    assert out.hermiticity_error() <= 1e-11
    assert np.allclose(out.eigenvalues(), gamma.eigenvalues(), atol=1e-12)


def test_free_propagation_of_projector_follows_field(rng):
    phi = random_field(G32, rng)
    out = free_propagate(projector(phi), 0.4)
    assert np.max(np.abs(out.kernel - projector(free_evolve(phi, 0.4)).kernel)) <= 1e-12


def test_kinetic_commutator_of_mode_pair():
    g = TorusGrid(1, np.pi, 8)
    ep, eq = g.plane_wave([3]), g.plane_wave([1])
    pair = DensityMatrix(g, 1, np.outer(ep, eq.conj()))
    assert np.allclose(kinetic_commutator(pair), (9 - 1) * pair.kernel, atol=1e-11)


def test_collision_of_constant_state_vanishes():
    g = TorusGrid(2, np.pi, 6)
    gamma = projector(np.ones(g.shape), 2, g)
    assert np.max(np.abs(collide(gamma, 1).kernel)) <= 1e-14


def test_collision_of_factorized_state(rng):
    phi = random_field(G32, rng).values
    out = collide(projector(phi, 2, G32), 1).kernel
    rho = np.abs(phi) ** 2
    expected = (rho[:, None] - rho[None, :]) * np.outer(phi, phi.conj())
    assert np.max(np.abs(out - expected)) <= 1e-12


@given(st.integers(0, 2**31))
def test_collision_anti_hermitian_and_traceless(seed):
    g = TorusGrid(1, np.pi, 8)
    rng = np.random.default_rng(seed)
    gamma = random_low_rank(g, 2, 3, rng).to_dense()
    out = collide(gamma, 1)
    K = out.kernel
    assert np.max(np.abs(K + K.conj().T)) <= 1e-12
    phi = random_field(g, rng)
    assert abs(collide(projector(phi, 2), 1).trace()) <= 1e-10


@pytest.mark.parametrize("d,k", [(1, 1), (1, 2), (2, 1)])
def test_factorized_collision_matches_dense(d, k, rng):
    g = TorusGrid(d, np.pi, 8 if d == 1 else 4)
    phi = random_field(g, rng)
    dense = collide_all(projector(phi, k + 1))
    fact = collide_factorized(projector(phi, k), phi)
    assert np.max(np.abs(dense.kernel - fact.kernel)) <= 1e-12
    for j in range(1, k + 1):
        assert np.max(np.abs(collide(projector(phi, k + 1), j).kernel
                             - collide_factorized(projector(phi, k), phi, j).kernel)) <= 1e-12


def test_collision_index_checked():
    g = TorusGrid(1, np.pi, 4)
    gamma = projector(np.ones(4), 2, g)
    with pytest.raises(ValueError):
        collide(gamma, 2)
    with pytest.raises(ValueError):
        collide(projector(np.ones(4), 1, g), 1)


def test_hierarchy_state_structure():
    phi = smooth_field(TorusGrid(1, np.pi, 8))
    st_ = HierarchyState.factorized(phi, 3, 1.0)
    assert st_.k_max == 3 and st_[2].k == 2
    with pytest.raises(ValueError):
        HierarchyState((st_[2],), 1.0)


def test_free_residual_is_finite_difference_only():
    phi0 = smooth_field(G32)
    free = lambda s: free_evolve(phi0, s)  # noqa: E731
    assert hierarchy_residual(free, 1, 0.1, 1e-5, 0.0) <= 1e-8


@pytest.mark.parametrize("k", [1, 2])
def test_residual_second_order_and_ablation(trajectory, k):
    r = [hierarchy_residual(trajectory, k, 0.1, h, 1.0) for h in (0.005, 0.0025)]
    assert 4 * 0.7 <= r[0] / r[1] <= 4 * 1.3
    ablated = hierarchy_residual(trajectory, k, 0.1, 0.005, 1.0, include_collision=False)
    assert ablated >= 100 * r[0]


def test_duhamel_trivial_cases():
    phi = smooth_field(G32)
    assert np.all(duhamel_term(phi, 1, 1, 0.0, 1.0).kernel == 0)
    assert np.all(duhamel_term(phi, 1, 2, 0.05, 0.0).kernel == 0)
    with pytest.raises(ValueError):
        duhamel_term(phi, 2, 1, 0.05, 1.0)
    with pytest.raises(ValueError):
        duhamel_term(phi, 1, 3, 0.05, 1.0)
    with pytest.raises(ValueError):
        duhamel_term(phi, 1, 1, 0.05, 1.0, quad_nodes=3)


def test_first_duhamel_term_matches_time_derivative():
    # d/dt of eta_1 at t = 0 is -i b0 B gamma^(2)_0
    phi = smooth_field(G32)
    t = 1e-4
    eta = duhamel_term(phi, 1, 1, t, 2.0).kernel / t
    expected = -2.0j * collide_factorized(projector(phi), phi).kernel
    assert np.max(np.abs(eta - expected)) <= 1e-3 * np.max(np.abs(expected))


def test_duhamel_truncation_error_second_order_in_time():
    phi = smooth_field(G32)
    e_full = duhamel_errors(phi, 1.0, 0.05)
    e_half = duhamel_errors(phi, 1.0, 0.025)
    assert e_full[1] < e_full[0]
    assert 4 * 0.6 <= e_full[1] / e_half[1] <= 4 * 1.4
