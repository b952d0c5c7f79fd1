import math

import numpy as np
import pytest

from pulsecool import core
from pulsecool.errors import InvalidDimensionError, TruncationError


def test_fock_operators_ladder_action():
    ops = core.build_fock_operators(2)
    assert np.allclose(ops.a, [[0, 1], [0, 0]])
    ops10 = core.build_fock_operators(10)
    # <3| a†a |3> = 3
    e3 = np.zeros(10)
    e3[3] = 1
    assert abs(e3 @ ops10.n_op @ e3 - 3.0) < 1e-14
    for n in range(1, 10):
        en = np.zeros(10)
        en[n] = 1
        out = ops10.a @ en
        want = np.zeros(10)
        want[n - 1] = math.sqrt(n)
        assert np.max(np.abs(out - want)) < 1e-14


def test_commutator_artifact_confined_to_top_level():
    ops = core.build_fock_operators(10)
    dev = ops.x_tilde @ ops.p_tilde - ops.p_tilde @ ops.x_tilde - 1j * np.eye(10)
    assert core.max_abs(dev[:9, :9]) < 1e-13
    assert abs(dev[9, 9]) > 1.0  # truncation defect lives here


def test_build_fock_operators_rejects_small_dim():
    with pytest.raises(InvalidDimensionError):
        core.build_fock_operators(1)


def test_tensor_spin_fock_ordering():
    n = 5
    ops = core.build_fock_operators(n)
    sz = core.tensor_spin_fock(core.SIGMA_Z, np.eye(n))
    assert np.allclose(np.diag(sz), [1] * n + [-1] * n)
    num = core.tensor_spin_fock(core.IDENTITY_2, ops.n_op)
    evals = np.sort(np.linalg.eigvalsh(num))
    assert np.allclose(evals, np.repeat(np.arange(n), 2))
    # sigma_x ⊗ a maps |g,1> to |e,0>
    vec = np.zeros(2 * n)
    vec[core.G_IDX * n + 1] = 1.0
    out = core.tensor_spin_fock(core.SIGMA_X, ops.a) @ vec
    want = np.zeros(2 * n)
    want[core.E_IDX * n + 0] = 1.0
    assert np.max(np.abs(out - want)) < 1e-14


def test_tensor_spin_fock_rejects_bad_shapes():
    with pytest.raises(InvalidDimensionError):
        core.tensor_spin_fock(np.eye(3), np.eye(4))
    with pytest.raises(InvalidDimensionError):
        core.tensor_spin_fock(np.eye(2), np.ones((3, 4)))


def test_thermal_state_zero_temperature():
    p = core.make_params(n_fock=20)
    state = core.thermal_state(p, 0.0)
    want = core.basis_state(p, "g", 0)
    assert core.max_abs(state.rho - want.rho) < 1e-15


def test_thermal_state_moments():
    p = core.make_params(n_fock=60)
    state = core.thermal_state(p, 3.0)
    assert abs(core.mean_phonons(state) - 3.0) < 1e-3
    assert abs(state.phonon_distribution()[0] - 0.25) < 1e-3
    state.validate(leak_threshold=p.leak_threshold)


def test_thermal_state_rejects_undersized_cutoff():
    p = core.SystemParams(n_fock=12, guard_levels=2)
    with pytest.raises(TruncationError):
        core.thermal_state(p, 8.0)


def test_mean_phonons_cases():
    p = core.make_params(n_fock=30)
    assert core.mean_phonons(core.thermal_state(p, 0.0)) == 0.0
    rho = np.zeros((p.dim, p.dim), dtype=complex)
    n = p.n_fock
    rho[core.G_IDX * n + 0, core.G_IDX * n + 0] = 0.5
    rho[core.G_IDX * n + 1, core.G_IDX * n + 1] = 0.5
    state = core.JointState(rho=rho, n_fock=n, guard_levels=p.guard_levels)
    assert abs(core.mean_phonons(state) - 0.5) < 1e-14


def test_matrix_exp_pauli_rotations():
    u = core.matrix_exp(core.SIGMA_Z, math.pi / 2)
    assert np.allclose(u, np.diag([np.exp(-1j * math.pi / 2), np.exp(1j * math.pi / 2)]))
    u = core.matrix_exp(core.SIGMA_X, math.pi)
    assert core.max_abs(u + np.eye(2)) < 1e-12


def test_matrix_exp_matches_eigendecomposition_oracle():
    rng = np.random.default_rng(123)
    m = rng.normal(size=(40, 40)) + 1j * rng.normal(size=(40, 40))
    h = (m + m.conj().T) / 2
    u_pade = core.matrix_exp(h, 0.63)
    u_eig = core.matrix_exp_eigh(h, 0.63)
    assert core.max_abs(u_pade - u_eig) < 1e-8
    assert core.unitarity_defect(u_pade) < 1e-9


def test_matrix_exp_rejects_non_hermitian():
    with pytest.raises(ValueError):
        core.matrix_exp(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0)


def test_apply_unitary_basics(params40):
    p = params40
    state = core.basis_state(p, "g", 0)
    same = core.apply_unitary(state, np.eye(p.dim))
    assert core.max_abs(same.rho - state.rho) < 1e-15
    flip = core.tensor_spin_fock(core.SIGMA_X, np.eye(p.n_fock))
    out = core.apply_unitary(state, flip)
    assert core.max_abs(out.rho - core.basis_state(p, "e", 0).rho) < 1e-14


def test_apply_unitary_preserves_trace_for_random_unitary(params40):
    p = params40
    rng = np.random.default_rng(5)
    m = rng.normal(size=(p.dim, p.dim)) + 1j * rng.normal(size=(p.dim, p.dim))
    q, _ = np.linalg.qr(m)
    state = core.thermal_state(p, 2.0)
    out = core.apply_unitary(state, q)
    assert abs(out.trace() - 1.0) < 1e-10
    assert core.max_abs(out.rho - out.rho.conj().T) < 1e-10


def test_apply_unitary_flags_guard_leak(params40):
    p = params40
    state = core.basis_state(p, "g", 0)
    # displace hard enough to reach the guard band
    ops = core.build_fock_operators(p.n_fock)
    h = core.tensor_spin_fock(core.IDENTITY_2, ops.x_tilde)
    u = core.matrix_exp(h, 9.0)
    with pytest.raises(TruncationError) as err:
        core.apply_unitary(state, u, leak_threshold=p.leak_threshold)
    assert err.value.leak is not None and err.value.leak > p.leak_threshold


def test_joint_state_validate_rejects_bad_states():
    p = core.make_params(n_fock=10)
    rho = np.zeros((p.dim, p.dim), dtype=complex)
    rho[0, 0] = 0.9
    state = core.JointState(rho=rho, n_fock=p.n_fock)
    with pytest.raises(ValueError):
        state.validate()


def test_phase_aligned_distance():
    rng = np.random.default_rng(11)
    m = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    q, _ = np.linalg.qr(m)
    v = np.exp(1j * 0.77) * q
    dist, phi = core.phase_aligned_distance(q, v)
    assert dist < 1e-12
    assert abs(phi - 0.77) < 1e-12


def test_system_params_validation():
    with pytest.raises(InvalidDimensionError):
        core.SystemParams(n_fock=1)
    with pytest.raises(ValueError):
        core.SystemParams(eta=-0.1)
    with pytest.raises(ValueError):
        core.SystemParams(guard_levels=60, n_fock=60)
