"""Twirl identities, symmetry predicates, and the Bell-diagonal oracle."""
import numpy as np
import pytest

from cascadeqkd import channels, solver, symmetry
from cascadeqkd.linalg import binary_entropy, hermitize, proj
from cascadeqkd.protocols import (build_constraints, build_qubit_maps,
                                  cell_operator)


def random_density4(rng):
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    return hermitize(rho / np.trace(rho).real)


def bell_mix(lam):
    return sum(l * proj(v) for l, v in zip(lam, symmetry.BELL_STATES))


def test_twirl_fixed_points():
    phi = proj(symmetry.BELL_STATES[0])
    assert np.allclose(symmetry.twirl(phi), phi, atol=1e-14)
    mixed = np.eye(4) / 4.0
    assert np.allclose(symmetry.twirl(mixed), mixed, atol=1e-14)


def test_twirl_output_bell_diagonal_idempotent(rng):
    basis = np.column_stack(symmetry.BELL_STATES)
    for _ in range(20):
        rho = random_density4(rng)
        t = symmetry.twirl(rho)
        in_bell = basis.conj().T @ t @ basis
        off = in_bell - np.diag(np.diag(in_bell))
        assert np.abs(off).max() < 1e-12
        assert np.trace(t).real == pytest.approx(1.0, abs=1e-12)
        assert np.abs(symmetry.twirl(t) - t).max() < 1e-12


def test_twirl_preserves_coarse_observables(rng):
    q_z_op = cell_operator(0, 1, "qubit") + cell_operator(1, 0, "qubit")
    q_x_op = cell_operator(2, 3, "qubit") + cell_operator(3, 2, "qubit")
    for _ in range(10):
        rho = random_density4(rng)
        t = symmetry.twirl(rho)
        for op in (q_z_op, q_x_op):
            before = np.trace(op @ rho).real
            after = np.trace(op @ t).real
            assert after == pytest.approx(before, abs=1e-12)


def test_twirl_adjoint_identity(rng):
    for _ in range(100):
        rho = random_density4(rng)
        gamma = hermitize(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
        lhs = np.trace(gamma @ symmetry.twirl(rho))
        rhs = np.trace(symmetry.twirl_adjoint(gamma) @ rho)
        assert abs(lhs - rhs) < 1e-12


def test_twirl_adjoint_frozen_identities():
    g_hh = cell_operator(0, 0, "qubit")
    g_vv = cell_operator(1, 1, "qubit")
    target = 0.5 * (g_hh + g_vv)
    assert np.abs(symmetry.twirl_adjoint(g_hh) - target).max() < 1e-12
    assert np.abs(symmetry.twirl_adjoint(g_vv) - target).max() < 1e-12

    off = [cell_operator(x, y, "qubit") for x in (0, 1) for y in (2, 3)]
    avg = sum(off) / 4.0
    for op in off:
        assert np.abs(symmetry.twirl_adjoint(op) - avg).max() < 1e-12

    q_z_op = cell_operator(0, 1, "qubit") + cell_operator(1, 0, "qubit")
    assert np.abs(symmetry.twirl_adjoint(q_z_op) - q_z_op).max() < 1e-12


def test_statistics_symmetric_cases():
    mk = lambda **kw: channels.simulate_qubit_table(
        channels.ChannelScenario(protocol="qubit", **kw))
    mis_depol = mk(theta=0.2, q=0.1)
    assert symmetry.statistics_symmetric(mis_depol, "sifted_fine")
    assert not symmetry.statistics_symmetric(mis_depol, "fine")
    replaced = mk(theta=0.2, q=0.1, lambda_rep=0.2)
    assert not symmetry.statistics_symmetric(replaced, "sifted_fine")
    depol = mk(theta=0.0, q=0.1)
    assert symmetry.statistics_symmetric(depol, "fine")
    for table in (mis_depol, replaced, depol):
        assert symmetry.statistics_symmetric(table, "coarse")
    decoy = channels.simulate_decoy_tables(channels.ChannelScenario(
        protocol="decoy", theta=0.1, eta=0.5, intensities=(0.5, 0.1, 0.001)))
    with pytest.raises(ValueError):
        symmetry.statistics_symmetric(decoy, "fine")


def test_bell_objective_matches_full_maps(rng):
    plain = build_qubit_maps(False)
    withw = build_qubit_maps(True)
    for _ in range(10):
        lam = rng.dirichlet(np.ones(4))
        rho = bell_mix(lam)
        closed = symmetry.bell_objective(lam)
        assert solver.objective(rho, plain) == pytest.approx(closed, abs=1e-9)
        assert solver.objective(rho, withw) == pytest.approx(closed, abs=1e-9)


def test_bell_minimize_noiseless():
    assert symmetry.bell_minimize(0.0, 0.0) == pytest.approx(0.5, abs=1e-9)


def test_bell_minimize_depolarization_closed_form():
    for q in (0.04, 0.1, 0.2):
        target = 0.5 * (1.0 - binary_entropy(q / 2.0))
        assert symmetry.bell_minimize(q / 2.0, q / 2.0) == pytest.approx(
            target, abs=1e-4), q


def test_bell_minimize_dominates_full_solver_lower_bound():
    q = 0.1
    sc = channels.ChannelScenario(protocol="qubit", theta=0.0, q=q)
    cells = channels.simulate_qubit_table(sc).cells
    res = solver.minimize(build_qubit_maps(False),
                          build_constraints(cells, "coarse", "qubit"))
    assert symmetry.bell_minimize(q / 2.0, q / 2.0) >= res.lower - 1e-4


def test_bell_minimize_rejects_bad_qber():
    with pytest.raises(ValueError):
        symmetry.bell_minimize(1.2, 0.1)
    with pytest.raises(ValueError):
        symmetry.bell_minimize(0.1, -0.05)


def test_eve_block_diagonality(rng):
    assert symmetry.eve_block_diagonality((1.0, 0.0, 0.0, 0.0)) == 0.0
    for _ in range(20):
        lam = rng.dirichlet(np.ones(4))
        assert symmetry.eve_block_diagonality(lam) < 1e-12
        assert symmetry.eve_block_diagonality(lam, bases=("Y",)) < 1e-12


def test_eve_block_diagonality_detects_non_bell_input():
    with pytest.raises(ValueError):
        symmetry.eve_block_diagonality((0.5, 0.5, 0.5, -0.5))


def test_twirl_decreases_objective(rng):
    plain = build_qubit_maps(False)
    withw = build_qubit_maps(True)
    lam = rng.dirichlet(np.ones(4))
    assert symmetry.twirl_decreases_objective(bell_mix(lam), plain)
    for _ in range(20):
        rho = random_density4(rng)
        assert symmetry.twirl_decreases_objective(rho, plain)
        assert symmetry.twirl_decreases_objective(rho, withw)
