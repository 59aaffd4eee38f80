import math

import numpy as np
import pytest

from cascadeqkd import linalg as la
from cascadeqkd import protocols as pr

from conftest import random_density

PHI_PLUS = la.proj(np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2.0))


def test_alice_povm_completeness():
    assert np.allclose(sum(pr.alice_povm()), np.eye(2), atol=1e-14)


def test_bob_qubit_povm_completeness():
    assert np.allclose(sum(pr.bob_povm("qubit")), np.eye(2), atol=1e-14)


def test_bob_decoy_povm_completeness_and_vacuum():
    els = pr.bob_povm("decoy")
    assert len(els) == 5
    assert np.allclose(sum(els), np.eye(3), atol=1e-14)
    # detection elements never touch the vacuum level
    for p in els[:4]:
        assert abs(p[0, 0]) < 1e-14
    assert np.allclose(els[4], np.diag([1.0, 0.0, 0.0]), atol=1e-14)


@pytest.mark.parametrize("builder,d_b", [(pr.build_qubit_maps, 2),
                                         (pr.build_decoy_maps, 3)])
@pytest.mark.parametrize("with_w", [False, True])
def test_kraus_trace_nonincreasing(builder, d_b, with_w):
    maps = builder(with_w)
    gram = sum(k.conj().T @ k for k in maps.kraus)
    w = np.linalg.eigvalsh(gram)
    assert w[-1] <= 1.0 + 1e-12
    assert maps.dims_in == (2, d_b)
    assert len(maps.kraus) == (4 if with_w else 2)


def test_noiseless_pass_probability():
    # Both bases kept with probability p_z^2 + p_x^2 = 1/2 on the ideal state.
    for with_w in (False, True):
        maps = pr.build_qubit_maps(with_w)
        g_rho = la.apply_kraus(PHI_PLUS, maps.kraus)
        assert math.isclose(np.trace(g_rho).real, 0.5, abs_tol=1e-12)


def test_pinch_projectors(rng):
    maps = pr.build_qubit_maps(False)
    z0, z1 = maps.pinch
    assert np.allclose(z0 + z1, np.eye(z0.shape[0]), atol=1e-14)
    assert np.allclose(z0 @ z0, z0, atol=1e-14)
    assert np.allclose(z0 @ z1, 0.0, atol=1e-14)
    # pinching is idempotent on random states
    rho = random_density(rng, z0.shape[0])
    pinched = z0 @ rho @ z0 + z1 @ rho @ z1
    again = z0 @ pinched @ z0 + z1 @ pinched @ z1
    assert np.allclose(pinched, again, atol=1e-13)


@pytest.mark.parametrize("protocol", ["qubit", "decoy"])
def test_key_bit_distribution_same_with_and_without_w(protocol, rng):
    # Recording error locations cannot change the key-bit marginal. Oracle:
    # direct POVM sums, no Kraus machinery.
    build = pr.build_qubit_maps if protocol == "qubit" else pr.build_decoy_maps
    maps, maps_w = build(False), build(True)
    d_b = maps.dims_in[1]
    rho = random_density(rng, 2 * d_b)
    pa, pb = pr.alice_povm(), pr.bob_povm(protocol)
    for j in (0, 1):
        want = sum(
            np.trace(la.tensor(pa[2 * a + j], pb[2 * a] + pb[2 * a + 1]) @ rho).real
            for a in (0, 1))
        for m in (maps, maps_w):
            g_rho = la.apply_kraus(rho, m.kraus)
            zj = m.pinch[j]
            assert math.isclose(np.trace(zj @ g_rho).real, want, abs_tol=1e-10)


def test_registers():
    maps = pr.build_decoy_maps(True)
    assert pr.keymap_registers(maps) == (
        ("Z", 2), ("A", 2), ("B", 3), ("basis", 2), ("W", 2))
    assert maps.dims_out == (2, 2, 3, 2, 2)


def test_constraint_counts_qubit():
    cells = np.full((4, 4), 1.0 / 16.0)
    assert len(pr.build_constraints(cells, "coarse", "qubit")) == 8
    assert len(pr.build_constraints(cells, "sifted_fine", "qubit")) == 12
    assert len(pr.build_constraints(cells, "fine", "qubit")) == 20


def test_constraint_counts_decoy_interval():
    low = np.full((4, 5), 0.01)
    high = np.full((4, 5), 0.02)
    cons = pr.build_constraints((low, high), "fine", "decoy", mode="interval")
    assert len(cons) == 24
    kinds = {c.kind for c in cons if c.label not in ("tr", "sx_A", "sy_A", "sz_A")}
    assert kinds == {"interval"}


def test_coarse_groups_sum_cells():
    rngv = np.random.default_rng(7)
    cells = rngv.uniform(size=(4, 4))
    cons = {c.label: c for c in pr.build_constraints(cells, "coarse", "qubit")}
    assert math.isclose(cons["Q_Z"].value, cells[0, 1] + cells[1, 0], abs_tol=1e-14)
    assert math.isclose(cons["gain_X"].value,
                        cells[2, 2] + cells[2, 3] + cells[3, 2] + cells[3, 3],
                        abs_tol=1e-14)
    # operator matches the cell-operator sum
    want = (pr.cell_operator(0, 1, "qubit") + pr.cell_operator(1, 0, "qubit"))
    assert np.allclose(cons["Q_Z"].op, want, atol=1e-14)


def test_bad_interval_raises():
    low = np.full((4, 4), 0.5)
    high = np.full((4, 4), 0.1)
    with pytest.raises(ValueError):
        pr.build_constraints((low, high), "fine", "qubit", mode="interval")


def test_source_replacement_always_present():
    cells = np.full((4, 4), 1.0 / 16.0)
    cons = pr.build_constraints(cells, "coarse", "qubit")
    labels = [c.label for c in cons]
    for want in ("tr", "sx_A", "sy_A", "sz_A"):
        assert want in labels
    tr = next(c for c in cons if c.label == "tr")
    assert tr.value == 1.0 and tr.kind == "eq"
