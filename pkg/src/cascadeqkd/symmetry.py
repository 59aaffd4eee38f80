"""Twirling, symmetry predicates, and a Bell-diagonal minimization oracle.

The twirl averages conjugations by sigma_i (x) sigma_i over the four Paulis
and projects any two-qubit state onto the Bell-diagonal family.  For states
already in that family the objective has a closed form built from 2x2
measurement blocks, which `bell_minimize` searches over the one remaining
free parameter; the result serves as an independent check on the full
solver.  `eve_block_diagonality` reconstructs the adversary's conditional
states from the standard purification and measures how far their error and
no-error supports are from orthogonal.

QBER conventions on lambdas = (weight of phi+, phi-, psi+, psi-):
Q_Z = l2 + l3, Q_X = l1 + l3, Q_Y = l1 + l2.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar

from . import solver
from .linalg import ID2, PAULI_X, PAULI_Y, PAULI_Z, hermitize, tensor
from .protocols import GRAININGS, ProtocolMaps

_S = 1.0 / math.sqrt(2.0)
BELL_STATES = (
    np.array([_S, 0.0, 0.0, _S]),    # phi+
    np.array([_S, 0.0, 0.0, -_S]),   # phi-
    np.array([0.0, _S, _S, 0.0]),    # psi+
    np.array([0.0, _S, -_S, 0.0]),   # psi-
)

_BASIS_KETS = {
    "Z": (np.array([1.0, 0.0]), np.array([0.0, 1.0])),
    "X": (np.array([_S, _S]), np.array([_S, -_S])),
    "Y": (np.array([_S, 1j * _S]), np.array([_S, -1j * _S])),
}


def _check_two_qubit(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.shape != (4, 4):
        raise ValueError(f"twirling needs a 4x4 operator, got {a.shape}")
    return a


def twirl(rho: np.ndarray) -> np.ndarray:
    """Average of (sigma_i x sigma_i) rho (sigma_i x sigma_i) over the Paulis."""
    rho = _check_two_qubit(rho)
    out = np.zeros_like(rho)
    for p in (ID2, PAULI_X, PAULI_Y, PAULI_Z):
        u = tensor(p, p)
        out += u @ rho @ u.conj().T
    return hermitize(out / 4.0)


def twirl_adjoint(gamma: np.ndarray) -> np.ndarray:
    """Adjoint of `twirl`; the map is self-adjoint, kept as its own name so
    call sites read as operator transformations."""
    return twirl(gamma)


def statistics_symmetric(table, graining: str) -> bool:
    """Whether a qubit statistics table has the symmetries that let the
    optimizer be restricted to Bell-diagonal states at this graining."""
    if table.protocol != "qubit":
        raise ValueError("symmetry predicate applies to qubit tables only")
    if graining not in GRAININGS:
        raise ValueError(f"unknown graining {graining!r}")
    if graining == "coarse":
        return True  # QBER/gain observables are twirl-invariant outright
    c = table.cells
    tol = 1e-9
    same_basis = (abs(c[0, 0] - c[1, 1]) <= tol
                  and abs(c[0, 1] - c[1, 0]) <= tol
                  and abs(c[2, 2] - c[3, 3]) <= tol
                  and abs(c[2, 3] - c[3, 2]) <= tol)
    if graining == "sifted_fine" or not same_basis:
        return same_basis
    za_xb = c[0:2, 2:4].ravel()
    xa_zb = c[2:4, 0:2].ravel()
    return (float(za_xb.max() - za_xb.min()) <= tol
            and float(xa_zb.max() - xa_zb.min()) <= tol)


def _shannon(p) -> float:
    return -sum(float(x) * math.log2(x) for x in p if x > 0.0)


def bell_objective(lambdas) -> float:
    """Objective value at a Bell-diagonal state, by the closed form.

    Measuring Alice's half in basis alpha leaves 2x2 blocks on Bob's side
    with spectrum {(1-Q_alpha)/2, Q_alpha/2}; summing their unnormalized
    entropies and subtracting the shared-state entropy gives

        f = (1/2) [S_u(Z blocks) + S_u(X blocks)] - (1/2) H(lambdas).
    """
    lam = [float(x) for x in lambdas]
    if len(lam) != 4 or min(lam) < -1e-12 or abs(sum(lam) - 1.0) > 1e-9:
        raise ValueError(f"not a Bell-diagonal spectrum: {lambdas}")
    q_z = lam[2] + lam[3]
    q_x = lam[1] + lam[3]
    s_z = _shannon([(1.0 - q_z) / 2.0, q_z / 2.0])
    s_x = _shannon([(1.0 - q_x) / 2.0, q_x / 2.0])
    return 0.5 * (s_z + s_x) - 0.5 * _shannon(lam)


def bell_minimize(q_z: float, q_x: float) -> float:
    """Minimum objective over Bell-diagonal states with the given QBERs.

    With Q_Z and Q_X fixed, one parameter t = weight of psi- remains; the
    minimum is located on a dense grid (step 1e-3) and refined to 1e-6.
    """
    if not (0.0 <= q_z <= 1.0 and 0.0 <= q_x <= 1.0):
        raise ValueError(f"QBER pair ({q_z}, {q_x}) outside the simplex")
    t_lo = max(0.0, q_z + q_x - 1.0)
    t_hi = min(q_z, q_x)

    def value(t):
        t = min(max(t, t_lo), t_hi)
        lam = (1.0 - q_z - q_x + t, q_x - t, q_z - t, t)
        return bell_objective([max(0.0, x) for x in lam])

    if t_hi - t_lo < 1e-12:
        return value(t_lo)
    grid = np.arange(t_lo, t_hi + 1e-3, 1e-3)
    grid = np.clip(grid, t_lo, t_hi)
    vals = [value(t) for t in grid]
    k = int(np.argmin(vals))
    lo = grid[max(0, k - 1)]
    hi = grid[min(len(grid) - 1, k + 1)]
    if hi - lo < 1e-12:
        return float(vals[k])
    res = minimize_scalar(value, bounds=(float(lo), float(hi)),
                          method="bounded", options={"xatol": 1e-6})
    return float(min(res.fun, vals[k]))


def eve_block_diagonality(lambdas, bases=("Z", "X")) -> float:
    """Largest overlap between Eve's error and no-error supports.

    From the purification sum_i sqrt(l_i) |Bell_i>|e_i>, Eve's conditional
    state after outcomes (x, y) in a shared basis is the pure vector with
    components sqrt(l_i) <x y|Bell_i>.  Returns the maximum singular value
    of the cross-Gram matrix between the orthonormalized spans of the
    x = y and x != y groups, over the requested bases.
    """
    lam = [float(x) for x in lambdas]
    if len(lam) != 4 or min(lam) < -1e-12 or abs(sum(lam) - 1.0) > 1e-9:
        raise ValueError(f"not a Bell-diagonal spectrum: {lambdas}")
    roots = np.sqrt(np.clip(lam, 0.0, None))
    worst = 0.0
    for basis in bases:
        k0, k1 = _BASIS_KETS[basis]
        kets = (k0, k1)
        vecs = {}
        for x in (0, 1):
            for y in (0, 1):
                out = np.kron(kets[x], kets[y])
                vecs[x, y] = roots * np.array(
                    [np.vdot(out, b) for b in BELL_STATES])
        even = _span([vecs[0, 0], vecs[1, 1]])
        odd = _span([vecs[0, 1], vecs[1, 0]])
        if even.size and odd.size:
            cross = even.conj().T @ odd
            sv = np.linalg.svd(cross, compute_uv=False)
            worst = max(worst, float(sv[0]) if sv.size else 0.0)
    return worst


def _span(vectors) -> np.ndarray:
    cols = [v for v in vectors if np.linalg.norm(v) > 1e-15]
    if not cols:
        return np.zeros((4, 0))
    u, sv, _ = np.linalg.svd(np.column_stack(cols), full_matrices=False)
    rank = int(np.sum(sv > 1e-12 * sv[0]))
    return u[:, :rank]


def twirl_decreases_objective(rho: np.ndarray, maps: ProtocolMaps) -> bool:
    """Check f(T(rho)) <= f(rho) + 1e-9 for the built objective."""
    rho = _check_two_qubit(rho)
    return solver.objective(twirl(rho), maps) <= solver.objective(rho, maps) + 1e-9
