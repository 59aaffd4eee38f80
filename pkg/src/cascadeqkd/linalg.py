"""Dense Hermitian operator algebra used throughout the package.

All logarithms are base 2, so entropies and relative entropies are in bits.
Operators are plain complex numpy arrays; helpers validate shape/Hermiticity
where it matters instead of wrapping arrays in classes.
"""
from __future__ import annotations

import numpy as np

ID2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

LOG2_E = 1.0 / np.log(2.0)


def ket(i: int, d: int) -> np.ndarray:
    """Standard basis column vector |i> in dimension d."""
    v = np.zeros((d, 1), dtype=complex)
    v[i, 0] = 1.0
    return v


def proj(v: np.ndarray) -> np.ndarray:
    """Rank-one projector |v><v| (v need not be normalized)."""
    v = np.asarray(v, dtype=complex).reshape(-1, 1)
    return v @ v.conj().T


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def hermitize(a: np.ndarray) -> np.ndarray:
    """Nearest Hermitian matrix, (A + A^dag)/2."""
    return 0.5 * (a + a.conj().T)


def is_hermitian(a: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def check_density(rho: np.ndarray, tol: float = 1e-8) -> None:
    """Raise ValueError unless rho is Hermitian, PSD and 0 < tr <= 1 + tol.

    Trace may be below 1: unnormalized conditional states are allowed.
    """
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density operator must be square, got shape {rho.shape}")
    if not is_hermitian(rho, tol):
        raise ValueError("density operator is not Hermitian within tolerance")
    w = np.linalg.eigvalsh(hermitize(rho))
    if w[0] < -tol:
        raise ValueError(f"density operator has negative eigenvalue {w[0]:.3e}")
    tr = float(np.real(np.trace(rho)))
    if not (tol < tr <= 1.0 + tol):
        raise ValueError(f"density operator trace {tr:.6f} outside (0, 1]")


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of the given operators, left to right."""
    if not ops:
        raise ValueError("tensor() needs at least one operator")
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def partial_trace(op: np.ndarray, dims, keep) -> np.ndarray:
    """Trace out all subsystems not listed in `keep`.

    `dims` gives the tensor factor dimensions in order; `keep` lists the
    factor indices to retain (output ordering follows `keep` sorted).
    """
    dims = tuple(int(d) for d in dims)
    n = int(np.prod(dims))
    op = np.asarray(op, dtype=complex)
    if op.shape != (n, n):
        raise ValueError(f"operator shape {op.shape} does not match dims {dims}")
    k = len(dims)
    keep = tuple(sorted(set(int(i) for i in keep)))
    if keep and (keep[0] < 0 or keep[-1] >= k):
        raise ValueError(f"keep indices {keep} out of range for {k} subsystems")
    t = op.reshape(dims + dims)
    row = list(range(k))
    col = [i + k if i in keep else i for i in range(k)]
    out = [i for i in keep] + [i + k for i in keep]
    res = np.einsum(t, row + col, out)
    d_keep = int(np.prod([dims[i] for i in keep])) if keep else 1
    return res.reshape(d_keep, d_keep)


def psd_sqrt(a: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Principal square root of a PSD Hermitian matrix."""
    w, v = np.linalg.eigh(hermitize(np.asarray(a, dtype=complex)))
    if w[0] < -1e-9 * max(1.0, abs(w[-1])):
        raise ValueError(f"psd_sqrt: eigenvalue {w[0]:.3e} is significantly negative")
    return (v * np.sqrt(np.maximum(w, 0.0))) @ v.conj().T


def matrix_log2(a: np.ndarray, clip: float = 1e-12) -> np.ndarray:
    """Base-2 matrix logarithm of a Hermitian PSD matrix.

    Eigenvalues below `clip` are clipped up to it before the log, which keeps
    the result finite on numerically singular inputs.
    """
    w, v = np.linalg.eigh(hermitize(np.asarray(a, dtype=complex)))
    w = np.maximum(w, clip)
    return (v * np.log2(w)) @ v.conj().T


def matrix_exp2(a: np.ndarray) -> np.ndarray:
    """Base-2 matrix exponential 2^A of a Hermitian matrix."""
    w, v = np.linalg.eigh(hermitize(np.asarray(a, dtype=complex)))
    return (v * np.exp2(w)) @ v.conj().T


def entropy2(a: np.ndarray, clip: float = 1e-12) -> float:
    """Von Neumann entropy in bits of a PSD matrix (not necessarily trace 1)."""
    w = np.linalg.eigvalsh(hermitize(np.asarray(a, dtype=complex)))
    w = w[w > clip]
    return float(-np.sum(w * np.log2(w)))


def rel_entropy2(x: np.ndarray, y: np.ndarray, clip: float = 1e-12,
                 support_tol: float = 1e-9) -> float:
    """Quantum relative entropy D(x || y) in bits for PSD x, y.

    Requires supp(x) contained in supp(y); the weight of x outside the
    support of y is measured and reported in the error if it exceeds
    `support_tol` rather than being clipped away silently.
    """
    x = hermitize(np.asarray(x, dtype=complex))
    y = hermitize(np.asarray(y, dtype=complex))
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    wy, vy = np.linalg.eigh(y)
    scale = max(abs(wy[-1]), 1.0)
    null = vy[:, wy < clip * scale]
    if null.shape[1]:
        violation = float(np.real(np.trace(null.conj().T @ x @ null)))
        if violation > support_tol:
            raise ValueError(
                f"rel_entropy2: support violation {violation:.3e} exceeds "
                f"tolerance {support_tol:.1e}")
    diff = matrix_log2(x, clip) - matrix_log2(y, clip)
    return float(np.real(np.trace(x @ diff)))


def apply_kraus(rho: np.ndarray, kraus) -> np.ndarray:
    """sum_i K_i rho K_i^dag."""
    out = None
    for k in kraus:
        term = k @ rho @ k.conj().T
        out = term if out is None else out + term
    return out


def apply_kraus_adjoint(m: np.ndarray, kraus) -> np.ndarray:
    """sum_i K_i^dag M K_i (adjoint of apply_kraus)."""
    out = None
    for k in kraus:
        term = k.conj().T @ m @ k
        out = term if out is None else out + term
    return out


def binary_entropy(e: float) -> float:
    """Binary entropy h(e) in bits; h(0) = h(1) = 0."""
    if e < 0.0 or e > 1.0:
        raise ValueError(f"binary_entropy: argument {e} outside [0, 1]")
    if e == 0.0 or e == 1.0:
        return 0.0
    return float(-e * np.log2(e) - (1.0 - e) * np.log2(1.0 - e))
