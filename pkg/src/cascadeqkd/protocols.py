"""Measurement POVMs, key-map Kraus operators and constraint assembly.

Two protocols are supported. "qubit" is entanglement-based BB84 with both
sides measuring a qubit; "decoy" is the single-photon branch of a decoy-state
setup where Bob's optical measurement has been squashed to a three-level
system (level 0 is the vacuum flag, levels 1 and 2 carry the polarization).

The post-selection map G appends the key register Z, keeps only same-basis
rounds, and records the basis in a classical register.  Its W-augmented
variant additionally records where Alice's and Bob's raw bits disagree, which
is exactly the string a two-way error-correction transcript reveals.
Register order of the output is (Z, A, B, basis[, W]).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import ID2, PAULI_X, PAULI_Y, PAULI_Z, ket, proj, psd_sqrt, tensor

GRAININGS = ("fine", "sifted_fine", "coarse")
ALICE_OUTCOMES = ("H", "V", "+", "-")
BOB_OUTCOMES = {"qubit": ("H", "V", "+", "-"), "decoy": ("H", "V", "+", "-", "vac")}

P_Z = 0.5  # basis choice probabilities, fixed and equal on both sides
P_X = 0.5

_KET_PLUS = np.array([1.0, 1.0]) / np.sqrt(2.0)
_KET_MINUS = np.array([1.0, -1.0]) / np.sqrt(2.0)


def alice_povm() -> list[np.ndarray]:
    """Four source-replacement POVM elements in H, V, +, - order."""
    return [
        P_Z * proj(ket(0, 2)),
        P_Z * proj(ket(1, 2)),
        P_X * proj(_KET_PLUS),
        P_X * proj(_KET_MINUS),
    ]


def bob_povm(protocol: str) -> list[np.ndarray]:
    """Bob's POVM elements; for "decoy" the fifth element flags no detection."""
    if protocol == "qubit":
        return alice_povm()
    if protocol == "decoy":
        embed = np.zeros((3, 2), dtype=complex)
        embed[1:, :] = np.eye(2)
        els = [embed @ p @ embed.conj().T for p in alice_povm()]
        els.append(np.diag([1.0, 0.0, 0.0]).astype(complex))
        return els
    raise ValueError(f"unknown protocol {protocol!r}")


@dataclass(frozen=True, eq=False)
class ProtocolMaps:
    """Kraus data for the objective f(rho) = D(G(rho) || Z(G(rho)))."""
    protocol: str
    with_w: bool
    kraus: tuple          # Kraus operators of G, shape (d_out, d_in)
    pinch: tuple          # key-register pinching projectors, shape (d_out, d_out)
    dims_in: tuple        # (2, d_B)
    dims_out: tuple       # (2, 2, d_B, 2[, 2])
    registers: tuple      # ((name, dim), ...) for dims_out
    sift_prob: float = P_Z**2 + P_X**2  # basis-sift factor, detection not included


def _build_maps(protocol: str, with_w: bool) -> ProtocolMaps:
    pa = alice_povm()
    pb = bob_povm(protocol)
    d_b = pb[0].shape[0]
    kraus = []
    for alpha in (0, 1):  # 0 = Z basis, 1 = X basis
        if with_w:
            for w in (0, 1):
                k = sum(
                    tensor(ket(x, 2), psd_sqrt(pa[2 * alpha + x]),
                           psd_sqrt(pb[2 * alpha + (x ^ w)]), ket(alpha, 2),
                           ket(w, 2))
                    for x in (0, 1))
                kraus.append(k)
        else:
            pb_sum = psd_sqrt(pb[2 * alpha] + pb[2 * alpha + 1])
            k = sum(
                tensor(ket(x, 2), psd_sqrt(pa[2 * alpha + x]), pb_sum,
                       ket(alpha, 2))
                for x in (0, 1))
            kraus.append(k)
    dims_out = (2, 2, d_b, 2) + ((2,) if with_w else ())
    d_out = int(np.prod(dims_out))
    gram = sum(k.conj().T @ k for k in kraus)
    if np.linalg.eigvalsh(gram)[-1] > 1.0 + 1e-10:
        raise AssertionError("Kraus operators exceed trace preservation")
    rest = d_out // 2
    pinch = tuple(tensor(proj(ket(j, 2)), np.eye(rest)) for j in (0, 1))
    names = ("Z", "A", "B", "basis") + (("W",) if with_w else ())
    return ProtocolMaps(
        protocol=protocol, with_w=with_w, kraus=tuple(kraus), pinch=pinch,
        dims_in=(2, d_b), dims_out=dims_out,
        registers=tuple(zip(names, dims_out)))


def build_qubit_maps(with_w: bool = False) -> ProtocolMaps:
    return _build_maps("qubit", with_w)


def build_decoy_maps(with_w: bool = False) -> ProtocolMaps:
    return _build_maps("decoy", with_w)


def keymap_registers(maps: ProtocolMaps) -> tuple:
    """Names and dimensions of the output registers, in tensor order."""
    return maps.registers


@dataclass(frozen=True, eq=False)
class Constraint:
    """One affine condition tr(op . rho) = value or in [lower, upper]."""
    label: str
    op: np.ndarray
    kind: str                      # "eq" or "interval"
    value: float = float("nan")
    lower: float = float("nan")
    upper: float = float("nan")

    def __post_init__(self):
        if self.kind not in ("eq", "interval"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "interval" and not self.lower <= self.upper + 1e-15:
            raise ValueError(
                f"constraint {self.label}: empty interval [{self.lower}, {self.upper}]")


def cell_operator(x: int, y: int, protocol: str) -> np.ndarray:
    """Joint observable for Alice outcome x and Bob outcome y."""
    return tensor(alice_povm()[x], bob_povm(protocol)[y])


def _cell_indices(graining: str, protocol: str) -> list[tuple[int, int]]:
    n_bob = len(BOB_OUTCOMES[protocol])
    if graining == "fine":
        return [(x, y) for x in range(4) for y in range(n_bob)]
    if graining == "sifted_fine":
        return [(x, y) for x in (0, 1) for y in (0, 1)] + \
               [(x, y) for x in (2, 3) for y in (2, 3)]
    raise ValueError(f"unknown graining {graining!r}")


def _coarse_groups() -> list[tuple[str, list[tuple[int, int]]]]:
    return [
        ("Q_Z", [(0, 1), (1, 0)]),
        ("gain_Z", [(0, 0), (0, 1), (1, 0), (1, 1)]),
        ("Q_X", [(2, 3), (3, 2)]),
        ("gain_X", [(2, 2), (2, 3), (3, 2), (3, 3)]),
    ]


def _always_constraints(protocol: str) -> list[Constraint]:
    d_b = 2 if protocol == "qubit" else 3
    eye_b = np.eye(d_b, dtype=complex)
    out = [
        Constraint("tr", tensor(ID2, eye_b), "eq", value=1.0),
    ]
    for name, pauli in (("sx_A", PAULI_X), ("sy_A", PAULI_Y), ("sz_A", PAULI_Z)):
        out.append(Constraint(name, tensor(pauli, eye_b), "eq", value=0.0))
    return out


def build_constraints(cells, graining: str, protocol: str,
                      mode: str = "equality") -> list[Constraint]:
    """Turn a statistics table into solver constraints.

    `cells` is a (4, n_bob) array of joint probabilities for equality mode,
    or a pair (low, high) of such arrays for interval mode.  Source
    replacement and unit trace equalities are always appended.
    """
    if graining not in GRAININGS:
        raise ValueError(f"unknown graining {graining!r}")
    n_bob = len(BOB_OUTCOMES[protocol])
    labels_a, labels_b = ALICE_OUTCOMES, BOB_OUTCOMES[protocol]
    if mode == "equality":
        vals = np.asarray(cells, dtype=float)
        if vals.shape != (4, n_bob):
            raise ValueError(f"cells shape {vals.shape}, expected (4, {n_bob})")
        low = high = vals
    elif mode == "interval":
        low, high = (np.asarray(c, dtype=float) for c in cells)
        if low.shape != (4, n_bob) or high.shape != (4, n_bob):
            raise ValueError("interval arrays must both be (4, n_bob)")
        if np.any(low > high + 1e-12):
            raise ValueError("interval lower bounds exceed upper bounds")
    else:
        raise ValueError(f"unknown mode {mode!r}")

    out = []
    if graining == "coarse":
        for name, group in _coarse_groups():
            op = sum(cell_operator(x, y, protocol) for x, y in group)
            lo = float(sum(low[x, y] for x, y in group))
            hi = float(sum(high[x, y] for x, y in group))
            out.append(_make(name, op, mode, lo, hi))
    else:
        for x, y in _cell_indices(graining, protocol):
            label = f"{labels_a[x]}{labels_b[y]}"
            op = cell_operator(x, y, protocol)
            out.append(_make(label, op, mode, float(low[x, y]), float(high[x, y])))
    out.extend(_always_constraints(protocol))
    return out


def _make(label, op, mode, lo, hi) -> Constraint:
    if mode == "equality":
        return Constraint(label, op, "eq", value=lo)
    return Constraint(label, op, "interval", lower=lo, upper=hi)
