"""Channel scenarios and the statistics tables they induce.

Qubit protocol: the ideal Bell state passes a misalignment rotation by theta
on the transmitted half, then a depolarizing map that replaces it with I/2
with probability q.  A trusted replacement step remixes each statistics row
toward the H row with weight lambda_rep, which equals (and is implemented as)
the effect of substituting the outgoing signal by the H signal.

Decoy protocol: Alice sends phase-randomized coherent pulses of the given
intensities in one of the four BB84 polarizations.  The line has transmittance
eta and rotates polarization by theta.  Bob splits the light 50/50 into a Z
and an X arm; each of the four threshold detectors clicks independently with
probability 1 - exp(-arriving intensity).  No click anywhere is recorded as a
vacuum outcome, a lone click as its bit, a double click within a basis as a
uniformly random bit in that basis, and clicks across both arms are assigned
to a basis by the passive 50/50 rule first.  The n-photon versions of the
same optics define the single-photon yields the decoy analysis bounds.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import partial_trace, proj, tensor
from .protocols import ALICE_OUTCOMES, BOB_OUTCOMES, alice_povm, bob_povm

_JONES = {
    0: np.array([1.0, 0.0]),
    1: np.array([0.0, 1.0]),
    2: np.array([1.0, 1.0]) / math.sqrt(2.0),
    3: np.array([1.0, -1.0]) / math.sqrt(2.0),
}


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class ChannelScenario:
    """Physical parameters of one run; angles in radians."""
    protocol: str = "qubit"
    theta: float = 0.0
    q: float = 0.0
    lambda_rep: float = 0.0
    eta: float = 1.0
    intensities: tuple = ()

    def __post_init__(self):
        if self.protocol not in ("qubit", "decoy"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        for name in ("q", "lambda_rep"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta = {self.eta} outside (0, 1]")
        if self.protocol == "decoy":
            mus = tuple(float(m) for m in self.intensities)
            if len(mus) < 2 or any(m <= 0 for m in mus) or \
                    any(nxt >= prv for prv, nxt in zip(mus, mus[1:])):
                raise ValueError(
                    "decoy scenarios need at least two strictly decreasing "
                    f"positive intensities, got {self.intensities}")
            object.__setattr__(self, "intensities", mus)


@dataclass(frozen=True, eq=False)
class StatisticsTable:
    """Joint outcome probabilities; rows are Alice symbols H, V, +, -.

    Qubit: cells has shape (4, 4).  Decoy: shape (k, 4, 5) with one leading
    slice per intensity (last Bob column is the vacuum outcome).
    """
    protocol: str
    cells: np.ndarray
    intensities: tuple = ()

    def conditional(self) -> np.ndarray:
        """Row-conditioned probabilities; Alice symbols are equiprobable."""
        return self.cells * 4.0

    def write_csv(self, dest) -> list[Path]:
        dest = Path(dest)
        if self.protocol == "qubit":
            _write_one(dest, self.cells, BOB_OUTCOMES["qubit"])
            return [dest]
        dest.mkdir(parents=True, exist_ok=True)
        paths = []
        for mu, block in zip(self.intensities, self.cells):
            p = dest / f"stats_mu{mu:g}.csv"
            _write_one(p, block, BOB_OUTCOMES["decoy"])
            paths.append(p)
        return paths

    @classmethod
    def read_csv(cls, src, protocol: str) -> "StatisticsTable":
        src = Path(src)
        if protocol == "qubit":
            return cls("qubit", _read_one(src, BOB_OUTCOMES["qubit"]))
        found = []
        for p in src.glob("stats_mu*.csv"):
            m = re.match(r"stats_mu(.+)\.csv", p.name)
            found.append((float(m.group(1)), p))
        if not found:
            raise FileNotFoundError(f"no stats_mu*.csv files under {src}")
        found.sort(key=lambda t: -t[0])
        mus = tuple(mu for mu, _ in found)
        cells = np.stack([_read_one(p, BOB_OUTCOMES["decoy"]) for _, p in found])
        return cls("decoy", cells, mus)


def _write_one(path: Path, block: np.ndarray, bob_labels) -> None:
    lines = ["alice," + ",".join(bob_labels)]
    for x, row in enumerate(block):
        lines.append(ALICE_OUTCOMES[x] + "," + ",".join(f"{v:.17g}" for v in row))
    path.write_text("\n".join(lines) + "\n")


def _read_one(path: Path, bob_labels) -> np.ndarray:
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    if header[1:] != list(bob_labels):
        raise ValueError(f"{path}: unexpected columns {header[1:]}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        rows.append([float(v) for v in parts[1:]])
    out = np.asarray(rows, dtype=float)
    if out.shape != (4, len(bob_labels)):
        raise ValueError(f"{path}: bad table shape {out.shape}")
    return out


def _replace_rows(cells: np.ndarray, lam: float) -> np.ndarray:
    if lam == 0.0:
        return cells
    return (1.0 - lam) * cells + lam * cells[0][None, :]


def channel_state(scenario: ChannelScenario) -> np.ndarray:
    """Bipartite qubit state after misalignment and depolarization."""
    if scenario.protocol != "qubit":
        raise ValueError("channel_state is defined for the qubit protocol")
    phi = proj(np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2.0))
    u = tensor(np.eye(2), _rotation(scenario.theta))
    rho = u @ phi @ u.conj().T
    rho_a = partial_trace(rho, (2, 2), (0,))
    return (1.0 - scenario.q) * rho + scenario.q * tensor(rho_a, np.eye(2) / 2.0)


def simulate_qubit_table(scenario: ChannelScenario) -> StatisticsTable:
    rho = channel_state(scenario)
    pa, pb = alice_povm(), bob_povm("qubit")
    cells = np.array([[float(np.real(np.trace(tensor(pa[x], pb[y]) @ rho)))
                       for y in range(4)] for x in range(4)])
    return StatisticsTable("qubit", _replace_rows(cells, scenario.lambda_rep))


def _detector_intensities(x: int, theta: float, arriving: float) -> np.ndarray:
    """Mean photon numbers at the H, V, +, - detectors."""
    u = _rotation(theta) @ _JONES[x]
    weights = np.array([u @ _JONES[0], u @ _JONES[1], u @ _JONES[2], u @ _JONES[3]])
    return 0.5 * arriving * weights**2


def _outcome_distribution(click_probs: np.ndarray) -> np.ndarray:
    """Map independent detector click probabilities to (H,V,+,-,vac) stats."""
    dist = np.zeros(5)
    for pattern in itertools.product((0, 1), repeat=4):
        p = math.prod(cp if bit else 1.0 - cp
                      for bit, cp in zip(pattern, click_probs))
        if p == 0.0:
            continue
        dist += p * _assign(pattern)
    return dist


def _assign(pattern) -> np.ndarray:
    h, v, pl, mi = pattern
    out = np.zeros(5)
    z_clicks, x_clicks = h + v, pl + mi
    if z_clicks == 0 and x_clicks == 0:
        out[4] = 1.0
        return out
    weights = []
    if z_clicks and x_clicks:
        weights = [(0.5, (h, v), (0, 1)), (0.5, (pl, mi), (2, 3))]
    elif z_clicks:
        weights = [(1.0, (h, v), (0, 1))]
    else:
        weights = [(1.0, (pl, mi), (2, 3))]
    for w, bits, idx in weights:
        if bits[0] and bits[1]:
            out[idx[0]] += 0.5 * w
            out[idx[1]] += 0.5 * w
        elif bits[0]:
            out[idx[0]] += w
        else:
            out[idx[1]] += w
    return out


def simulate_decoy_tables(scenario: ChannelScenario) -> StatisticsTable:
    if scenario.protocol != "decoy":
        raise ValueError("simulate_decoy_tables needs a decoy scenario")
    blocks = []
    for mu in scenario.intensities:
        block = np.empty((4, 5))
        for x in range(4):
            lam = _detector_intensities(x, scenario.theta, mu * scenario.eta)
            block[x] = 0.25 * _outcome_distribution(1.0 - np.exp(-lam))
        blocks.append(_replace_rows(block, scenario.lambda_rep))
    return StatisticsTable("decoy", np.stack(blocks), scenario.intensities)


def single_photon_truth(scenario: ChannelScenario) -> np.ndarray:
    """Exact one-photon joint statistics (4, 5) of the same optical model."""
    if scenario.protocol != "decoy":
        raise ValueError("single_photon_truth needs a decoy scenario")
    cells = np.empty((4, 5))
    for x in range(4):
        u = _rotation(scenario.theta) @ _JONES[x]
        probs = np.array([(u @ _JONES[y])**2 for y in range(4)])
        cells[x, :4] = 0.25 * scenario.eta * 0.5 * probs
        cells[x, 4] = 0.25 * (1.0 - scenario.eta)
    return _replace_rows(cells, scenario.lambda_rep)


def sifted_error_and_pass(cells: np.ndarray) -> tuple[float, float]:
    """Observed same-basis error rate and pass (sift) probability."""
    gain = cells[0, 0] + cells[0, 1] + cells[1, 0] + cells[1, 1] \
        + cells[2, 2] + cells[2, 3] + cells[3, 2] + cells[3, 3]
    errors = cells[0, 1] + cells[1, 0] + cells[2, 3] + cells[3, 2]
    if gain <= 0.0:
        raise ValueError("no same-basis coincidences; error rate undefined")
    return float(errors / gain), float(gain)
