"""Bit-exact Cascade simulation with full two-way parity transcripts.

Every parity Alice announces is answered by Bob's parity over the identical
index set, so the transcript carries matched message pairs by construction.
Bob's announcements refer to his sifted string; since every past correction
is public, this form is interchangeable with announcing running parities,
and each pair satisfies P_A xor P_B = parity of the error string over the
set.  BINARY announces the first-half parity at each halving; the second
half's status is deducible from the parent parity and is never announced.
After a correction, the parity status of every block registered in any pass
flips live on both sides without further announcements; odd blocks are
drained smallest-first.  The end-of-pass invariant (all registered blocks
even) is re-counted from the strings themselves, not inferred.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .linalg import binary_entropy

A_TO_B = "A->B"
B_TO_A = "B->A"


class Message(NamedTuple):
    direction: str
    pass_index: int
    block: int
    indices: tuple
    parity: int


@dataclass(frozen=True)
class CascadeParams:
    n: int
    e: float            # error-rate estimate driving the schedule
    k1: int
    growth: int = 2
    passes: int = 4
    rng_seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0.0 < self.e < 0.5:
            raise ValueError(f"error estimate {self.e} outside (0, 0.5)")
        if self.k1 < 2:
            raise ValueError("initial blocksize must be at least 2")
        if self.growth < 1:
            raise ValueError("blocksize multiplier must be at least 1")
        if self.passes < 1:
            raise ValueError("need at least one pass")


def default_params(n: int, e: float, seed: int = 0) -> CascadeParams:
    """Classic schedule: k1 = ceil(0.73/e) clamped to [2, n], doubling, 4 passes."""
    if not 0.0 < e < 0.5:
        raise ValueError(f"error estimate {e} outside (0, 0.5)")
    k1 = min(max(2, math.ceil(0.73 / e)), n)
    return CascadeParams(n=n, e=e, k1=k1, growth=2, passes=4, rng_seed=seed)


@dataclass(frozen=True, eq=False)
class CascadeTranscript:
    messages: tuple      # Message objects, alternating paired directions
    final: np.ndarray    # Bob's corrected string
    bits_a: int
    bits_b: int
    residual_errors: int
    params: CascadeParams
    blocks: tuple        # (pass_index, block_id, indices) for every block

    def alice_messages(self) -> list:
        return [m for m in self.messages if m.direction == A_TO_B]

    def bob_messages(self) -> list:
        return [m for m in self.messages if m.direction == B_TO_A]

    def export_lines(self) -> list:
        return [f"{m.direction},{m.pass_index},{m.block},"
                f"{format_indices(m.indices)},{m.parity}"
                for m in self.messages]


def format_indices(indices) -> str:
    """Sorted indices as '+'-joined hex ranges, e.g. 0-7+a+c-f."""
    idx = sorted(int(i) for i in indices)
    if not idx:
        raise ValueError("empty index set")
    runs = []
    start = prev = idx[0]
    for i in idx[1:]:
        if i == prev + 1:
            prev = i
            continue
        runs.append((start, prev))
        start = prev = i
    runs.append((start, prev))
    return "+".join(f"{a:x}" if a == b else f"{a:x}-{b:x}" for a, b in runs)


def parse_indices(text: str) -> tuple:
    out = []
    for run in text.split("+"):
        if "-" in run:
            a, b = run.split("-")
            out.extend(range(int(a, 16), int(b, 16) + 1))
        else:
            out.append(int(run, 16))
    return tuple(out)


def _parity(bits: np.ndarray, indices) -> int:
    return int(bits[list(indices)].sum()) & 1


class _Session:
    """Mutable cascade state shared by the public entry points."""

    def __init__(self, x, y):
        self.x = np.asarray(x, dtype=np.uint8).copy()
        self.y = np.asarray(y, dtype=np.uint8).copy()
        self.y0 = self.y.copy()   # sifted string; announcements refer to it
        self.messages = []
        self.blocks = []          # (pass_index, block_id, indices tuple)
        self.index_of = {}        # (pass_index, block_id) -> indices tuple
        self.diff = {}            # (pass_index, block_id) -> parity mismatch
        self.member = {}          # pass_index -> array index -> block_id

    def exchange(self, pass_index, block, indices):
        """One paired parity announcement; returns the current mismatch bit.

        Bob's announced parity is over his sifted string, so announced pairs
        obey P_A xor P_B = parity of the original error string over the set.
        Past corrections are public, so the running mismatch that drives the
        search is computable by both parties from the same announcements.
        """
        p_a = _parity(self.x, indices)
        self.messages.append(Message(A_TO_B, pass_index, block, tuple(indices), p_a))
        self.messages.append(Message(B_TO_A, pass_index, block, tuple(indices),
                                     _parity(self.y0, indices)))
        return p_a ^ _parity(self.y, indices)

    def correct(self, index):
        self.y[index] ^= 1
        for pass_index, member in self.member.items():
            key = (pass_index, int(member[index]))
            if key in self.diff:
                self.diff[key] ^= 1

    def binary(self, pass_index, block, indices):
        """Locate and fix one error in a block of odd parity difference."""
        idx = list(indices)
        if len(idx) == 1:
            self.exchange(pass_index, block, idx)
            self.correct(idx[0])
            return idx[0]
        while len(idx) > 1:
            half = idx[:(len(idx) + 1) // 2]
            if self.exchange(pass_index, block, half):
                idx = half
            else:
                idx = idx[len(half):]  # status deduced from the parent parity
        self.correct(idx[0])
        return idx[0]

    def drain(self):
        """Run BINARY on the smallest odd block until none remain."""
        while True:
            odd = [key for key, d in self.diff.items() if d]
            if not odd:
                return
            key = min(odd, key=lambda k: (len(self.index_of[k]), k[0], k[1]))
            self.binary(key[0], key[1], self.index_of[key])


def run_binary(xa, xb, offset: int = 0):
    """BINARY on one block; returns (corrected global index, messages).

    The block is viewed at global positions offset..offset+len-1.  The input
    strings must differ in an odd number of positions.
    """
    xa = np.asarray(xa, dtype=np.uint8)
    xb = np.asarray(xb, dtype=np.uint8)
    if xa.shape != xb.shape or xa.ndim != 1 or xa.size < 1:
        raise ValueError("blocks must be equal-length nonempty bit strings")
    if int((xa ^ xb).sum()) % 2 == 0:
        raise ValueError("BINARY requires an odd number of errors")
    session = _Session(xa, xb)
    found = session.binary(0, 0, [int(i) for i in range(xa.size)])
    msgs = [m._replace(indices=tuple(i + offset for i in m.indices))
            for m in session.messages]
    return found + offset, msgs


def run_cascade(x, y, params: CascadeParams) -> CascadeTranscript:
    """Full multi-pass Cascade; never raises on residual errors."""
    x = np.asarray(x, dtype=np.uint8)
    y = np.asarray(y, dtype=np.uint8)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("strings must share one dimension")
    if x.size != params.n:
        raise ValueError(f"strings have length {x.size}, params.n = {params.n}")
    rng = np.random.Generator(np.random.PCG64(params.rng_seed))
    session = _Session(x, y)
    n = params.n
    k = min(params.k1, n)
    for pass_index in range(1, params.passes + 1):
        if pass_index == 1:
            order = np.arange(n)
        else:
            order = rng.permutation(n)
        member = np.empty(n, dtype=np.int64)
        fresh = []
        for block_id, start in enumerate(range(0, n, k)):
            indices = tuple(sorted(int(i) for i in order[start:start + k]))
            member[list(indices)] = block_id
            session.blocks.append((pass_index, block_id, indices))
            session.index_of[(pass_index, block_id)] = indices
            fresh.append((block_id, indices))
        session.member[pass_index] = member
        for block_id, indices in fresh:
            session.diff[(pass_index, block_id)] = \
                session.exchange(pass_index, block_id, indices)
        # correct each mismatched block of this pass, then cascade through
        # the smallest odd blocks anywhere until everything is even again
        for block_id, indices in fresh:
            if session.diff[(pass_index, block_id)]:
                session.binary(pass_index, block_id, indices)
                session.drain()
        for p, b, indices in session.blocks:
            recount = _parity(session.x, indices) ^ _parity(session.y, indices)
            assert recount == 0, f"odd block ({p}, {b}) at end of pass {pass_index}"
        k = min(k * params.growth, n)
    msgs = tuple(session.messages)
    bits_a = sum(1 for m in msgs if m.direction == A_TO_B)
    bits_b = len(msgs) - bits_a
    return CascadeTranscript(messages=msgs, final=session.y, bits_a=bits_a,
                             bits_b=bits_b,
                             residual_errors=int((session.x ^ session.y).sum()),
                             params=params, blocks=tuple(session.blocks))


def reconstruct_bob_messages(alice_msgs, w) -> list:
    """Bob's parities from Alice's plus the error-location string.

    Each reply is the same index set with parity P_A xor (xor of w over it).
    """
    w = np.asarray(w, dtype=np.uint8)
    out = []
    for m in alice_msgs:
        if m.direction != A_TO_B:
            raise ValueError("reconstruction consumes A->B messages only")
        if max(m.indices) >= w.size or min(m.indices) < 0:
            raise IndexError(f"index set {m.indices} outside error string")
        flip = _parity(w, m.indices)
        out.append(Message(B_TO_A, m.pass_index, m.block, m.indices,
                           m.parity ^ flip))
    return out


def leakage_summary(transcript: CascadeTranscript, e: float):
    """(delta_A, delta_B, f_emp); f_emp is NaN when e = 0 (h(e) = 0)."""
    if not 0.0 <= e < 0.5:
        raise ValueError(f"error rate {e} outside [0, 0.5)")
    n = transcript.params.n
    delta_a = transcript.bits_a / n
    delta_b = transcript.bits_b / n
    f_emp = delta_a / binary_entropy(e) if e > 0.0 else float("nan")
    return delta_a, delta_b, f_emp


def summary_csv_row(seed: int, transcript: CascadeTranscript, e: float) -> str:
    delta_a, delta_b, f_emp = leakage_summary(transcript, e)
    return (f"{seed},{transcript.params.n},{e:g},{delta_a:.9g},{delta_b:.9g},"
            f"{f_emp:.9g},{transcript.residual_errors}")
