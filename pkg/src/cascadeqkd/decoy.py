"""Single-photon yield bounds from multi-intensity observations.

Phase-randomized pulses make each observed statistic a Poisson mixture of
unknown photon-number conditionals.  Truncating the mixture at a cutoff N and
letting the tail float in [0, 1] gives, per statistic, the sandwich

    sum_{n<=N} p_mu(n) y_n  <=  observed_mu  <=  sum_{n<=N} p_mu(n) y_n + tail_mu,

one pair of inequalities per intensity, with every y_n in [0, 1].  Minimizing
and maximizing y_1 over that polytope are small LPs, solved with HiGHS.  The
solver's answer is then polished onto the vertex it identified: the primal is
re-solved from the active equalities, the multipliers from the stationarity
system (nonnegative least squares), and any residual dual infeasibility is
absorbed into the box multipliers at an explicit cost.  Each reported bound
is the repaired dual (certificate) value, and the worst primal-dual gap is
recorded so the caller can assert it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linprog, nnls

from .protocols import ALICE_OUTCOMES, BOB_OUTCOMES, Constraint, build_constraints


class InfeasibleStatisticsError(ValueError):
    """No photon-number decomposition reproduces the observed statistics."""


def poisson_weight(mu: float, n: int) -> float:
    """P(N = n) for a Poisson pulse of mean intensity mu."""
    if mu < 0 or n < 0:
        raise ValueError("poisson_weight needs mu >= 0 and n >= 0")
    return math.exp(-mu) * mu**n / math.factorial(n)


@dataclass(frozen=True, eq=False)
class YieldBounds:
    """Certified elementwise bounds on single-photon conditional statistics."""
    low: np.ndarray       # (4, 5)
    high: np.ndarray      # (4, 5)
    cutoff: int
    max_gap: float        # worst primal-dual gap across all LPs

    def width(self) -> float:
        return float(np.max(self.high - self.low))

    def write_csv(self, path) -> Path:
        path = Path(path)
        lines = ["alice,bob,low,high"]
        for x, a in enumerate(ALICE_OUTCOMES):
            for y, b in enumerate(BOB_OUTCOMES["decoy"]):
                lines.append(f"{a},{b},{self.low[x, y]:.17g},{self.high[x, y]:.17g}")
        path.write_text("\n".join(lines) + "\n")
        return path


def _lp_bound(pmat: np.ndarray, tails: np.ndarray, obs: np.ndarray,
              maximize: bool, label: str) -> tuple[float, float]:
    """One certified bound on y_1; returns (value, primal-dual gap)."""
    n_var = pmat.shape[1]
    c = np.zeros(n_var)
    c[1] = -1.0 if maximize else 1.0
    a_ub = np.vstack([pmat, -pmat])
    b_ub = np.concatenate([obs, tails - obs])
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=[(0.0, 1.0)] * n_var,
                  method="highs")
    if res.status == 2:
        # A small-mu tail underflows to zero, leaving near-equality rows with
        # coefficients spanning many decades; presolve bound propagation can
        # declare those empty even though the LP itself solves them.  Retry
        # without presolve before concluding the statistics are impossible.
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=[(0.0, 1.0)] * n_var,
                      method="highs", options={"presolve": False})
    if res.status == 2:
        raise InfeasibleStatisticsError(
            f"statistic {label}: observations admit no photon-number "
            "decomposition (LP infeasible)")
    if res.status != 0:
        raise RuntimeError(f"statistic {label}: LP solver status {res.status}")
    x = np.asarray(res.x)
    act = np.where(np.abs(a_ub @ x - b_ub) <= 1e-7 * (1.0 + np.abs(b_ub)))[0]
    at_lo = np.where(x <= 1e-8)[0]
    at_hi = np.where(x >= 1.0 - 1e-8)[0]

    # Primal polish: solve the active equalities exactly; keep the result
    # only if it stays feasible, otherwise the HiGHS iterate stands.
    eye = np.eye(n_var)
    sys_rows = [a_ub[i] for i in act] + [eye[j] for j in at_lo] + [eye[j] for j in at_hi]
    sys_rhs = [b_ub[i] for i in act] + [0.0] * len(at_lo) + [1.0] * len(at_hi)
    xv, *_ = np.linalg.lstsq(np.array(sys_rows), np.array(sys_rhs), rcond=None)
    if max(np.max(a_ub @ xv - b_ub), np.max(-xv), np.max(xv - 1.0)) <= 1e-10:
        x = xv
    primal = float(c @ x)

    # Dual polish.  For min c.x subject to Ax <= b, 0 <= x <= 1 the
    # multipliers satisfy c + A^T lam + um - lm = 0 with lam, um, lm >= 0 and
    # the dual value is -b.lam - sum(um).  Only multipliers on active
    # constraints may be nonzero, so fit those by nonnegative least squares,
    # then repair the residual: a positive component is free (lm does not
    # enter the dual value), a negative one goes into um and costs.
    cols = [a_ub[i] for i in act]
    cols += [eye[j] for j in at_hi]
    cols += [-eye[j] for j in at_lo]
    sol, _ = nnls(np.array(cols).T, -c)
    lam = np.zeros(a_ub.shape[0])
    um = np.zeros(n_var)
    lm = np.zeros(n_var)
    k1, k2 = len(act), len(at_hi)
    lam[act] = sol[:k1]
    um[at_hi] = sol[k1:k1 + k2]
    lm[at_lo] = sol[k1 + k2:]
    resid = c + a_ub.T @ lam + um - lm
    um += np.clip(-resid, 0.0, None)
    dual = -float(b_ub @ lam) - float(um.sum())
    gap = abs(primal - dual)
    return (-dual, gap) if maximize else (dual, gap)


def solve_yield_bounds(observed: np.ndarray, intensities, cutoff: int = 10,
                       gap_tol: float = 1e-9) -> YieldBounds:
    """Bound the single-photon conditionals behind per-intensity statistics.

    `observed[i, x, y]` is the conditional probability of Bob outcome y given
    Alice symbol x at intensity `intensities[i]`.
    """
    observed = np.asarray(observed, dtype=float)
    mus = [float(m) for m in intensities]
    if observed.shape != (len(mus), 4, 5):
        raise ValueError(f"observed shape {observed.shape} does not match "
                         f"{len(mus)} intensities")
    if cutoff < 1:
        raise ValueError("cutoff must be at least 1")
    pmat = np.array([[poisson_weight(mu, n) for n in range(cutoff + 1)]
                     for mu in mus])
    tails = 1.0 - pmat.sum(axis=1)
    low = np.empty((4, 5))
    high = np.empty((4, 5))
    worst = 0.0
    for x in range(4):
        for y in range(5):
            label = f"{ALICE_OUTCOMES[x]}{BOB_OUTCOMES['decoy'][y]}"
            obs = observed[:, x, y]
            lo, g1 = _lp_bound(pmat, tails, obs, False, label)
            hi, g2 = _lp_bound(pmat, tails, obs, True, label)
            worst = max(worst, g1, g2)
            low[x, y] = min(max(lo, 0.0), 1.0)
            high[x, y] = min(max(hi, 0.0), 1.0)
            if low[x, y] > high[x, y]:
                low[x, y] = high[x, y] = 0.5 * (low[x, y] + high[x, y])
    if worst > gap_tol:
        raise RuntimeError(f"decoy LP duality gap {worst:.3e} exceeds {gap_tol:.1e}")
    return YieldBounds(low=low, high=high, cutoff=cutoff, max_gap=worst)


def assemble_interval_constraints(bounds: YieldBounds, graining: str,
                                  pad: float = 1e-9) -> list[Constraint]:
    """Joint-probability interval constraints for the key-rate solver.

    Conditional intervals widen by `pad` per side before the quarter
    weighting.  The LP can pin a statistic to machine precision, which would
    leave the state-feasibility problem without an interior; padding is a
    pure relaxation, so certified lower bounds computed under it remain
    lower bounds for the unpadded set.
    """
    if pad < 0.0:
        raise ValueError("pad must be nonnegative")
    return build_constraints(((bounds.low - pad) / 4.0,
                              (bounds.high + pad) / 4.0), graining,
                             "decoy", mode="interval")


def photon_split_keyrate(f1: float, f1_prime: float, p0_pass: float,
                         mu_signal: float) -> tuple[float, float]:
    """Combine single-photon objectives into per-signal entropy totals.

    Zero-photon rounds that pass sifting carry one full bit of entropy for
    the transcript-agnostic objective; once error locations are announced
    they carry none, so the corrected total has no vacuum term.
    """
    p0 = poisson_weight(mu_signal, 0)
    p1 = poisson_weight(mu_signal, 1)
    return p1 * f1 + p0 * p0_pass, p1 * f1_prime
