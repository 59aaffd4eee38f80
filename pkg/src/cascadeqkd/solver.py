"""Certified minimization of the conditional-entropy objective.

The quantity of interest is f(rho) = D(G(rho) || Z(G(rho))) in bits, minimized
over density operators compatible with the accepted statistics.  The outer
loop is a conditional-gradient method: each iteration linearizes f at the
current feasible iterate and minimizes that linear function over the feasible
spectrahedron (a small dense interior-point solve), then takes an exact line
search along the resulting direction.  The objective value at any feasible
iterate is an upper bound on the minimum; convexity turns the linearized
subproblem's certified optimum into a lower bound,

    min f  >=  f(rho_t) - <grad, rho_t> + min_{sigma feasible} <grad, sigma>,

where the inner minimum is replaced by its dual certificate so the reported
interval stays sound even when the subproblem solver is merely approximate.
Interval-valued statistics enter every subproblem as two-sided linear
inequalities through nonnegative scalar slacks.

Spectra are clipped at `clip` before logarithms; the worst additive effect of
that clip on the bounds is accumulated into the reported lower bound and
echoed in the diagnostics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import sdp
from .linalg import (apply_kraus, apply_kraus_adjoint, binary_entropy,
                     entropy2, hermitize, matrix_log2)
from .protocols import ProtocolMaps


class InfeasibleModelError(ValueError):
    """The constraint set admits no density operator."""


@dataclass(frozen=True)
class SolverOptions:
    gap_target: float = 1e-4     # bits
    max_iters: int = 2000
    clip: float = 1e-12          # spectrum floor before logarithms
    sdp_tol: float = 1e-9
    verdict_tol: float = 1e-4    # bits of certified separation for ">"
    line_search_tol: float = 1e-7


@dataclass(frozen=True, eq=False)
class SolveResult:
    upper: float
    lower: float
    rho_star: np.ndarray
    iterations: int
    gap: float
    diagnostics: str
    converged: bool
    upper_history: tuple
    lower_history: tuple


@dataclass(frozen=True)
class Verdict:
    relation: str   # "equal" | "strictly_greater" | "inconclusive"
    margin: float   # lower(F) - upper(F'); positive means certified separation


@dataclass(frozen=True, eq=False)
class KeyRateReport:
    F: SolveResult
    F_prime: SolveResult
    e: float
    f_eff: float
    p_pass: float
    R_incorrect: float
    R_naive: float
    R_corrected: float
    clamped: tuple


def _pinched(sigma: np.ndarray, maps: ProtocolMaps) -> np.ndarray:
    out = np.zeros_like(sigma)
    for p in maps.pinch:
        out += p @ sigma @ p
    return out


def objective(rho: np.ndarray, maps: ProtocolMaps, clip: float = 1e-12) -> float:
    """f(rho) in bits; with W-announcing maps this evaluates f'."""
    g = hermitize(apply_kraus(rho, maps.kraus))
    w0 = float(np.linalg.eigvalsh(g)[0])
    if w0 < -1e-8:
        raise ValueError(
            f"image under the measurement map has eigenvalue {w0:.3e}; "
            "input is not a state within tolerance")
    z = hermitize(_pinched(g, maps))
    return entropy2(z, clip=clip) - entropy2(g, clip=clip)


def gradient(rho: np.ndarray, maps: ProtocolMaps, clip: float = 1e-12) -> np.ndarray:
    """Gradient of `objective` at rho (the 1/ln2 trace terms cancel)."""
    g = hermitize(apply_kraus(rho, maps.kraus))
    z = hermitize(_pinched(g, maps))
    diff = matrix_log2(g, clip=clip) - matrix_log2(z, clip=clip)
    return hermitize(apply_kraus_adjoint(diff, maps.kraus))


def _clip_slack(maps: ProtocolMaps, clip: float) -> float:
    # per eigenvalue, |x log2 x| <= clip*log2(1/clip) once x <= clip <= 1/e;
    # two entropy terms, d_out eigenvalues each
    d_out = int(np.prod(maps.dims_out))
    return 2.0 * d_out * clip * math.log2(1.0 / clip)


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(np.trace(a.conj().T @ b)))


def constraint_residual(rho: np.ndarray, constraints) -> float:
    """Worst violation of the constraint list at rho."""
    worst = 0.0
    for con in constraints:
        val = float(np.real(np.trace(con.op @ rho)))
        if con.kind == "eq":
            worst = max(worst, abs(val - con.value))
        else:
            worst = max(worst, val - con.upper, con.lower - val)
    return worst


def _polytope_rows(constraints, d: int, shift: int):
    """Rows/rhs/slack data for the feasible set over blocks laid out as

    [rho] + (shift extra blocks placed by the caller) + [slack blocks...].
    Intervals contribute two rows each: <B,rho> + s_u = upper and
    <B,rho> - s_l = lower with scalar s_u, s_l >= 0 capped by the width.
    """
    rows, rhs, caps = [], [], []
    nslack = 0
    one = np.eye(1)
    for con in constraints:
        if con.kind == "eq":
            rows.append({0: con.op})
            rhs.append(con.value)
        else:
            width = con.upper - con.lower
            rows.append({0: con.op, 1 + shift + nslack: one})
            rhs.append(con.upper)
            caps.append(width)
            nslack += 1
            rows.append({0: con.op, 1 + shift + nslack: -one})
            rhs.append(con.lower)
            caps.append(width)
            nslack += 1
    return rows, rhs, caps, nslack


def _expand(rows, nblocks: int):
    full = []
    for row in rows:
        full.append([row.get(j) for j in range(nblocks)])
    return full


def linear_min(h: np.ndarray, constraints, opts: SolverOptions):
    """Minimize <h, rho> over the feasible set; returns (minimizer, certified
    lower bound on the linear optimum, solver result)."""
    d = h.shape[0]
    rows, rhs, caps, nslack = _polytope_rows(constraints, d, shift=0)
    nblocks = 1 + nslack
    c_blocks = [h] + [np.zeros((1, 1))] * nslack
    full_rows = _expand(rows, nblocks)
    res = sdp.solve(c_blocks, full_rows, rhs, tol=opts.sdp_tol)
    cert, _ = sdp.certified_bound(c_blocks, full_rows, rhs, res.y,
                                  [1.0] + caps)
    return hermitize(res.x_blocks[0]), cert, res


def feasible_point(constraints, d: int, opts: SolverOptions = SolverOptions()):
    """Strictly feasible start: maximize the minimum eigenvalue.

    Writes rho = X + t*I with X PSD and t free (split into t+ - t-), then
    maximizes t subject to the affine rows.  t* < 0 certifies that no
    density operator satisfies the constraints.
    """
    rows, rhs, caps, nslack = _polytope_rows(constraints, d, shift=3)
    one = np.eye(1)
    for row, con in zip(rows, (c for c in constraints for _ in
                               range(1 if c.kind == "eq" else 2))):
        tr_op = float(np.real(np.trace(con.op)))
        row[1] = tr_op * one
        row[2] = -tr_op * one
    # keep the free split bounded along its null ray
    rows.append({1: one, 2: one, 3: one})
    rhs.append(1.0)
    nblocks = 4 + nslack
    c_blocks = [np.zeros((d, d)), -one, one, np.zeros((1, 1))]
    c_blocks += [np.zeros((1, 1))] * nslack
    full_rows = _expand(rows, nblocks)
    try:
        res = sdp.solve(c_blocks, full_rows, rhs, tol=opts.sdp_tol)
    except sdp.SDPInfeasibleError as exc:
        labels = ", ".join(c.label for c in constraints)
        raise InfeasibleModelError(
            f"constraint set [{labels}] is affinely inconsistent: {exc}") from exc
    t = float((res.x_blocks[1][0, 0] - res.x_blocks[2][0, 0]).real)
    if t < -1e-9:
        labels = ", ".join(c.label for c in constraints)
        raise InfeasibleModelError(
            f"constraint set [{labels}] admits no positive semidefinite "
            f"state (best minimum eigenvalue {t:.3e})")
    rho = hermitize(res.x_blocks[0] + t * np.eye(d))
    return rho, t


def minimize(maps: ProtocolMaps, constraints, opts: SolverOptions = None) -> SolveResult:
    """Certified bounds on min f over the constrained states."""
    if opts is None:
        opts = SolverOptions()
    d = int(np.prod(maps.dims_in))
    rho, t0 = feasible_point(constraints, d, opts)
    slack = _clip_slack(maps, opts.clip)
    upper = math.inf
    lower = -math.inf
    rho_star = rho
    up_hist, low_hist = [], []
    iters = 0
    for iters in range(1, opts.max_iters + 1):
        f_val = objective(rho, maps, opts.clip)
        if f_val < upper:
            upper = f_val
            rho_star = rho
        grad = gradient(rho, maps, opts.clip)
        sigma, cert, dres = linear_min(grad, constraints, opts)
        lower = max(lower, f_val - _inner(grad, rho) + cert - slack)
        if up_hist:
            assert upper <= up_hist[-1] + 1e-15
            assert lower >= low_hist[-1] - 1e-15
        up_hist.append(upper)
        low_hist.append(lower)
        if upper - lower <= opts.gap_target:
            break
        if not dres.converged and constraint_residual(sigma, constraints) > 1e-7:
            break  # unusable direction; bounds collected so far stay valid
        direction = sigma - rho
        if _inner(grad, direction) >= -1e-12:
            break  # linearization admits no descent; bounds will not move
        def line(s):
            return objective(hermitize(rho + s * direction), maps, opts.clip)
        best = minimize_scalar(line, bounds=(0.0, 1.0), method="bounded",
                               options={"xatol": opts.line_search_tol})
        cand = hermitize(rho + float(best.x) * direction)
        if objective(cand, maps, opts.clip) > f_val:
            break  # numerical stall at the boundary
        rho = cand
    gap = upper - lower
    converged = gap <= opts.gap_target
    diagnostics = (f"iterations={iters} start_min_eig={t0:.3e} "
                   f"clip_slack={slack:.3e} "
                   f"residual={constraint_residual(rho_star, constraints):.3e}")
    if not converged:
        diagnostics += f" NOT CONVERGED: gap {gap:.3e} above {opts.gap_target:.1e}"
    return SolveResult(upper=upper, lower=lower, rho_star=rho_star,
                       iterations=iters, gap=gap, diagnostics=diagnostics,
                       converged=converged, upper_history=tuple(up_hist),
                       lower_history=tuple(low_hist))


def classify(res_f: SolveResult, res_fp: SolveResult,
             tol: float = 1e-4) -> Verdict:
    """Relation between two certified intervals.

    A certified separation lower(F) > upper(F') + tol is conclusive on its
    own; calling the intervals equal additionally requires both solves to
    have converged, otherwise a wide interval would masquerade as overlap.
    """
    margin = res_f.lower - res_fp.upper
    if margin > tol:
        return Verdict("strictly_greater", margin)
    overlap = (min(res_f.upper, res_fp.upper)
               - max(res_f.lower, res_fp.lower))
    if res_f.converged and res_fp.converged and overlap >= -tol:
        return Verdict("equal", margin)
    return Verdict("inconclusive", margin)


def compare(maps_plain: ProtocolMaps, maps_w: ProtocolMaps, constraints,
            opts: SolverOptions = None) -> Verdict:
    """Solve both objectives on one constraint set and classify F vs F'."""
    if opts is None:
        opts = SolverOptions()
    res_f = minimize(maps_plain, constraints, opts)
    res_fp = minimize(maps_w, constraints, opts)
    return classify(res_f, res_fp, opts.verdict_tol)


def assemble_keyrates(F: SolveResult, F_prime: SolveResult, e: float,
                      f_eff: float, p_pass: float) -> KeyRateReport:
    """Key rates from certified entropy bounds and the leakage model.

    Uses the larger of the two certified lower bounds for F (any lower bound
    on F' also bounds F from below), which keeps R_corrected <= R_incorrect.
    Negative rates clamp to zero and are named in `clamped`.
    """
    if not 0.0 <= e <= 0.5:
        raise ValueError(f"error rate {e} outside [0, 0.5]")
    if f_eff < 1.0:
        raise ValueError(f"efficiency {f_eff} below the Shannon limit")
    if not 0.0 <= p_pass <= 1.0:
        raise ValueError(f"pass probability {p_pass} outside [0, 1]")
    cost = p_pass * f_eff * binary_entropy(e)
    f_low = max(F.lower, F_prime.lower)
    rates = {"R_incorrect": f_low - cost,
             "R_naive": f_low - 2.0 * cost,
             "R_corrected": F_prime.lower - cost}
    clamped = tuple(name for name, r in rates.items() if r < 0.0)
    rates = {name: max(0.0, r) for name, r in rates.items()}
    return KeyRateReport(F=F, F_prime=F_prime, e=e, f_eff=f_eff,
                         p_pass=p_pass, clamped=clamped, **rates)


CSV_HEADER = ("scenario,F_low,F_up,Fp_low,Fp_up,verdict,margin,"
              "R_incorrect,R_naive,R_corrected")


def csv_row(scenario: str, report: KeyRateReport, verdict: Verdict) -> str:
    """One harness CSV row; `scenario` must not contain commas."""
    if "," in scenario:
        raise ValueError("scenario id must not contain commas")
    vals = [report.F.lower, report.F.upper, report.F_prime.lower,
            report.F_prime.upper]
    rates = [report.R_incorrect, report.R_naive, report.R_corrected]
    return ",".join([scenario]
                    + [f"{v:.9g}" for v in vals]
                    + [verdict.relation, f"{verdict.margin:.9g}"]
                    + [f"{r:.9g}" for r in rates])
