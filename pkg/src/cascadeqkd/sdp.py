"""Dense primal-dual interior-point method for small linear SDPs.

Problems are given in standard equality form over a product of
complex-Hermitian PSD blocks (1x1 blocks act as nonnegative scalars):

    minimize    sum_j <C_j, X_j>
    subject to  sum_j <A_ij, X_j> = b_i   for i = 1..m,    every X_j >= 0,

with <A, B> = Re tr(A^dag B).  The implementation uses Nesterov-Todd scaling
with adaptively centered steps, plus an SVD preprocessing pass that drops
linearly dependent equality rows and raises if they are inconsistent.  Block
sizes here never exceed a few dozen rows, so everything is dense and the
Schur complement is formed explicitly.

Weak duality makes any dual vector a certificate: `certified_bound` converts
one into a sound lower bound on the primal optimum by penalizing the PSD
defect of its slack matrix against caller-supplied trace caps.  Downstream
bounds therefore stay valid even when the returned dual point is marginally
infeasible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import hermitize

_SQRT2 = np.sqrt(2.0)


class SDPError(RuntimeError):
    pass


class SDPInfeasibleError(SDPError):
    """The equality system is inconsistent (no solution, PSD or otherwise)."""


def svec(a: np.ndarray) -> np.ndarray:
    """Isometric real vectorization of a complex Hermitian matrix."""
    d = a.shape[0]
    iu, ju = np.triu_indices(d, k=1)
    out = np.empty(d * d)
    out[:d] = np.real(np.diag(a))
    off = a[iu, ju]
    out[d:d + iu.size] = _SQRT2 * off.real
    out[d + iu.size:] = _SQRT2 * off.imag
    return out


def smat(v: np.ndarray, d: int) -> np.ndarray:
    """Inverse of svec."""
    iu, ju = np.triu_indices(d, k=1)
    a = np.zeros((d, d), dtype=complex)
    a[np.arange(d), np.arange(d)] = v[:d]
    re = v[d:d + iu.size] / _SQRT2
    im = v[d + iu.size:] / _SQRT2
    a[iu, ju] = re + 1j * im
    a[ju, iu] = re - 1j * im
    return a


def _svec_cat(mats) -> np.ndarray:
    return np.concatenate([svec(m) for m in mats])


def _smat_split(v: np.ndarray, dims) -> list:
    out = []
    k = 0
    for d in dims:
        out.append(smat(v[k:k + d * d], d))
        k += d * d
    return out


def _inner(xs, ys) -> float:
    return float(sum(np.real(np.trace(x.conj().T @ y)) for x, y in zip(xs, ys)))


def _min_eig(blocks) -> float:
    return min(float(np.linalg.eigvalsh(hermitize(m))[0]) for m in blocks)


def _floored(w: np.ndarray) -> np.ndarray:
    # relative floor keeps scaling matrices finite on near-singular iterates
    return np.maximum(w, max(float(w[-1]), 0.0) * 1e-14 + 1e-100)


def _step_to_boundary(xs, dxs) -> float:
    """Largest alpha with X + alpha*dX still PSD, per block, capped at 10."""
    alpha = 10.0
    for x, dx in zip(xs, dxs):
        w, v = np.linalg.eigh(hermitize(x))
        w = _floored(w)
        xmh = (v / np.sqrt(w)) @ v.conj().T
        lam = np.linalg.eigvalsh(hermitize(xmh @ dx @ xmh))[0]
        if lam < -1e-14:
            alpha = min(alpha, -1.0 / lam)
    return alpha


def _take_step(blocks, deltas, alpha: float):
    """Halve alpha until every updated block is strictly positive definite."""
    for _ in range(60):
        trial = [hermitize(b + alpha * d) for b, d in zip(blocks, deltas)]
        if _min_eig(trial) > 0.0:
            return alpha, trial
        alpha *= 0.5
    return 0.0, list(blocks)


@dataclass
class SDPResult:
    value: float
    dual_value: float
    x_blocks: list
    s_blocks: list
    y: np.ndarray
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool


def _pack_rows(rows, dims, ntot) -> np.ndarray:
    amat = np.zeros((len(rows), ntot))
    for i, row in enumerate(rows):
        if len(row) != len(dims):
            raise ValueError(f"constraint {i} has {len(row)} blocks, expected {len(dims)}")
        k = 0
        for j, d in enumerate(dims):
            if row[j] is not None:
                amat[i, k:k + d * d] = svec(np.asarray(row[j], dtype=complex))
            k += d * d
    return amat


def solve(c_blocks, rows, b, tol: float = 1e-9, max_iter: int = 200) -> SDPResult:
    """Solve the block SDP; `rows[i][j]` is A_ij or None for a zero block."""
    c_blocks = [hermitize(np.asarray(c, dtype=complex)) for c in c_blocks]
    dims = [c.shape[0] for c in c_blocks]
    ntot = sum(d * d for d in dims)
    b = np.asarray(b, dtype=float)
    amat = _pack_rows(rows, dims, ntot)
    if amat.shape[0] != b.size:
        raise ValueError("rows/b length mismatch")

    # Reduce to an orthonormal, full-rank equality system.
    u, sv, vt = np.linalg.svd(amat, full_matrices=False)
    rank = int(np.sum(sv > max(sv[0] if sv.size else 0.0, 1.0) * 1e-12))
    if rank == 0:
        raise ValueError("no effective constraints")
    u_r, sv_r, a_red = u[:, :rank], sv[:rank], vt[:rank]
    b_proj = u_r.T @ b
    if np.linalg.norm(b - u_r @ b_proj) > 1e-8 * (1.0 + np.linalg.norm(b)):
        raise SDPInfeasibleError(
            "equality constraints are mutually inconsistent "
            f"(residual {np.linalg.norm(b - u_r @ b_proj):.3e})")
    b_red = b_proj / sv_r
    a_mats = [_smat_split(a_red[i], dims) for i in range(rank)]

    norm_b = 1.0 + np.linalg.norm(b_red)
    norm_c = 1.0 + max(np.linalg.norm(c) for c in c_blocks)
    x0 = max(1.0, float(np.linalg.norm(b_red)))
    s0 = max(1.0, max(float(np.abs(c).max()) for c in c_blocks))
    xs = [x0 * np.eye(d, dtype=complex) for d in dims]
    ss = [s0 * np.eye(d, dtype=complex) for d in dims]
    y = np.zeros(rank)
    nu = float(sum(dims))

    def result(it, converged):
        pobj = _inner(c_blocks, xs)
        y_orig = u_r @ (y / sv_r)
        dobj = float(b @ y_orig)
        rp = b_red - a_red @ _svec_cat(xs)
        aty = _smat_split(a_red.T @ y, dims)
        rd = [c_blocks[j] - aty[j] - ss[j] for j in range(len(dims))]
        return SDPResult(
            value=pobj, dual_value=dobj, x_blocks=xs, s_blocks=ss, y=y_orig,
            gap=abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)),
            primal_residual=float(np.linalg.norm(rp)) / norm_b,
            dual_residual=float(np.sqrt(sum(np.linalg.norm(r) ** 2 for r in rd))) / norm_c,
            iterations=it, converged=converged)

    # near the accuracy floor the NT system turns ill-conditioned and the
    # iterates thrash; keep the best-scored iterate and stop once it stops
    # improving, so failure still returns the most accurate point seen
    best = None
    best_score = np.inf
    stalled = 0
    for it in range(1, max_iter + 1):
        xvec = _svec_cat(xs)
        rp = b_red - a_red @ xvec
        aty = _smat_split(a_red.T @ y, dims)
        rd = [c_blocks[j] - aty[j] - ss[j] for j in range(len(dims))]
        mu = _inner(xs, ss) / nu

        prim_res = np.linalg.norm(rp) / norm_b
        dual_res = np.sqrt(sum(np.linalg.norm(r) ** 2 for r in rd)) / norm_c
        pobj = _inner(c_blocks, xs)
        dobj = float(b_red @ y)
        rel_gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        if prim_res < tol and dual_res < tol and (rel_gap < tol or mu * nu < tol):
            return result(it, True)
        score = max(prim_res, dual_res, min(rel_gap, mu * nu))
        if score < best_score:
            best_score, stalled = score, 0
            best = ([x.copy() for x in xs], [s.copy() for s in ss],
                    y.copy(), it)
        else:
            stalled += 1
            if stalled >= 20:
                break

        # Nesterov-Todd scaling point W per block: W S W = X.
        ws = []
        sinvs = []
        for x, s in zip(xs, ss):
            wx, vx = np.linalg.eigh(hermitize(x))
            wx = _floored(wx)
            xh = (vx * np.sqrt(wx)) @ vx.conj().T
            wm, vm = np.linalg.eigh(hermitize(xh @ s @ xh))
            wm = _floored(wm)
            mih = (vm / np.sqrt(np.sqrt(wm))) @ vm.conj().T
            w = hermitize(xh @ mih @ mih @ xh)
            ws.append(w)
            es, vs = np.linalg.eigh(hermitize(s))
            es = _floored(es)
            sinvs.append((vs / es) @ vs.conj().T)

        g = np.empty((rank, ntot))
        for i in range(rank):
            g[i] = _svec_cat([ws[j] @ a_mats[i][j] @ ws[j] for j in range(len(dims))])
        schur = g @ a_red.T
        schur = 0.5 * (schur + schur.T)

        wrdw = _svec_cat([ws[j] @ rd[j] @ ws[j] for j in range(len(dims))])
        sinv_vec = _svec_cat(sinvs)

        def newton(sigma_mu):
            rhs = rp + a_red @ xvec + a_red @ wrdw - sigma_mu * (a_red @ sinv_vec)
            try:
                dy = np.linalg.solve(schur, rhs)
            except np.linalg.LinAlgError:
                dy = np.linalg.solve(schur + 1e-12 * np.trace(schur) * np.eye(rank), rhs)
            daty = _smat_split(a_red.T @ dy, dims)
            ds = [rd[j] - daty[j] for j in range(len(dims))]
            dx = [sigma_mu * sinvs[j] - xs[j] - ws[j] @ ds[j] @ ws[j]
                  for j in range(len(dims))]
            return dy, [hermitize(m) for m in dx], [hermitize(m) for m in ds]

        # Predictor fixes the centering weight, corrector takes the real step.
        _, dx_aff, ds_aff = newton(0.0)
        ap = min(1.0, _step_to_boundary(xs, dx_aff))
        ad = min(1.0, _step_to_boundary(ss, ds_aff))
        mu_aff = max(_inner([xs[j] + ap * dx_aff[j] for j in range(len(dims))],
                            [ss[j] + ad * ds_aff[j] for j in range(len(dims))]) / nu, 0.0)
        sigma = np.clip((mu_aff / mu) ** 3, 1e-8, 0.9) if mu > 0 else 0.1

        dy, dx, ds = newton(sigma * mu)
        ap, xs_new = _take_step(xs, dx, min(1.0, 0.98 * _step_to_boundary(xs, dx)))
        ad, ss_new = _take_step(ss, ds, min(1.0, 0.98 * _step_to_boundary(ss, ds)))
        if ap < 1e-10 and ad < 1e-10:
            break
        xs, ss = xs_new, ss_new
        y = y + ad * dy
        if _inner(xs, ss) > 1e16 * nu * max(x0 * s0, 1.0):
            break  # diverging; return the best effort, caller sees converged=False

    if best is not None:
        xs, ss, y, it = best
        return result(it, False)
    return result(max_iter, False)


def certified_bound(c_blocks, rows, b, y, trace_caps) -> tuple[float, float]:
    """Sound lower bound on the SDP optimum from any dual vector y.

    Weak duality gives <C, X> >= b.y for feasible X when C - A^T(y) >= 0.
    If instead C - A^T(y) >= -delta_j on block j, feasibility of X and
    tr(X_j) <= trace_caps[j] give <C, X> >= b.y - sum_j delta_j * cap_j.
    Returns (bound, max block defect).
    """
    c_blocks = [np.asarray(c, dtype=complex) for c in c_blocks]
    dims = [c.shape[0] for c in c_blocks]
    slacks = [c.copy() for c in c_blocks]
    for i, row in enumerate(rows):
        for j in range(len(dims)):
            if row[j] is not None:
                slacks[j] = slacks[j] - y[i] * np.asarray(row[j], dtype=complex)
    bound = float(np.asarray(b, dtype=float) @ y)
    worst = 0.0
    for j, s in enumerate(slacks):
        defect = max(0.0, -float(np.linalg.eigvalsh(hermitize(s))[0]))
        worst = max(worst, defect)
        bound -= defect * float(trace_caps[j])
    return bound, worst
