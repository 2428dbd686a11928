"""Dense primal-dual interior-point solver for small semidefinite programs.

Solves   min <C, X>   s.t.  <A_i, X> = b_i,  <G_j, X> >= h_j (or <=),  X PSD,
optionally with an affine block (A c = b coupled through the bordered matrix
[[X, c], [c^T, 1]] PSD), which is how the vector-variable form is embedded.

Algorithm: infeasible-start path following with Nesterov-Todd scaling and a
Mehrotra predictor-corrector, inequality rows carried as nonnegative slack
scalars, and the Newton step reduced to dense Schur-complement normal
equations. Constraint matrices are normalized to unit Frobenius norm up
front, which conditions the Schur system and makes the iterate path exactly
invariant under power-of-two data scalings.

Equality rows that are linear combinations of earlier rows are dropped in
presolve (their multipliers are reported as zero); if the combination is
inconsistent the instance is certified infeasible before any iteration.

Steps are verified against the cone and backtracked when rounding in the
factorizations overestimates the boundary step. The best iterate seen is
retained; if progress stalls, the run ends there and is still reported
optimal when every residual meets `tol_accept` (the attained accuracy is
always visible in `residuals`).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular, svd

__all__ = [
    "SdpInstance",
    "SdpOptions",
    "SdpSolution",
    "KktReport",
    "solve",
    "check_kkt",
    "DIM_CAP",
]

DIM_CAP = 64


# ---------------------------------------------------------------------------
# instance / options / solution records
# ---------------------------------------------------------------------------


def _sym_check(mat, name):
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square")
    dev = np.abs(m - m.T).max()
    if dev > 1e-10 * max(1.0, np.abs(m).max()):
        raise ValueError(f"{name} is not symmetric (deviation {dev:.3e})")
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class SdpInstance:
    """Problem data. Equalities are (matrix, rhs, label) triples; inequalities
    are (matrix, sense, rhs, label) with sense '>=' or '<='."""

    cost: np.ndarray
    equalities: tuple = ()
    inequalities: tuple = ()
    affine: tuple = None  # (A, b) rows on the bordered vector variable

    def __post_init__(self):
        cost = _sym_check(self.cost, "cost")
        object.__setattr__(self, "cost", cost)
        dim = cost.shape[0]
        eqs = []
        for mat, rhs, label in self.equalities:
            m = _sym_check(mat, f"equality '{label}'")
            if m.shape[0] != dim:
                raise ValueError("constraint dimension mismatch")
            eqs.append((m, float(rhs), str(label)))
        ineqs = []
        for mat, sense, rhs, label in self.inequalities:
            m = _sym_check(mat, f"inequality '{label}'")
            if m.shape[0] != dim:
                raise ValueError("constraint dimension mismatch")
            if sense not in (">=", "<="):
                raise ValueError("sense must be '>=' or '<='")
            ineqs.append((m, sense, float(rhs), str(label)))
        object.__setattr__(self, "equalities", tuple(eqs))
        object.__setattr__(self, "inequalities", tuple(ineqs))
        if not eqs and not ineqs and self.affine is None:
            raise ValueError("at least one constraint required")
        if self.affine is not None:
            a, b = self.affine
            a = np.atleast_2d(np.asarray(a, dtype=float))
            b = np.atleast_1d(np.asarray(b, dtype=float))
            if a.shape != (b.size, dim):
                raise ValueError("affine block shape mismatch")
            object.__setattr__(self, "affine", (a, b))
        total_dim = dim + (1 if self.affine is not None else 0)
        if total_dim > DIM_CAP:
            raise ValueError(f"dimension {total_dim} exceeds cap {DIM_CAP}")

    @property
    def dim(self):
        return self.cost.shape[0]


@dataclass(frozen=True)
class SdpOptions:
    tol_feas: float = 1e-10
    tol_gap: float = 1e-10
    tol_accept: float = 1e-7
    max_iters: int = 200
    verbose: bool = False
    frac_to_boundary: float = 0.98


@dataclass
class SdpSolution:
    status: str
    x_mat: np.ndarray
    x_vec: np.ndarray
    y_eq: np.ndarray
    y_ineq: np.ndarray
    slacks: np.ndarray
    dual_slack: np.ndarray
    primal_obj: float
    dual_obj: float
    gap: float
    rel_gap: float
    iterations: int
    residuals: dict
    eq_labels: tuple
    ineq_labels: tuple
    certificate: np.ndarray = None
    trace: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _svec(m):
    d = m.shape[0]
    iu = np.triu_indices(d, 1)
    return np.concatenate([np.diag(m), np.sqrt(2.0) * m[iu]])


def _presolve_equalities(mats, rhs):
    """Gram-Schmidt rank screen in svec space.

    Returns (kept, dropped, inconsistent): a dependent row whose right-hand
    side disagrees with the implied combination certifies infeasibility.
    """
    kept, dropped = [], []
    basis, rhs_basis = [], []
    for i, (mat, r) in enumerate(zip(mats, rhs)):
        v = _svec(mat)
        rr = r
        for q, rq in zip(basis, rhs_basis):
            coef = q @ v
            v = v - coef * q
            rr = rr - coef * rq
        nv = np.linalg.norm(v)
        if nv > 1e-12:
            basis.append(v / nv)
            rhs_basis.append(rr / nv)
            kept.append(i)
        else:
            if abs(rr) > 1e-10:
                return kept, dropped + [i], True
            dropped.append(i)
    return kept, dropped, False


def _chol_ridged(m):
    """Cholesky with a tiny escalating ridge for boundary iterates."""
    ridge = 0.0
    base = max(float(np.trace(m)) / m.shape[0], 1e-300)
    for _ in range(4):
        try:
            return cholesky(m + ridge * np.eye(m.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            ridge = max(ridge * 1e3, 1e-14 * base)
    raise np.linalg.LinAlgError("matrix not positive definite even with ridge")


def _nt_scaling(x, z):
    """Scaling R with R^-1 X R^-T = R^T Z R = diag(sig)."""
    lx = _chol_ridged(x)
    lz = _chol_ridged(z)
    u, sig, vt = svd(lz.T @ lx)
    sqrt_sig = np.sqrt(sig)
    r = (lx @ vt.T) / sqrt_sig
    rinv = (u / sqrt_sig).T @ lz.T
    return r, rinv, sig


def _max_step_psd(x, dx):
    l = _chol_ridged(x)
    w = solve_triangular(l, dx, lower=True)
    w = solve_triangular(l, w.T, lower=True)
    lam_min = np.linalg.eigvalsh(0.5 * (w + w.T)).min()
    if lam_min >= -1e-16:
        return np.inf
    return -1.0 / lam_min


def _max_step_pos(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


# ---------------------------------------------------------------------------
# core solve
# ---------------------------------------------------------------------------


def solve(instance, options=None):
    """Run the interior-point method; see module docstring."""
    opts = options or SdpOptions()

    # ----- optional bordered embedding of the affine block
    d0 = instance.dim
    border = instance.affine is not None
    d = d0 + 1 if border else d0

    def _embed(mat):
        if not border:
            return mat
        out = np.zeros((d, d))
        out[:d0, :d0] = mat
        return out

    cost = _embed(instance.cost)
    eq_mats, eq_rhs, eq_labels = [], [], []
    for mat, rhs, label in instance.equalities:
        eq_mats.append(_embed(mat))
        eq_rhs.append(rhs)
        eq_labels.append(label)
    if border:
        corner = np.zeros((d, d))
        corner[d0, d0] = 1.0
        eq_mats.append(corner)
        eq_rhs.append(1.0)
        eq_labels.append("homogeneous")
        a_blk, b_blk = instance.affine
        for j in range(b_blk.size):
            row = np.zeros((d, d))
            row[:d0, d0] = 0.5 * a_blk[j]
            row[d0, :d0] = 0.5 * a_blk[j]
            eq_mats.append(row)
            eq_rhs.append(b_blk[j])
            eq_labels.append(f"affine-{j}")

    # inequalities normalized to <A, X> - s = h, s >= 0
    ineq_mats, ineq_rhs, ineq_labels = [], [], []
    for mat, sense, rhs, label in instance.inequalities:
        sgn = 1.0 if sense == ">=" else -1.0
        ineq_mats.append(sgn * _embed(mat))
        ineq_rhs.append(sgn * rhs)
        ineq_labels.append(label)

    # ----- normalize data
    cost_scale = max(float(np.linalg.norm(cost)), 1e-300)
    cost_n = cost / cost_scale
    eq_scales = [max(float(np.linalg.norm(m)), 1e-300) for m in eq_mats]
    eq_n = [m / s for m, s in zip(eq_mats, eq_scales)]
    eqb_n = [r / s for r, s in zip(eq_rhs, eq_scales)]
    in_scales = [max(float(np.linalg.norm(m)), 1e-300) for m in ineq_mats]
    in_n = [m / s for m, s in zip(ineq_mats, in_scales)]
    inb_n = [r / s for r, s in zip(ineq_rhs, in_scales)]

    # ----- presolve the equality rows
    n_eq_orig = len(eq_n)
    kept, dropped, inconsistent = _presolve_equalities(eq_n, eqb_n)
    if inconsistent:
        sol = _empty_solution(instance, d0, border, "infeasible")
        sol.residuals["presolve"] = "inconsistent dependent equality row"
        return sol
    eq_n = [eq_n[i] for i in kept]
    eqb_n = [eqb_n[i] for i in kept]

    mats = eq_n + in_n
    rhs = np.array(eqb_n + inb_n, dtype=float)
    n_eq = len(eq_n)
    n_in = len(in_n)
    m_all = n_eq + n_in
    svecs = np.array([_svec(m) for m in mats])

    def _aop(xm):
        return svecs @ _svec(xm)

    def _aadj(yv):
        out = np.zeros((d, d))
        for i in range(m_all):
            if yv[i] != 0.0:
                out += yv[i] * mats[i]
        return out

    # ----- starting point (data is O(1) after normalization)
    rho = max(1.0, float(np.abs(rhs).max()))
    x = rho * np.eye(d)
    z = np.eye(d)
    y = np.zeros(m_all)
    y[n_eq:] = 1.0  # inequality multipliers must start interior
    s = np.full(n_in, rho)

    nu = d + n_in
    status = "max_iters"
    certificate = None
    trace = []
    pin = din = relgap = np.nan
    it = 0
    best = None
    best_merit = np.inf
    # stall reference: last max(pin, din) that halved. The gap is excluded
    # on purpose: an infeasible start can park relgap near 1 for many
    # iterations while feasibility steadily improves.
    ref_merit = np.inf
    ref_it = 0

    def _certificate_ray(min_norm_y, min_trace_x):
        """Validated Farkas-style rays from the current iterate, or None.

        Rays are rescaled before validation (b'y = 1, <C, x> = -1) so the
        residual thresholds are absolute: a large diverging iterate of a
        feasible problem cannot hide its violations behind its own norm.
        """
        ny = float(np.linalg.norm(y))
        if ny > min_norm_y:
            bval = float(rhs @ y)
            if bval > 1e-10 * ny:
                yc = y / bval
                zf = -_aadj(yc)
                wmin = float(yc[n_eq:].min()) if n_in else 0.0
                if float(np.linalg.eigvalsh(zf).min()) > -1e-8 and wmin > -1e-8:
                    return "infeasible", yc
        tx = float(np.trace(x))
        if tx > min_trace_x:
            cval = float(np.sum(cost_n * x))
            if cval < -1e-10 * tx:
                xc = x / (-cval)
                axc = _aop(xc)
                viol = np.concatenate(
                    [np.atleast_1d(axc[:n_eq]), np.minimum(axc[n_eq:], 0.0)]
                )
                if float(np.abs(viol).max() if viol.size else 0.0) < 1e-8:
                    return "unbounded", xc
        return None

    for it in range(1, opts.max_iters + 1):
        w = y[n_eq:]
        ax = _aop(x)
        r_p = rhs - ax
        if n_in:
            r_p[n_eq:] += s
        r_d = cost_n - _aadj(y) - z
        pin = float(np.linalg.norm(r_p)) / (1.0 + float(np.linalg.norm(rhs)))
        din = float(np.linalg.norm(r_d)) / (1.0 + float(np.linalg.norm(cost_n)))
        pobj = float(np.sum(cost_n * x))
        dobj = float(rhs @ y)
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        mu = (float(np.sum(x * z)) + (float(s @ w) if n_in else 0.0)) / nu
        if opts.verbose:
            trace.append(
                {
                    "iter": it,
                    "mu": mu,
                    "pinf": pin,
                    "dinf": din,
                    "relgap": relgap,
                    "pobj": pobj,
                    "dobj": dobj,
                    "gap": pobj - dobj,
                }
            )

        merit = max(pin, din, relgap)
        if merit < best_merit:
            best_merit = merit
            best = (x.copy(), y.copy(), z.copy(), s.copy(), pin, din, relgap)
        prog = max(pin, din)
        if prog < 0.5 * ref_merit:
            ref_merit = prog
            ref_it = it

        if pin <= opts.tol_feas and din <= opts.tol_feas and relgap <= opts.tol_gap:
            status = "optimal"
            break

        # divergence certificates, disabled once the iterate path has come
        # near a solution: a convergent but ill-conditioned solve must fall
        # through to the stall exit instead of a spurious certificate
        if best_merit > 1e-3:
            got = _certificate_ray(1e6, 1e8)
            if got is not None:
                status, certificate = got
                break

        if it - ref_it >= 15:
            break  # no factor-2 progress in 15 iterations: stalled

        try:
            r_sc, rinv_sc, sig = _nt_scaling(x, z)
        except np.linalg.LinAlgError:
            status = "failed"
            break
        wmat = r_sc @ r_sc.T
        lyap = np.add.outer(sig, sig)

        # Schur matrix M[i,j] = <A_i, W A_j W> (+ s/w on inequality diagonal)
        t_svecs = np.empty_like(svecs)
        for i in range(m_all):
            t = wmat @ mats[i] @ wmat
            t_svecs[i] = _svec(0.5 * (t + t.T))
        schur = svecs @ t_svecs.T
        schur = 0.5 * (schur + schur.T)
        if n_in:
            idx = np.arange(n_eq, m_all)
            schur[idx, idx] += s / w
        if not np.all(np.isfinite(schur)):
            status = "failed"
            break
        jitter = 0.0
        cf = None
        for _ in range(6):
            try:
                cf = cho_factor(
                    schur + jitter * np.eye(m_all), lower=True, check_finite=False
                )
                break
            except np.linalg.LinAlgError:
                jitter = max(
                    jitter * 1e3, 1e-13 * max(np.trace(schur) / m_all, 1.0)
                )
        if cf is None:
            status = "failed"
            break

        def _solve_schur(rv):
            out = cho_solve(cf, rv, check_finite=False)
            # one refinement pass keeps the 1e-10 targets honest
            out += cho_solve(cf, rv - schur @ out, check_finite=False)
            return out

        def _direction(rc_mat, rc_s):
            xc = r_sc @ (2.0 * rc_mat / lyap) @ r_sc.T
            rhs_y = r_p - _aop(xc - wmat @ r_d @ wmat)
            if n_in:
                rhs_y[n_eq:] += rc_s / w
            dy = _solve_schur(rhs_y)
            dz = r_d - _aadj(dy)
            dx = xc - wmat @ dz @ wmat
            dx = 0.5 * (dx + dx.T)
            ds = (rc_s - s * dy[n_eq:]) / w if n_in else np.zeros(0)
            return dx, dz, dy, ds

        # predictor
        rc_aff = -np.diag(sig * sig)
        rcs_aff = -(s * w) if n_in else np.zeros(0)
        dxa, dza, dya, dsa = _direction(rc_aff, rcs_aff)
        dwa = dya[n_eq:]
        ap = min(1.0, _max_step_psd(x, dxa), _max_step_pos(s, dsa) if n_in else np.inf)
        ad = min(1.0, _max_step_psd(z, dza), _max_step_pos(w, dwa) if n_in else np.inf)
        mu_aff = (
            float(np.sum((x + ap * dxa) * (z + ad * dza)))
            + (float((s + ap * dsa) @ (w + ad * dwa)) if n_in else 0.0)
        ) / nu
        sigma = min(1.0, max(0.0, mu_aff / mu) ** 3)

        # corrector
        dxh = rinv_sc @ dxa @ rinv_sc.T
        dzh = r_sc.T @ dza @ r_sc
        cross = dxh @ dzh
        rc = sigma * mu * np.eye(d) - np.diag(sig * sig) - 0.5 * (cross + cross.T)
        rcs = (sigma * mu - s * w - dsa * dwa) if n_in else np.zeros(0)
        dx, dz, dy, ds = _direction(rc, rcs)
        dw = dy[n_eq:]

        f = opts.frac_to_boundary
        ap = min(
            1.0,
            f * _max_step_psd(x, dx),
            f * _max_step_pos(s, ds) if n_in else np.inf,
        )
        ad = min(
            1.0,
            f * _max_step_psd(z, dz),
            f * _max_step_pos(w, dw) if n_in else np.inf,
        )
        # verify the step against the cone before accepting it: the ridged
        # factors can overestimate the boundary step near degeneracy. Near
        # convergence a step that blows the complementarity product back up
        # is rejected the same way.
        near = pin < 1e-6 and din < 1e-6
        accepted = False
        for _ in range(25):
            if min(ap, ad) < 1e-14:
                break
            x_new = x + ap * dx
            x_new = 0.5 * (x_new + x_new.T)
            z_new = z + ad * dz
            z_new = 0.5 * (z_new + z_new.T)
            s_new = s + ap * ds
            w_new = w + ad * dw
            if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(z_new))):
                ap *= 0.5
                ad *= 0.5
                continue
            if n_in and s_new.size and (s_new.min() <= 0.0 or w_new.min() <= 0.0):
                ap *= 0.5
                ad *= 0.5
                continue
            if (
                float(np.linalg.eigvalsh(x_new).min()) <= 0.0
                or float(np.linalg.eigvalsh(z_new).min()) <= 0.0
            ):
                ap *= 0.5
                ad *= 0.5
                continue
            mu_new = (
                float(np.sum(x_new * z_new))
                + (float(s_new @ w_new) if n_in else 0.0)
            ) / nu
            if near and mu_new > 10.0 * mu + opts.tol_gap:
                ap *= 0.5
                ad *= 0.5
                continue
            accepted = True
            break
        if not accepted:
            break  # pinned against the cone; fall back to the best iterate
        x, z, s = x_new, z_new, s_new
        y = y + ad * dy

    if status in ("max_iters", "failed"):
        if best_merit > 1e-3:
            # far from any solution: retry the certificates with relaxed
            # divergence gates before reporting non-convergence
            got = _certificate_ray(1e2, 1e2 * d * rho)
            if got is not None:
                status, certificate = got
        if certificate is None and best is not None:
            x, y, z, s, pin, din, relgap = best
            if max(pin, din, relgap) <= opts.tol_accept:
                status = "optimal"

    # ----- unscale and repack
    y_full = np.zeros(n_eq_orig + n_in)
    for pos, i in enumerate(kept):
        y_full[i] = y[pos] * cost_scale / eq_scales[i]
    for j in range(n_in):
        y_full[n_eq_orig + j] = y[n_eq + j] * cost_scale / in_scales[j]
    # report the recombined slack so Q* = C - A*(y) holds exactly; it may sit
    # a hair outside the cone (within the dual feasibility tolerance)
    dual_slack = cost - sum(y_full[i] * eq_mats[i] for i in range(n_eq_orig))
    dual_slack -= sum(y_full[n_eq_orig + j] * ineq_mats[j] for j in range(n_in))
    pobj = float(np.sum(cost_n * x) * cost_scale)
    dobj = float(
        sum(eq_rhs[i] * y_full[i] for i in range(n_eq_orig))
        + sum(ineq_rhs[j] * y_full[n_eq_orig + j] for j in range(n_in))
    )
    gap = pobj - dobj
    relgap_out = abs(gap) / (1.0 + abs(pobj) + abs(dobj))

    if border:
        # x_mat/x_vec are the blocks of the bordered iterate; the dual slack
        # stays full-size since it certifies the bordered PSD constraint
        c_mat = x[:d0, :d0]
        c_vec = x[:d0, d0].copy()
    else:
        c_mat = x
        c_vec = None
    dual_slack_out = dual_slack

    n_eq_inst = len(instance.equalities)
    return SdpSolution(
        status=status,
        x_mat=0.5 * (c_mat + c_mat.T),
        x_vec=c_vec,
        y_eq=y_full[:n_eq_inst].copy(),
        y_ineq=y_full[n_eq_orig:].copy(),
        slacks=s.copy(),
        dual_slack=0.5 * (dual_slack_out + dual_slack_out.T),
        primal_obj=pobj,
        dual_obj=dobj,
        gap=float(gap),
        rel_gap=float(relgap_out),
        iterations=it,
        residuals={
            "primal": pin,
            "dual": din,
            "relgap": relgap,
            "dropped_equalities": tuple(dropped),
        },
        eq_labels=tuple(eq_labels[:n_eq_inst]),
        ineq_labels=tuple(ineq_labels),
        certificate=certificate,
        trace=trace,
    )


def _empty_solution(instance, d0, border, status):
    return SdpSolution(
        status=status,
        x_mat=np.zeros((d0, d0)),
        x_vec=np.zeros(d0) if border else None,
        y_eq=np.zeros(len(instance.equalities)),
        y_ineq=np.zeros(len(instance.inequalities)),
        slacks=np.zeros(len(instance.inequalities)),
        dual_slack=np.zeros((d0, d0)),
        primal_obj=np.nan,
        dual_obj=np.nan,
        gap=np.nan,
        rel_gap=np.nan,
        iterations=0,
        residuals={},
        eq_labels=tuple(lbl for _, _, lbl in instance.equalities),
        ineq_labels=tuple(lbl for _, _, _, lbl in instance.inequalities),
    )


# ---------------------------------------------------------------------------
# independent KKT audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KktReport:
    """The named optimality residuals, all normalized and recomputed from
    the instance data alone."""

    primal_psd: float
    equalities: float
    received_power: float
    inequalities: float
    dual_sign: float
    dual_psd: float
    comp_slack: float

    def max_residual(self):
        return max(
            self.primal_psd,
            self.equalities,
            self.received_power,
            self.inequalities,
            self.dual_sign,
            self.dual_psd,
            self.comp_slack,
        )


def check_kkt(instance, solution):
    """Audit a solution against the instance from scratch.

    The received-power entry singles out the equality labeled
    'received-power' (the unit-transfer row of the relaxation); for generic
    instances it stays zero and the row is folded into `equalities`.
    """
    c = solution.x_mat
    if instance.affine is not None and solution.x_vec is not None:
        # affine form: the PSD constraint lives on the bordered matrix
        d0 = c.shape[0]
        full = np.empty((d0 + 1, d0 + 1))
        full[:d0, :d0] = c
        full[:d0, d0] = solution.x_vec
        full[d0, :d0] = solution.x_vec
        full[d0, d0] = 1.0
    else:
        full = c
    scale_x = 1.0 + float(np.abs(full).max())
    primal_psd = max(0.0, -float(np.linalg.eigvalsh(full).min())) / scale_x

    eq_res, rp_res = 0.0, 0.0
    for mat, rhs, label in instance.equalities:
        val = float(np.sum(mat * c))
        r = abs(val - rhs) / (1.0 + abs(rhs))
        if label == "received-power":
            rp_res = max(rp_res, r)
        else:
            eq_res = max(eq_res, r)
    if instance.affine is not None and solution.x_vec is not None:
        a_blk, b_blk = instance.affine
        res = a_blk @ solution.x_vec - b_blk
        eq_res = max(
            eq_res, float(np.abs(res).max()) / (1.0 + float(np.abs(b_blk).max()))
        )

    ineq_res = dual_sign = 0.0
    obj_scale = 1.0 + abs(solution.primal_obj)
    for (mat, sense, rhs, label), lam in zip(instance.inequalities, solution.y_ineq):
        val = float(np.sum(mat * c))
        slack = (val - rhs) if sense == ">=" else (rhs - val)
        ineq_res = max(ineq_res, max(0.0, -slack) / (1.0 + abs(rhs)))
        dual_sign = max(dual_sign, max(0.0, -float(lam)))

    q = 0.5 * (solution.dual_slack + solution.dual_slack.T)
    scale_q = 1.0 + float(np.abs(q).max())
    dual_psd = max(0.0, -float(np.linalg.eigvalsh(q).min())) / scale_q
    cs = abs(float(np.sum(q * full))) / obj_scale

    return KktReport(
        primal_psd=primal_psd,
        equalities=eq_res,
        received_power=rp_res,
        inequalities=ineq_res,
        dual_sign=dual_sign,
        dual_psd=dual_psd,
        comp_slack=cs,
    )
