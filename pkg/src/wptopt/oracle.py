"""Independent verification of the operating-point solvers.

Small instances are solved by machinery that shares nothing with the main
solution path: the two affine rows are eliminated through an orthonormal
null-space basis and the remaining coordinates are either grid-scanned and
penalty-polished (:func:`brute_force_qcqp`, constrained instances) or handed
to a multistart quasi-Newton descent (:func:`minimize_loss_descent`,
unconstrained instances). :func:`verify_identities` recomputes the power
algebra identities of a whole system from scratch; the CLI `validate`
command runs it on every preset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize

from .closedform import solve_closed_form
from .pims import pim_eigensystem, pim_split, port_impedance_matrices, port_power
from .qcqp import build_affine, build_problem

__all__ = [
    "OracleReport",
    "IdentityCheck",
    "IdentityReport",
    "brute_force_qcqp",
    "minimize_loss_descent",
    "verify_identities",
]

FEASIBILITY_TOL = 1e-8
GRID_RESOLUTION = 41
PENALTY_ROUNDS = 6
PENALTY_FACTOR = 10.0


@dataclass(frozen=True)
class OracleReport:
    """Best point found by an oracle method.

    ``max_violation`` is the worst residual of the constraints the method
    enforced (power constraints for the grid oracle, the affine rows for
    the descent oracle). ``agreement_gap`` is the relative objective gap
    against the candidate value under test, NaN when none was supplied.
    """

    c: np.ndarray
    objective: float
    method: str
    evaluations: int
    agreement_gap: float
    max_violation: float


def _reduced_basis(problem):
    """Particular solution and orthonormal null-space basis of A c = b."""
    c0, *_ = np.linalg.lstsq(problem.a, problem.b, rcond=None)
    v = null_space(problem.a)
    if v.shape[1] != problem.m - problem.a.shape[0]:
        raise ValueError("affine rows of the instance are rank deficient")
    return c0, v


def _power_violations(problem, powers):
    viol = np.maximum(0.0, -powers)
    if problem.power_caps is not None:
        viol = np.maximum(viol, powers - np.asarray(problem.power_caps))
    return viol


def _gap(objective, candidate):
    if candidate is None:
        return float("nan")
    return abs(objective - candidate) / max(abs(candidate), 1e-300)


def brute_force_qcqp(problem, resolution=GRID_RESOLUTION, candidate=None):
    """Grid-scan + penalty-polish global solve of a small constrained QCQP.

    Limited to systems with at most three ports, where eliminating the two
    affine rows leaves at most three free coordinates. The scan box is
    centered on the unconstrained reduced optimum with half-width ten times
    the norm of that point; if no grid point is feasible the box is widened
    once before giving up.
    """
    if problem.m - 2 > 3:
        raise ValueError(
            "grid oracle supports at most 3 free coordinates "
            f"(got {problem.m - 2}); use minimize_loss_descent or the SDR"
        )
    if resolution < 3:
        raise ValueError("resolution must be at least 3")
    c0, v = _reduced_basis(problem)
    free = v.shape[1]

    # unconstrained optimum of the reduced strictly convex quadratic; it
    # fixes both the scan center and the scale of the search box
    h = v.T @ problem.q0 @ v
    t_star = np.linalg.solve(h, -(v.T @ (problem.q0 @ c0)))
    radius = 10.0 * max(float(np.linalg.norm(c0 + v @ t_star)), 1e-12)

    evaluations = 0
    best_t = best_obj = None
    for attempt in range(2):
        half = radius * (2.0 ** attempt)
        axes = [np.linspace(t_star[j] - half, t_star[j] + half, resolution)
                for j in range(free)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        cs = c0[None, :] + pts @ v.T
        obj = np.einsum("pi,ij,pj->p", cs, problem.q0, cs)
        powers = np.stack(
            [np.einsum("pi,ij,pj->p", cs, qn, cs) for qn in problem.q], axis=1
        )
        evaluations += pts.shape[0]
        feasible = (powers >= -FEASIBILITY_TOL).all(axis=1)
        if problem.power_caps is not None:
            caps = np.asarray(problem.power_caps)
            feasible &= (powers <= caps[None, :] + FEASIBILITY_TOL).all(axis=1)
        if feasible.any():
            masked = np.where(feasible, obj, np.inf)
            order = np.argsort(masked, kind="stable")  # stable: grid-index tie-break
            starts = [pts[int(i)] for i in order[: min(3, int(feasible.sum()))]]
            idx = int(order[0])
            best_t = pts[idx]
            best_obj = float(obj[idx])
            break
    if best_t is None:
        raise RuntimeError(
            "no feasible point on the oracle grid, even after widening; "
            "the constraints are likely infeasible"
        )

    caps = np.asarray(problem.power_caps) if problem.power_caps is not None else None

    def _powers(c):
        return np.array([float(c @ (qn @ c)) for qn in problem.q])

    def penalized(t, weight):
        c = c0 + v @ t
        qc = problem.q0 @ c
        val = float(c @ qc)
        grad = 2.0 * (v.T @ qc)
        for j, qn in enumerate(problem.q):
            pj = float(c @ (qn @ c))
            lo = max(0.0, -pj)
            if lo > 0.0:
                val += weight * lo * lo
                grad -= 4.0 * weight * lo * (v.T @ (qn @ c))
            if caps is not None:
                hi = max(0.0, pj - caps[j])
                if hi > 0.0:
                    val += weight * hi * hi
                    grad += 4.0 * weight * hi * (v.T @ (qn @ c))
        return val, grad

    def _restore(t):
        # Gauss-Newton push of the residual penalty-round violations onto
        # the constraint boundary; negligible objective drift
        nonlocal evaluations
        for _ in range(6):
            c = c0 + v @ t
            p = _powers(c)
            evaluations += 1
            res, rows = [], []
            for j, qn in enumerate(problem.q):
                if p[j] < 0.0:
                    res.append(-p[j])
                    rows.append(2.0 * (v.T @ (qn @ c)))
                elif caps is not None and p[j] > caps[j]:
                    res.append(caps[j] - p[j])
                    rows.append(2.0 * (v.T @ (qn @ c)))
            if not rows:
                break
            dt, *_ = np.linalg.lstsq(np.stack(rows), np.array(res), rcond=None)
            t = t + dt
        return t

    # penalty polish of the leading feasible grid points plus the exterior
    # homotopy start at the unconstrained optimum, weight escalating tenfold
    # per round from an objective-scaled base
    starts.append(t_star)
    viol = float(_power_violations(problem, _powers(c0 + v @ best_t)).max())
    for t0 in starts:
        t_cur = t0.copy()
        weight = max(1.0, abs(best_obj))
        for _ in range(PENALTY_ROUNDS):
            res = minimize(
                penalized, t_cur, args=(weight,), jac=True,
                method="L-BFGS-B", tol=1e-10,
            )
            t_cur = res.x
            evaluations += int(res.nfev)
            weight *= PENALTY_FACTOR
        t_cur = _restore(t_cur)
        c_ref = c0 + v @ t_cur
        obj_ref = float(c_ref @ problem.q0 @ c_ref)
        viol_ref = float(_power_violations(problem, _powers(c_ref)).max())
        # refinement never hands back a worse or infeasible answer
        if viol_ref <= FEASIBILITY_TOL and obj_ref <= best_obj:
            best_t, best_obj, viol = t_cur, obj_ref, viol_ref

    c_best = c0 + v @ best_t
    return OracleReport(
        c=c_best,
        objective=best_obj,
        method="grid",
        evaluations=evaluations,
        agreement_gap=_gap(best_obj, candidate),
        max_violation=viol,
    )


def minimize_loss_descent(problem, n_starts=8, seed=0, candidate=None):
    """Multistart quasi-Newton descent on the reduced unconstrained loss.

    Ignores the power constraints: this is the oracle for the analytic
    minimum-loss solution on systems of any size. The objective is strictly
    convex, so every start must land on the same point; the spread across
    starts is folded into ``max_violation`` as a sanity term.
    """
    c0, v = _reduced_basis(problem)
    free = v.shape[1]

    def fun(t):
        c = c0 + v @ t
        qc = problem.q0 @ c
        return float(c @ qc), 2.0 * (v.T @ qc)

    rng = np.random.default_rng(seed)
    scale = 10.0 * (1.0 + float(np.linalg.norm(c0)))
    starts = [np.zeros(free)]
    starts += [scale * rng.standard_normal(free) for _ in range(max(0, n_starts - 1))]

    evaluations = 0
    results = []
    for t0 in starts:
        res = minimize(fun, t0, jac=True, method="L-BFGS-B", tol=1e-12)
        evaluations += int(res.nfev)
        results.append((float(res.fun), res.x))
    best_obj, best_t = min(results, key=lambda r: r[0])
    spread = max(abs(f - best_obj) for f, _ in results) / max(abs(best_obj), 1e-300)

    c_best = c0 + v @ best_t
    affine_res = float(np.abs(problem.a @ c_best - problem.b).max())
    return OracleReport(
        c=c_best,
        objective=best_obj,
        method="multistart",
        evaluations=evaluations,
        agreement_gap=_gap(best_obj, candidate),
        max_violation=max(affine_res, spread),
    )


# ---------------------------------------------------------------------------
# cross-module identity audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    residual: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class IdentityReport:
    checks: tuple

    @property
    def all_pass(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def summary(self):
        lines = []
        for c in self.checks:
            state = "PASS" if c.passed else "FAIL"
            extra = f"  [{c.detail}]" if c.detail else ""
            lines.append(
                f"{state}  {c.name}: residual {c.residual:.3e} (tol {c.tolerance:.0e}){extra}"
            )
        return "\n".join(lines)


def verify_identities(z, r_load=None):
    """Recompute the power-algebra identities of a system from scratch.

    Never raises: every check is evaluated independently and failures
    (including exceptions inside a check) are enumerated in the report.
    Accepts an ImpedanceMatrix or a plain complex array, so deliberately
    corrupted matrices can be audited too.
    """
    zmat = np.asarray(getattr(z, "entries", z), dtype=complex)
    system = z if hasattr(z, "entries") else zmat
    n = zmat.shape[0]
    checks = []

    def run(name, tol, fn):
        try:
            residual = float(fn())
            detail = ""
        except Exception as exc:
            residual = float("inf")
            detail = f"{type(exc).__name__}: {exc}"
        checks.append(IdentityCheck(name, residual, tol, residual <= tol, detail))

    cf = None
    if r_load is None:
        try:
            cf = solve_closed_form(system)
            r_load = cf.r_load
        except Exception:
            r_load = 1.0  # identities hold for any load; keep auditing
    rl = float(r_load)
    zhat = zmat.copy()
    zhat[-1, -1] += rl

    def _pim_sum(mat):
        pims = port_impedance_matrices(mat)
        target = np.real(mat)
        dev = np.abs(sum(pims) - target).max()
        return dev / max(np.abs(target).max(), 1e-300)

    run("pim-sum", 1e-10, lambda: _pim_sum(zmat))
    run("pim-sum-loaded", 1e-10, lambda: _pim_sum(zhat))

    def _pim_eigen():
        worst = 0.0
        pims = port_impedance_matrices(zhat)
        for port in range(n):
            t = pims[port]
            scale = max(np.abs(t).max(), 1e-300)
            eig = pim_eigensystem(zhat, port)
            pairs = [(eig.lam_plus, eig.v_plus)]
            if not eig.rank_one:
                pairs.append((-eig.lam_minus, eig.v_minus))
            for lam, vec in pairs:
                nv = np.linalg.norm(vec)
                res = np.linalg.norm(t @ vec - lam * vec) / (scale * max(nv, 1e-300))
                worst = max(worst, res)
        return worst

    run("pim-eigen", 1e-10, _pim_eigen)

    def _pim_quadratic_forms():
        # nonzero eigenvectors carry exactly +-lam |v|^2; any vector in the
        # orthogonal complement carries exactly zero
        worst = 0.0
        pims = port_impedance_matrices(zhat)
        for port in range(n):
            t = pims[port]
            scale = max(np.abs(t).max(), 1e-300)
            eig = pim_eigensystem(zhat, port)
            for lam, vec in ((eig.lam_plus, eig.v_plus), (-eig.lam_minus, eig.v_minus)):
                ns = float(np.real(np.vdot(vec, vec)))
                if ns == 0.0:
                    continue
                form = float(np.real(np.vdot(vec, t @ vec)))
                worst = max(worst, abs(form - lam * ns) / (scale * ns))
            # Gram-Schmidt the identity columns against the eigenvector pair
            basis = [w / np.linalg.norm(w)
                     for w in (eig.v_plus, eig.v_minus) if np.linalg.norm(w) > 0]
            for k in range(n):
                w = np.zeros(n, dtype=complex)
                w[k] = 1.0
                for q in basis:
                    w = w - np.vdot(q, w) * q
                nw = np.linalg.norm(w)
                if nw < 1e-6:
                    continue
                w /= nw
                worst = max(worst, abs(np.real(np.vdot(w, t @ w))) / scale)
        return worst

    run("pim-quadratic-forms", 1e-10, _pim_quadratic_forms)

    def _pim_splits():
        worst = 0.0
        pims = port_impedance_matrices(zhat)
        for port in range(n):
            t = pims[port]
            scale = max(np.abs(t).max(), 1e-300)
            plus, minus = pim_split(t, port)
            worst = max(worst, np.abs(t - (plus - minus)).max() / scale)
            for part in (plus, minus):
                lam_min = float(np.linalg.eigvalsh(0.5 * (part + part.conj().T)).min())
                worst = max(worst, max(0.0, -lam_min) / scale)
        return worst

    run("pim-splits", 1e-12, _pim_splits)

    def _closed_form():
        return cf if cf is not None else solve_closed_form(system, rl)

    def _kvl_feasible():
        sol = _closed_form()
        a, b = build_affine(zmat, rl)
        c = np.concatenate([sol.i_t.real, [sol.i_r], sol.i_t.imag])
        return np.abs(a @ c - b).max() / (1.0 + np.abs(b).max())

    run("kvl-row-feasibility", 1e-10, _kvl_feasible)

    def _power_balance():
        sol = _closed_form()
        i = np.concatenate([sol.i_t, [sol.i_r]])
        pims = port_impedance_matrices(zhat)
        per_port = sum(port_power(i, t) for t in pims)
        total = 0.5 * float(np.real(np.vdot(i, np.real(zhat) @ i)))
        res = abs(per_port - total) / (1.0 + abs(total))
        p_load = 0.5 * rl * sol.i_r ** 2
        return max(res, abs(p_load - 1.0))

    run("power-balance", 1e-10, _power_balance)

    def _loss_to_pte():
        sol = _closed_form()
        return abs(sol.eta * (1.0 + sol.p_loss) - 1.0)

    run("loss-to-pte", 1e-10, _loss_to_pte)

    def _realified_powers():
        sol = _closed_form()
        i = np.concatenate([sol.i_t, [sol.i_r]])
        c = np.concatenate([sol.i_t.real, [sol.i_r], sol.i_t.imag])
        problem = build_problem(zmat, rl)
        pims = port_impedance_matrices(zhat)
        worst = abs(float(c @ problem.q0 @ c) - sol.p_loss) / (1.0 + abs(sol.p_loss))
        for j, qn in enumerate(problem.q):
            direct = port_power(i, pims[j])
            worst = max(worst, abs(float(c @ qn @ c) - direct) / (1.0 + abs(direct)))
        return worst

    run("realified-port-powers", 1e-10, _realified_powers)

    if n == 2 and abs(zmat[0, 1].real) <= 1e-12 * abs(zmat[0, 1]):
        # quasi-static single-transmitter link: the coupling quality factor
        # collapses to the textbook omega*M / sqrt(Rt*Rr)
        def _siso_u():
            sol = _closed_form()
            u_direct = abs(zmat[0, 1]) / np.sqrt(zmat[0, 0].real * zmat[1, 1].real)
            return abs(sol.u - u_direct) / u_direct

        run("siso-mutual-q", 1e-10, _siso_u)

    return IdentityReport(checks=tuple(checks))
