"""LP and SDP front ends with residual-based acceptance.

Linear programs go to HiGHS through :func:`scipy.optimize.linprog`.
Semidefinite programs are held in linear-matrix-inequality form

    maximize  c . y
    s.t.      F0_b + sum_j y_j F_j_b  >= 0   (PSD, one per block b)
              A_eq y = b_eq,  A_ub y <= b_ub,  lo <= y <= hi

and are handed to clarabel or cvxopt (interior point) or to SCS (splitting,
large problems). Whatever the backend says, a result is labelled
``"optimal"`` only after the residuals have been recomputed here.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import null_space
from scipy.optimize import linprog

DEFAULT_TOL = 1e-7
LP_MAX_ITER = 100_000
SDP_MAX_ITER = 50_000
_SQRT2 = math.sqrt(2.0)


def lower_triangle(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the lower triangle, column by column."""
    r, c = np.triu_indices(d)
    return c, r


def _rows(A, n):
    if A is None:
        return sp.csr_matrix((0, n))
    return sp.csr_matrix(A, dtype=float)


def _vec(b):
    return np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()


@dataclass
class LinearProgram:
    """Dense or sparse LP; ``bounds`` follows the linprog conventions."""

    c: np.ndarray
    A_ub: object = None
    b_ub: object = None
    A_eq: object = None
    b_eq: object = None
    bounds: object = (0, None)
    sense: str = "max"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        if self.sense not in ("max", "min"):
            raise ValueError(f"sense must be 'max' or 'min', got {self.sense!r}")
        n = self.c.size
        for A, b, name in ((self.A_ub, self.b_ub, "ub"), (self.A_eq, self.b_eq, "eq")):
            if (A is None) != (b is None):
                raise ValueError(f"A_{name} and b_{name} must be given together")
            if A is not None and _rows(A, n).shape != (_vec(b).size, n):
                raise ValueError(f"A_{name} has shape {np.shape(A)}, expected ({_vec(b).size}, {n})")

    def bound_arrays(self):
        n = self.c.size
        bnds = self.bounds
        if bnds is None:
            bnds = (0, None)
        if isinstance(bnds, tuple) and len(bnds) == 2 and not isinstance(bnds[0], (tuple, list)):
            bnds = [bnds] * n
        lo = np.array([-np.inf if b[0] is None else b[0] for b in bnds], dtype=float)
        hi = np.array([np.inf if b[1] is None else b[1] for b in bnds], dtype=float)
        return lo, hi


@dataclass
class LPResult:
    status: str
    value: float | None
    x: np.ndarray | None
    residuals: dict = field(default_factory=dict)
    message: str = ""


def _lp_residuals(p: LinearProgram, x, res):
    n = p.c.size
    lo, hi = p.bound_arrays()
    out = {"primal": 0.0}
    A_ub, A_eq = _rows(p.A_ub, n), _rows(p.A_eq, n)
    if A_ub.shape[0]:
        out["primal"] = max(out["primal"], float(np.max(A_ub @ x - _vec(p.b_ub), initial=0.0)))
    if A_eq.shape[0]:
        out["primal"] = max(out["primal"], float(np.max(np.abs(A_eq @ x - _vec(p.b_eq)))))
    out["primal"] = max(out["primal"], float(np.max(lo - x, initial=0.0)), float(np.max(x - hi, initial=0.0)))
    # dual objective of the minimisation handed to HiGHS
    dual = 0.0
    if A_ub.shape[0]:
        dual += float(_vec(p.b_ub) @ res.ineqlin.marginals)
    if A_eq.shape[0]:
        dual += float(_vec(p.b_eq) @ res.eqlin.marginals)
    finite_lo, finite_hi = np.isfinite(lo), np.isfinite(hi)
    dual += float(lo[finite_lo] @ res.lower.marginals[finite_lo])
    dual += float(hi[finite_hi] @ res.upper.marginals[finite_hi])
    out["gap"] = abs(float(res.fun) - dual)
    return out


def solve_lp(p: LinearProgram, tol: float = DEFAULT_TOL, max_iter: int = LP_MAX_ITER) -> LPResult:
    """Solve ``p`` and certify the answer by primal residual and duality gap.

    Returns
    -------
    LPResult
        ``status`` is one of ``optimal``, ``infeasible``, ``unbounded`` or
        ``stalled``. The value is in the caller's sense.
    """
    sign = -1.0 if p.sense == "max" else 1.0
    n = p.c.size
    res = linprog(
        sign * p.c,
        A_ub=_rows(p.A_ub, n) if p.A_ub is not None else None,
        b_ub=_vec(p.b_ub) if p.b_ub is not None else None,
        A_eq=_rows(p.A_eq, n) if p.A_eq is not None else None,
        b_eq=_vec(p.b_eq) if p.b_eq is not None else None,
        bounds=p.bounds,
        method="highs",
        options={"maxiter": int(max_iter)},
    )
    if res.status == 2:
        return LPResult("infeasible", None, None, message=res.message)
    if res.status == 3:
        return LPResult("unbounded", None, None, message=res.message)
    if res.x is None:
        return LPResult("stalled", None, None, message=res.message)
    x = np.asarray(res.x)
    residuals = _lp_residuals(p, x, res)
    value = sign * float(res.fun)
    ok = res.status == 0 and residuals["primal"] <= tol and residuals["gap"] <= tol * (1 + abs(value))
    return LPResult("optimal" if ok else "stalled", value, x, residuals, res.message)


class SemidefiniteProgram:
    """LMI-form SDP over scalar variables ``y``.

    Blocks are symmetric; entries are given once for ``i >= j`` (an entry
    with ``i < j`` is mirrored). ``var=None`` addresses the constant term.

    Examples
    --------
    >>> p = SemidefiniteProgram(1, [1.0])
    >>> b = p.add_block(1)
    >>> p.add_entry(b, 0, 0, 0, 1.0)
    >>> p.add_equality({0: 1.0}, 1.0)
    """

    def __init__(self, n_vars: int, objective=None, lower=None, upper=None):
        self.n_vars = int(n_vars)
        self.c = np.zeros(self.n_vars) if objective is None else np.asarray(objective, dtype=float).copy()
        self.lower = np.full(self.n_vars, -np.inf) if lower is None else np.asarray(lower, dtype=float).copy()
        self.upper = np.full(self.n_vars, np.inf) if upper is None else np.asarray(upper, dtype=float).copy()
        self.block_sizes: list[int] = []
        self._entries: list[list] = []
        self.eq_rows: list[tuple[dict, float]] = []
        self.ub_rows: list[tuple[dict, float]] = []
        self._cache = None

    def add_block(self, size: int) -> int:
        self.block_sizes.append(int(size))
        self._entries.append([])
        self._cache = None
        return len(self.block_sizes) - 1

    def add_entry(self, block: int, i: int, j: int, var, value: float) -> None:
        if i < j:
            i, j = j, i
        d = self.block_sizes[block]
        if not (0 <= j <= i < d):
            raise IndexError(f"entry ({i}, {j}) outside block of size {d}")
        if var is not None and not (0 <= var < self.n_vars):
            raise IndexError(f"variable {var} out of range")
        self._entries[block].append((i, j, -1 if var is None else int(var), float(value)))
        self._cache = None

    def add_equality(self, coeffs: dict, rhs: float) -> None:
        self.eq_rows.append((dict(coeffs), float(rhs)))

    def add_inequality(self, coeffs: dict, rhs: float) -> None:
        """Add ``sum coeffs[j] * y_j <= rhs``."""
        self.ub_rows.append((dict(coeffs), float(rhs)))

    def block_matrices(self):
        """Per block a sparse ``(d(d+1)/2, n_vars + 1)`` matrix; column 0 is F0.

        Rows enumerate the lower triangle column by column.
        """
        if self._cache is None:
            mats = []
            for d, entries in zip(self.block_sizes, self._entries):
                if entries:
                    i, j, v, val = (np.array(a) for a in zip(*entries))
                    rows = j * d - j * (j - 1) // 2 + (i - j)
                    M = sp.coo_matrix((val.astype(float), (rows, v + 1)), shape=(d * (d + 1) // 2, self.n_vars + 1))
                    mats.append(M.tocsc())
                else:
                    mats.append(sp.csc_matrix((d * (d + 1) // 2, self.n_vars + 1)))
            self._cache = mats
        return self._cache

    def _linear(self, rows):
        A = sp.lil_matrix((len(rows), self.n_vars))
        for r, (coeffs, _) in enumerate(rows):
            for j, v in coeffs.items():
                A[r, j] += v
        return A.tocsr(), np.array([rhs for _, rhs in rows], dtype=float)

    def equalities(self):
        return self._linear(self.eq_rows)

    def inequalities(self, with_bounds: bool = True):
        A, b = self._linear(self.ub_rows)
        if not with_bounds:
            return A, b
        extra_rows = []
        for j in range(self.n_vars):
            if np.isfinite(self.upper[j]):
                extra_rows.append(({j: 1.0}, self.upper[j]))
            if np.isfinite(self.lower[j]):
                extra_rows.append(({j: -1.0}, -self.lower[j]))
        B, bb = self._linear(extra_rows)
        return sp.vstack([A, B]).tocsr(), np.concatenate([b, bb])

    def evaluate_blocks(self, y) -> list[np.ndarray]:
        y1 = np.concatenate([[1.0], np.asarray(y, dtype=float)])
        out = []
        for d, M in zip(self.block_sizes, self.block_matrices()):
            i, j = lower_triangle(d)
            G = np.zeros((d, d))
            G[i, j] = M @ y1
            out.append(G + np.tril(G, -1).T)
        return out

    @property
    def size(self) -> dict:
        return {"vars": self.n_vars, "blocks": list(self.block_sizes), "eq": len(self.eq_rows), "ub": len(self.ub_rows)}


def matrix_variable_program(sizes) -> tuple[SemidefiniteProgram, dict]:
    """SDP whose variables are the entries of PSD matrices ``M_b``.

    Returns the program and a map ``(block, i, j) -> variable`` with
    ``i <= j``; lookups with ``i > j`` should be swapped by the caller.
    """
    index = {}
    for b, d in enumerate(sizes):
        for i in range(d):
            for j in range(i, d):
                index[(b, i, j)] = len(index)
    p = SemidefiniteProgram(len(index))
    for b, d in enumerate(sizes):
        p.add_block(d)
    for (b, i, j), v in index.items():
        p.add_entry(b, j, i, v, 1.0)
    return p, index


@dataclass
class SDPResult:
    status: str
    value: float | None
    y: np.ndarray | None
    blocks: list = field(default_factory=list)
    residuals: dict = field(default_factory=dict)
    dual_bound: float | None = None
    primal_only: bool = False
    backend: str = ""

    @property
    def upper_bound(self) -> float | None:
        """Safest reported upper bound for a maximisation."""
        if self.value is None:
            return None
        if self.dual_bound is None:
            return self.value
        return max(self.value, self.dual_bound)


def _residuals(p: SemidefiniteProgram, y):
    blocks = p.evaluate_blocks(y)
    min_eig = min((float(np.linalg.eigvalsh(G)[0]) for G in blocks if G.size), default=0.0)
    A_eq, b_eq = p.equalities()
    A_ub, b_ub = p.inequalities()
    eq = float(np.max(np.abs(A_eq @ y - b_eq), initial=0.0))
    ub = float(np.max(A_ub @ y - b_ub, initial=0.0))
    return blocks, {"min_eig": min_eig, "eq": eq, "ineq": ub}


def _eliminate_equalities(p: SemidefiniteProgram):
    """Write ``y = y0 + N z`` with ``N`` spanning the null space of ``A_eq``."""
    A, b = p.equalities()
    if A.shape[0] == 0:
        return np.zeros(p.n_vars), sp.identity(p.n_vars, format="csc"), True
    A = A.toarray()
    y0, *_ = np.linalg.lstsq(A, b, rcond=None)
    consistent = float(np.max(np.abs(A @ y0 - b))) <= 1e-9 * (1 + float(np.max(np.abs(b))))
    N = null_space(A)
    N[np.abs(N) < 1e-14] = 0.0
    return y0, sp.csc_matrix(N), consistent


def _solve_cvxopt(p: SemidefiniteProgram, tol, max_iter):
    from cvxopt import matrix, solvers

    y0, N, consistent = _eliminate_equalities(p)
    if not consistent:
        return "infeasible", None, None
    k = N.shape[1]
    if k == 0:
        # equalities pin y down; the residual check decides feasibility
        _, res = _residuals(p, y0)
        feasible = res["min_eig"] >= -tol and res["ineq"] <= tol
        return ("optimal", y0, float(p.c @ y0)) if feasible else ("infeasible", None, None)
    y1 = np.concatenate([[1.0], y0])
    c = -(p.c @ N)
    A_ub, b_ub = p.inequalities()
    Gl = (A_ub @ N).toarray() if A_ub.shape[0] else None
    hl = b_ub - A_ub @ y0 if A_ub.shape[0] else None
    Gs, hs = [], []
    for d, M in zip(p.block_sizes, p.block_matrices()):
        const = M @ y1
        lin = (M[:, 1:] @ N).toarray()
        i, j = lower_triangle(d)
        pos = np.zeros((d, d), dtype=int)
        pos[i, j] = pos[j, i] = np.arange(i.size)
        order = pos.ravel(order="F")
        hs.append(matrix(const[order].reshape(d, d, order="F")))
        Gs.append(matrix(-lin[order, :]))
    kwargs = {"Gs": Gs, "hs": hs}
    if Gl is not None:
        kwargs.update(Gl=matrix(Gl), hl=matrix(hl))
    opts = {"show_progress": False, "maxiters": min(int(max_iter), 500), "abstol": tol * 1e-2, "reltol": tol * 1e-2, "feastol": tol * 1e-2}
    sol = solvers.sdp(matrix(c.reshape(-1, 1)), options=opts, **kwargs)
    status = sol["status"]
    if status == "primal infeasible":
        return "infeasible", None, None
    if status == "dual infeasible":
        return "unbounded", None, None
    if sol["x"] is None:
        return "stalled", None, None
    z = np.array(sol["x"]).ravel()
    y = y0 + N @ z
    # the backend minimised -c.N z, so its dual objective bounds c.y0 - value
    dual = sol.get("dual objective")
    dual_bound = None if dual is None else float(p.c @ y0) - float(dual)
    return status, y, dual_bound


def _svec_scale(d):
    # SCS svec uses the same lower-triangle order, off-diagonals scaled by sqrt 2
    i, j = lower_triangle(d)
    return np.where(i == j, 1.0, _SQRT2)


def _solve_scs(p: SemidefiniteProgram, tol, max_iter):
    import scs

    A_eq, b_eq = p.equalities()
    A_ub, b_ub = p.inequalities()
    parts_A, parts_b = [A_eq, A_ub], [b_eq, b_ub]
    for d, M in zip(p.block_sizes, p.block_matrices()):
        scale = sp.diags(_svec_scale(d))
        S = scale @ M
        parts_A.append(-S[:, 1:])
        parts_b.append(np.asarray(S[:, 0].todense()).ravel())
    A = sp.vstack(parts_A).tocsc()
    b = np.concatenate(parts_b)
    cone = {"z": A_eq.shape[0], "l": A_ub.shape[0], "s": list(p.block_sizes)}
    data = {"A": A, "b": b, "c": -p.c}
    solver = scs.SCS(data, cone, verbose=False, eps_abs=tol, eps_rel=tol, max_iters=int(max_iter), acceleration_lookback=10)
    sol = solver.solve()
    info = sol["info"]
    st = info["status"]
    if st.startswith("infeasible"):
        return "infeasible", None, None
    if st.startswith("unbounded"):
        return "unbounded", None, None
    y = np.asarray(sol["x"], dtype=float)
    return st, y, -float(info["dobj"])


def _solve_clarabel(p: SemidefiniteProgram, tol, max_iter):
    import clarabel

    A_eq, b_eq = p.equalities()
    A_ub, b_ub = p.inequalities()
    parts_A, parts_b, cones = [A_eq, A_ub], [b_eq, b_ub], []
    if A_eq.shape[0]:
        cones.append(clarabel.ZeroConeT(A_eq.shape[0]))
    if A_ub.shape[0]:
        cones.append(clarabel.NonnegativeConeT(A_ub.shape[0]))
    for d, M in zip(p.block_sizes, p.block_matrices()):
        # clarabel wants the upper triangle column by column: (i, j) -> i(i+1)/2 + j
        i, j = lower_triangle(d)
        perm = sp.csr_matrix((_svec_scale(d), (i * (i + 1) // 2 + j, np.arange(i.size))), shape=(i.size, i.size))
        S = perm @ M
        parts_A.append(-S[:, 1:])
        parts_b.append(np.asarray(S[:, 0].todense()).ravel())
        cones.append(clarabel.PSDTriangleConeT(d))
    A = sp.vstack(parts_A).tocsc()
    b = np.concatenate(parts_b)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = min(int(max_iter), 500)
    settings.tol_gap_abs = settings.tol_gap_rel = tol * 1e-2
    settings.tol_feas = tol * 1e-2
    settings.max_threads = 1
    sol = clarabel.DefaultSolver(sp.csc_matrix((p.n_vars, p.n_vars)), -p.c, A, b, cones, settings).solve()
    st = str(sol.status)
    if "PrimalInfeasible" in st:
        return "infeasible", None, None
    if "DualInfeasible" in st:
        return "unbounded", None, None
    if "Solved" not in st:
        return st, None, None
    return st, np.asarray(sol.x, dtype=float), -float(sol.obj_val_dual)


def solve_sdp(
    p: SemidefiniteProgram, tol: float = DEFAULT_TOL, max_iter: int = SDP_MAX_ITER, backend: str = "auto"
) -> SDPResult:
    """Maximize ``c . y`` subject to the program's LMIs and linear rows.

    Parameters
    ----------
    backend : {"auto", "clarabel", "cvxopt", "scs"}
        ``auto`` tries the dense interior-point solver (cvxopt) first on
        programs with few variables, clarabel on medium ones and SCS on large
        ones, moving to the next backend when one does not certify an
        optimum.

    Notes
    -----
    The returned status is ``optimal`` only when the smallest block
    eigenvalue is at least ``-tol``, linear residuals are at most ``tol``,
    and the objective is within ``tol * (1 + |value|)`` of the backend's dual
    bound. Otherwise the result is marked ``stalled`` and keeps the
    residuals so callers can decide what to report.
    """
    if backend == "auto":
        psd_entries = sum(d * (d + 1) // 2 for d in p.block_sizes)
        if p.n_vars <= 400:
            order = ["cvxopt", "clarabel", "scs"]
        elif psd_entries <= 5_000:
            order = ["clarabel", "scs", "cvxopt"]
        else:
            order = ["scs", "clarabel"]
        res = None
        for name in order:
            res = solve_sdp(p, tol, max_iter, name)
            if res.status in ("optimal", "infeasible", "unbounded"):
                break
        return res
    if backend == "clarabel":
        status, y, dual_bound = _solve_clarabel(p, tol, max_iter)
    elif backend == "cvxopt":
        status, y, dual_bound = _solve_cvxopt(p, tol, max_iter)
    elif backend == "scs":
        status, y, dual_bound = _solve_scs(p, tol, max_iter)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if y is None:
        return SDPResult(status, None, None, backend=backend)
    value = float(p.c @ y)
    blocks, residuals = _residuals(p, y)
    primal_only = dual_bound is None or not np.isfinite(dual_bound)
    if not primal_only:
        residuals["gap"] = abs(value - dual_bound)
    ok = (
        residuals["min_eig"] >= -tol
        and residuals["eq"] <= tol
        and residuals["ineq"] <= tol
        and (primal_only or residuals["gap"] <= tol * (1 + abs(value)))
    )
    return SDPResult(
        "optimal" if ok else "stalled",
        value,
        y,
        blocks,
        residuals,
        None if primal_only else dual_bound,
        primal_only,
        backend,
    )


def write_sdpa(p: SemidefiniteProgram, stream=None) -> str:
    """Serialize in SDPA sparse format.

    The LMI program is rewritten as ``minimize (-c) . y`` subject to
    ``sum_j y_j F_j - (-F0) >= 0``. Linear rows, equalities (as two
    inequalities) and finite bounds become one trailing diagonal block.
    Lines after the header read ``matno block row col value`` with 1-based
    indices and ``row <= col``; ``matno`` 0 is the constant matrix.
    """
    A_ub, b_ub = p.inequalities()
    A_eq, b_eq = p.equalities()
    lin_A = sp.vstack([A_ub, A_eq, -A_eq]).tocsr()
    lin_b = np.concatenate([b_ub, b_eq, -b_eq])
    n_lin = lin_A.shape[0]
    sizes = list(p.block_sizes) + ([-n_lin] if n_lin else [])
    out = io.StringIO()
    out.write(f'"qleak sdp: {p.n_vars} vars, blocks {p.block_sizes}, {n_lin} linear rows\n')
    out.write(f"{p.n_vars}\n{len(sizes)}\n")
    out.write(" ".join(str(s) for s in sizes) + "\n")
    out.write(" ".join(repr(float(-v)) for v in p.c) + "\n")
    for b, (d, M) in enumerate(zip(p.block_sizes, p.block_matrices()), start=1):
        ii, jj = lower_triangle(d)
        coo = M.tocoo()
        for r, col, v in zip(coo.row, coo.col, coo.data):
            if v != 0:
                val = -v if col == 0 else v
                out.write(f"{col} {b} {jj[r] + 1} {ii[r] + 1} {float(val)!r}\n")
    if n_lin:
        blk = len(p.block_sizes) + 1
        coo = lin_A.tocoo()
        # row r reads lin_b[r] - lin_A[r] . y >= 0
        for r, col, v in zip(coo.row, coo.col, coo.data):
            if v != 0:
                out.write(f"{col + 1} {blk} {r + 1} {r + 1} {float(-v)!r}\n")
        for r, v in enumerate(lin_b):
            if v != 0:
                out.write(f"0 {blk} {r + 1} {r + 1} {float(-v)!r}\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text



def read_sdpa(source) -> SemidefiniteProgram:
    """Parse SDPA sparse text produced by :func:`write_sdpa` (or any SDPA file)."""
    text = source.read() if hasattr(source, "read") else str(source)
    lines = [ln for ln in text.splitlines() if ln.strip() and ln.lstrip()[0] not in '"*']
    tokens = lambda s: s.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " ").split()
    try:
        m = int(tokens(lines[0])[0])
        nblocks = int(tokens(lines[1])[0])
        sizes = [int(t) for t in tokens(lines[2])][:nblocks]
        c = np.array([float(t) for t in tokens(lines[3])][:m])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed SDPA header: {exc}") from exc
    p = SemidefiniteProgram(m, -c)
    blocks = {}
    diag_rows = {}
    for b, s in enumerate(sizes, start=1):
        if s > 0:
            blocks[b] = p.add_block(s)
        else:
            diag_rows[b] = {}
    for lineno, ln in enumerate(lines[4:], start=5):
        t = tokens(ln)
        try:
            mat, blk, i, j, val = int(t[0]), int(t[1]), int(t[2]), int(t[3]), float(t[4])
        except (IndexError, ValueError) as exc:
            raise ValueError(f"malformed SDPA entry on data line {lineno}: {ln!r}") from exc
        if blk in blocks:
            p.add_entry(blocks[blk], i - 1, j - 1, None if mat == 0 else mat - 1, -val if mat == 0 else val)
        elif blk in diag_rows:
            row = diag_rows[blk].setdefault(i, [{}, 0.0])
            if mat == 0:
                row[1] += -val
            else:
                row[0][mat - 1] = row[0].get(mat - 1, 0.0) + val
        else:
            raise ValueError(f"unknown block {blk} on data line {lineno}")
    for rows in diag_rows.values():
        for coeffs, const in rows.values():
            # const + coeffs . y >= 0
            p.add_inequality({j: -v for j, v in coeffs.items()}, const)
    return p
