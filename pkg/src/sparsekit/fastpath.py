"""Solver-based estimators for barrier quantities on graph-backed states.

Everything here avoids forming the whitened matrix A = pinv_sqrt(L) Lt
pinv_sqrt(L) (Lt being the Laplacian of the accumulated reweighted
subgraph). Quadratic forms, per-edge resistances and extreme eigenvalues
are reached through three ingredients only:

  * truncated Taylor expansions of (1 - x)^(-1/2) with positive,
    decreasing coefficients,
  * incidence factors L = B^T B turning energy norms into plain norms,
  * a linear solver meeting a relative-residual contract.

Per-edge quantities are sketched with a random projection so one solve
pipeline serves all edges at once.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BarrierViolationError, ConfigError, SolverConvergenceError
from .graphs import WeightedGraph, incidence, laplacian, laplacian_sparse

log = logging.getLogger("sparsekit")

ETA_FLOOR = 1e-4
DEFAULT_TAYLOR_C = 4.0


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class EstimatorConfig:
    """Knobs for the solver-based estimators.

    ``eps`` is the target accuracy of the estimates themselves (not the
    sparsification accuracy). ``eta`` is the assumed barrier separation
    ((ell + |ell| eta) I < A < (1 - eta) u I); None lets run loops size the
    Taylor degree from measured margins instead. jl_dim and trace_k default
    to ceil(24 ln n / eps^2) and ceil(ln n / eps) once the dimension is
    known. ``solver`` picks the SolverHandle backend.
    """

    eps: float = 0.1
    eta: float | None = None
    taylor_c: float = DEFAULT_TAYLOR_C
    taylor_degree: int | None = None
    jl_dim: int | None = None
    solver_tol: float = 1e-8
    trace_k: int | None = None
    trace_probes: int = 8
    solver: str = "pcg"
    lambda_refresh: int = 40
    lambda_safety: float = 0.8

    def __post_init__(self):
        if not (0.0 < self.eps <= 0.5):
            raise ConfigError(f"estimator eps must be in (0, 0.5], got {self.eps}")
        if self.eta is not None and not (0.0 < self.eta < 1.0):
            raise ConfigError(f"eta must be in (0, 1), got {self.eta}")
        if not (0.0 < self.solver_tol <= 1e-2):
            raise ConfigError("solver_tol must be in (0, 1e-2]")
        if self.taylor_degree is not None and self.taylor_degree < 1:
            raise ConfigError("taylor_degree must be >= 1")
        if self.jl_dim is not None and self.jl_dim < 1:
            raise ConfigError("jl_dim must be >= 1")
        if self.trace_k is not None and self.trace_k < 1:
            raise ConfigError("trace_k must be >= 1")
        if self.trace_probes < 1:
            raise ConfigError("trace_probes must be >= 1")
        if self.solver not in ("pcg", "direct", "pinv"):
            raise ConfigError(f"unknown solver backend {self.solver!r}")

    def resolved(self, n: int) -> "EstimatorConfig":
        """Fill dimension-dependent defaults for problem size n."""
        jl = self.jl_dim or max(1, math.ceil(24.0 * math.log(n) / self.eps ** 2))
        tk = self.trace_k or max(1, math.ceil(math.log(n) / self.eps))
        return replace(self, jl_dim=jl, trace_k=tk)


def eta_schedule(n: int, q: int, eps: float, c_eta: float = 0.1,
                 floor: float = ETA_FLOOR) -> float:
    """Barrier-separation schedule c_eta * (eps/n)^(2/q), floored at 1e-4.

    Small enough that a bounded potential keeps every iteration's state
    separated by at least this much, so one degree choice serves a whole run.
    """
    if n < 1 or q < 1 or eps <= 0:
        raise ConfigError("need n >= 1, q >= 1, eps > 0")
    return max(floor, c_eta * (eps / n) ** (2.0 / q))


def taylor_coeffs(degree: int) -> np.ndarray:
    """Coefficients of the degree-T truncation of (1 - x)^(-1/2).

    c_0 = 1 and c_{k+1}/c_k = (k + 1/2)/(k + 1), so the coefficients are
    positive and strictly decreasing.
    """
    if degree < 1:
        raise ConfigError("Taylor degree must be >= 1")
    c = np.empty(degree + 1)
    c[0] = 1.0
    for k in range(degree):
        c[k + 1] = c[k] * (k + 0.5) / (k + 1.0)
    return c


def scheduled_degree(eta: float, eps: float, c: float = DEFAULT_TAYLOR_C) -> int:
    """Default degree rule T = c * log(1/(eps eta)) / eta."""
    if not (0.0 < eta < 1.0):
        raise ConfigError(f"eta must be in (0, 1), got {eta}")
    return max(1, math.ceil(c * math.log(1.0 / (eps * eta)) / eta))


def tail_degree(eta: float, tol: float) -> int:
    """Smallest T with (1 - eta)^(T+1) / eta <= tol (truncation tail bound)."""
    if not (0.0 < eta < 1.0):
        raise ConfigError(f"eta must be in (0, 1), got {eta}")
    t = math.log(1.0 / (tol * eta)) / (-math.log1p(-eta)) - 1.0
    return max(1, math.ceil(t))


# ---------------------------------------------------------------------------
# Linear solvers with a residual contract


class SolverHandle:
    """Solves M x = b with outputs orthogonal to the declared kernel.

    The enforced contract is a relative two-norm residual:
    ||M x - b|| <= tol * ||b||. Right-hand sides are projected onto the
    complement of the kernel first (the all-ones direction for
    Laplacian-like matrices). ``last_residual`` records the worst column
    of the most recent solve.
    """

    def __init__(self, tol: float, kernel_ones: bool, check: bool = False):
        self.tol = tol
        self.kernel_ones = kernel_ones
        self.check = check
        self.last_residual = 0.0

    def _project(self, x: np.ndarray) -> np.ndarray:
        if self.kernel_ones:
            x = x - x.mean(axis=0, keepdims=True) if x.ndim > 1 else x - x.mean()
        return x

    def _matvec(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def _raw_solve(self, b):  # pragma: no cover - abstract
        raise NotImplementedError

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        squeeze = b.ndim == 1
        if squeeze:
            b = b[:, None]
        b = self._project(b)
        x = self._raw_solve(b)
        x = self._project(x)
        if self.check:
            res = self._matvec(x) - b
            num = np.linalg.norm(res, axis=0)
            den = np.linalg.norm(b, axis=0)
            den[den == 0.0] = 1.0
            self.last_residual = float((num / den).max())
            if self.last_residual > max(self.tol, 1e-10) * 1.5:
                raise SolverConvergenceError(self.last_residual, self.tol, -1)
        return x[:, 0] if squeeze else x


class _DirectSolver(SolverHandle):
    """Grounded Cholesky factorization; residuals at machine precision."""

    def __init__(self, mat: np.ndarray, tol: float, kernel_ones: bool, check=False):
        super().__init__(tol, kernel_ones, check)
        self._mat = np.asarray(mat, dtype=float)
        if kernel_ones:
            self._factor = scipy.linalg.cho_factor(self._mat[1:, 1:])
        else:
            self._factor = scipy.linalg.cho_factor(self._mat)

    def _matvec(self, x):
        return self._mat @ x

    def _raw_solve(self, b):
        if self.kernel_ones:
            out = np.zeros_like(b)
            out[1:] = scipy.linalg.cho_solve(self._factor, b[1:])
            return out
        return scipy.linalg.cho_solve(self._factor, b)


class _PinvSolver(SolverHandle):
    """Dense pseudo-inverse application; exact, used when one matrix is reused."""

    def __init__(self, mat: np.ndarray, tol: float, kernel_ones: bool, check=False):
        super().__init__(tol, kernel_ones, check)
        self._mat = np.asarray(mat, dtype=float)
        self._pinv = np.linalg.pinv(self._mat)

    def _matvec(self, x):
        return self._mat @ x

    def _raw_solve(self, b):
        return self._pinv @ b


class _PCGSolver(SolverHandle):
    """Conjugate gradients with diagonal preconditioning, kernel-projected."""

    def __init__(self, mat, tol: float, kernel_ones: bool, check=False,
                 maxiter: int | None = None):
        super().__init__(tol, kernel_ones, check)
        self._mat = sp.csr_matrix(mat) if not sp.issparse(mat) else mat.tocsr()
        diag = self._mat.diagonal().astype(float)
        if np.any(diag <= 0):
            raise ConfigError("PCG needs a positive diagonal")
        self._inv_diag = 1.0 / diag
        n = self._mat.shape[0]
        self.maxiter = maxiter or (40 * n + 200)

    def _matvec(self, x):
        return self._mat @ x

    def _raw_solve(self, b):
        x = np.zeros_like(b)
        r = b.copy()
        z = self._inv_diag[:, None] * r
        p = z.copy()
        rz = np.einsum("ij,ij->j", r, z)
        bnorm = np.linalg.norm(b, axis=0)
        bnorm[bnorm == 0.0] = 1.0
        live = np.ones(b.shape[1], dtype=bool)
        for it in range(self.maxiter):
            ap = self._mat @ p
            pap = np.einsum("ij,ij->j", p, ap)
            alpha = np.where(pap > 0, rz / np.where(pap > 0, pap, 1.0), 0.0)
            x += alpha * p
            r -= alpha * ap
            r = self._project(r)
            resid = np.linalg.norm(r, axis=0) / bnorm
            live = resid > self.tol
            if not live.any():
                return x
            z = self._inv_diag[:, None] * r
            rz_new = np.einsum("ij,ij->j", r, z)
            beta = np.where(rz > 0, rz_new / np.where(rz > 0, rz, 1.0), 0.0)
            p = z + beta * p
            rz = rz_new
        worst = float((np.linalg.norm(r, axis=0) / bnorm).max())
        raise SolverConvergenceError(worst, self.tol, self.maxiter)


def make_solver(mat, tol: float, method: str = "pcg", kernel_ones: bool = True,
                check: bool = False) -> SolverHandle:
    """Build a SolverHandle for a Laplacian-like matrix.

    Methods: ``pcg`` (diagonally preconditioned CG), ``direct`` (grounded
    Cholesky), ``pinv`` (dense pseudo-inverse, for a matrix reused many
    times). All honor the same residual contract.
    """
    if method == "pcg":
        return _PCGSolver(mat, tol, kernel_ones, check)
    dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=float)
    if method == "direct":
        return _DirectSolver(dense, tol, kernel_ones, check)
    if method == "pinv":
        return _PinvSolver(dense, tol, kernel_ones, check)
    raise ConfigError(f"unknown solver method {method!r}")


# ---------------------------------------------------------------------------
# Graph-backed barrier state


class GraphBarrierState:
    """Barriers plus the accumulated edge scalars of a graph run.

    Holds the original graph, per-edge scalars s (so the accumulated
    whitened matrix is sum of s_i v_i v_i^T), and the barrier values.
    Sparse Laplacian and incidence factors are cached; the reweighted
    Laplacian uses edge weights s_i * w_i.
    """

    def __init__(self, graph: WeightedGraph, scalars, u: float, ell: float):
        self.graph = graph
        self.scalars = np.asarray(scalars, dtype=float)
        if self.scalars.shape != (graph.n_edges,):
            raise ConfigError("scalars must have one entry per edge")
        if np.any(self.scalars < 0):
            raise ConfigError("scalars must be nonnegative")
        self.u = float(u)
        self.ell = float(ell)
        self.lap = laplacian_sparse(graph)
        self.inc = incidence(graph)
        self._root = None
        self._pinv_root = None

    @property
    def n(self) -> int:
        return self.graph.n_vertices

    @property
    def subspace_dim(self) -> int:
        return self.graph.n_vertices - 1

    def accum_scaled_incidence(self) -> sp.csr_matrix:
        """Rows sqrt(s_i) * u_i; its Gram is the accumulated Laplacian."""
        return self.inc.multiply(np.sqrt(self.scalars)[:, None]).tocsr()

    def accum_laplacian(self) -> sp.csr_matrix:
        b = self.accum_scaled_incidence()
        return (b.T @ b).tocsr()

    def shifted_laplacian(self) -> sp.csr_matrix:
        """Accumulated Laplacian minus ell times the base one (ell <= 0)."""
        return (self.accum_laplacian() - self.ell * self.lap).tocsr()

    def shifted_scaled_incidence(self) -> sp.csr_matrix:
        """Incidence rows sqrt(s_i - ell) * u_i, factoring shifted_laplacian.

        Only meaningful for ell <= 0, where all shifted weights stay positive.
        """
        return self.inc.multiply(np.sqrt(self.scalars - self.ell)[:, None]).tocsr()

    def _ensure_roots(self):
        if self._root is None:
            evals, evecs = np.linalg.eigh(laplacian(self.graph))
            keep = evals > 1e-12 * evals[-1]
            root = np.zeros_like(evals)
            root[keep] = np.sqrt(evals[keep])
            inv_root = np.zeros_like(evals)
            inv_root[keep] = 1.0 / np.sqrt(evals[keep])
            self._root = (evecs * root) @ evecs.T
            self._pinv_root = (evecs * inv_root) @ evecs.T

    def half_root(self) -> np.ndarray:
        """Dense square root of the base Laplacian (boundary use only)."""
        self._ensure_roots()
        return self._root

    def pinv_half_root(self) -> np.ndarray:
        self._ensure_roots()
        return self._pinv_root

    def whitened(self) -> np.ndarray:
        """Dense accumulated whitened matrix (diagnostics and oracles only)."""
        r = self.pinv_half_root()
        return r @ self.accum_laplacian().toarray() @ r

    def measured_separation(self) -> float:
        """Largest eta for which the separation assumption currently holds."""
        evals = np.linalg.eigvalsh(self.whitened())
        # drop the kernel direction of the base Laplacian
        evals = np.sort(evals)[1:] if self.n > 1 else evals
        lam_lo, lam_hi = float(evals[0]), float(evals[-1])
        eta_u = (self.u - lam_hi) / self.u
        if self.ell == 0.0:
            eta_l = 1.0
        else:
            eta_l = (lam_lo - self.ell) / abs(self.ell)
        eta = min(eta_u, eta_l)
        if eta <= 0:
            raise BarrierViolationError(lam_hi if eta_u <= 0 else lam_lo,
                                        self.ell, self.u)
        return min(eta, 0.999)


def _matrix_poly(x0: np.ndarray, coeffs: np.ndarray, apply_m) -> np.ndarray:
    """Horner evaluation of sum_k coeffs[k] M^k applied to a block."""
    h = coeffs[-1] * x0
    for k in range(len(coeffs) - 2, -1, -1):
        h = apply_m(h)
        if coeffs[k] != 0.0:
            h += coeffs[k] * x0
    return h


def _degrees(fs: GraphBarrierState, cfg: EstimatorConfig) -> tuple[int, int]:
    """Taylor degrees for the upper and lower pipelines under cfg.eta."""
    if cfg.taylor_degree is not None:
        return cfg.taylor_degree, cfg.taylor_degree
    if cfg.eta is None:
        raise ConfigError("cfg.eta (or taylor_degree) is required here")
    t_u = scheduled_degree(cfg.eta, cfg.eps, cfg.taylor_c)
    t_l = scheduled_degree(cfg.eta / 2.0, cfg.eps, cfg.taylor_c)
    return t_u, t_l


def _upper_coeffs(u: float, degree: int) -> np.ndarray:
    # polynomial P with P(A) ~ (uI - A)^(-1/2): coefficients c_k u^(-1/2-k)
    c = taylor_coeffs(degree)
    return c * u ** (-(0.5 + np.arange(degree + 1)))


def _lower_coeffs(ell: float, degree: int) -> np.ndarray:
    # polynomial q with q(A^{-1}) ~ (I - ell A^{-1})^(-1/2): c_k ell^k
    c = taylor_coeffs(degree)
    return c * ell ** np.arange(degree + 1)


def _solver_factory(cfg: EstimatorConfig):
    def build(mat, check=False):
        return make_solver(mat, cfg.solver_tol, cfg.solver, kernel_ones=True,
                           check=check)
    return build


# ---------------------------------------------------------------------------
# Quadratic-form operators


def apply_inv_sqrt_upper(fs: GraphBarrierState, x: np.ndarray,
                         cfg: EstimatorConfig, solver: SolverHandle | None = None
                         ) -> np.ndarray:
    """Apply the Taylor approximation of (uI - A)^(-1/2) to x.

    The degree-T polynomial in A is evaluated with solves against the base
    Laplacian and multiplications by the accumulated one; the whitening at
    the block boundary uses the cached dense root of the base Laplacian.
    """
    t_u, _ = _degrees(fs, cfg)
    coeffs = _upper_coeffs(fs.u, t_u)
    solver = solver or _solver_factory(cfg)(fs.lap)
    lt = fs.accum_laplacian()
    x = np.asarray(x, dtype=float)
    root_inv = fs.pinv_half_root()
    # sum_k c_k A^k x = c_0 x + pinv_root(L) [sum_{k>=1} c_k (Lt L^+)^{k-1}] Lt pinv_root(L) x
    y0 = lt @ (root_inv @ x)
    inner = _matrix_poly(y0, coeffs[1:], lambda h: lt @ solver.solve(h))
    return coeffs[0] * x + root_inv @ inner


def upper_quad_form(fs: GraphBarrierState, x: np.ndarray, cfg: EstimatorConfig,
                    solver: SolverHandle | None = None):
    """Estimate x^T (uI - A)^{-1} x as the squared norm through the root."""
    y = apply_inv_sqrt_upper(fs, x, cfg, solver)
    return np.sum(np.asarray(y) ** 2, axis=0)


def lower_quad_form(fs: GraphBarrierState, x: np.ndarray, cfg: EstimatorConfig,
                    solver: SolverHandle | None = None):
    """Estimate x^T (A - ell I)^{-1} x, splitting on the sign of ell.

    For ell <= 0 the shifted accumulated Laplacian is itself a Laplacian
    and one solve gives the form exactly up to solver error. For ell > 0
    the form goes through the Taylor polynomial in ell A^{-1}.
    """
    x = np.asarray(x, dtype=float)
    build = _solver_factory(cfg)
    root = fs.half_root()
    z = root @ x
    if fs.ell <= 0.0:
        handle = solver or build(fs.shifted_laplacian())
        sol = handle.solve(z)
        return np.einsum("i...,i...->...", z, sol)
    _, t_l = _degrees(fs, cfg)
    coeffs = _lower_coeffs(fs.ell, t_l)
    lt_solver = solver or build(fs.accum_laplacian())
    lap = fs.lap
    y0 = lt_solver.solve(z)
    # y = q(A^{-1}) x in node coordinates: root @ poly((Lt^+ L)) @ Lt^+ @ root x
    inner = _matrix_poly(y0, coeffs[1:], lambda h: lt_solver.solve(lap @ h))
    y = coeffs[0] * x + root @ inner
    zy = root @ y
    return np.einsum("i...,i...->...", zy, lt_solver.solve(zy))


# ---------------------------------------------------------------------------
# Sketched per-edge resistance estimation


def _row_diff_norms(mt: np.ndarray, g: WeightedGraph) -> np.ndarray:
    """w_i * ||mt[a_i] - mt[b_i]||^2 for every edge (mt is n x d)."""
    diff = mt[g.heads] - mt[g.tails]
    return g.weights * np.einsum("ij,ij->i", diff, diff)


def estimate_resistances(fs: GraphBarrierState, cfg: EstimatorConfig,
                         solver: SolverHandle | None = None,
                         rng: np.random.Generator | int = 0
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Sketched estimates (r_i, t_i) of both resistance components per edge.

    r_i estimates u_i^T pinv(u L - Lt) u_i through the upper-root Taylor
    pipeline; t_i estimates u_i^T pinv(Lt - ell L) u_i, exactly (up to
    solver and sketch error) for ell <= 0 and through the lower Taylor
    polynomial otherwise. The sketch has cfg.jl_dim rows; when that exceeds
    twice the vertex count the pipeline is applied to a basis instead and
    sketched afterwards, which is algebraically the same estimator.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    cfg = cfg.resolved(fs.n)
    g = fs.graph
    m, n = g.n_edges, fs.n
    d = cfg.jl_dim
    build = _solver_factory(cfg)
    l_solver = solver or build(fs.lap)
    t_u, t_l = _degrees(fs, cfg)
    basis_first = d >= 2 * n

    # upper side: M^T = L^+ P(Lt L^+) B^T Q^T, estimates via row diffs
    coeffs_u = _upper_coeffs(fs.u, t_u)
    lt = fs.accum_laplacian()
    q_sketch = rng.standard_normal((d, m)) / math.sqrt(d)
    b_t = fs.inc.T.tocsr()
    if basis_first:
        base = l_solver.solve(np.eye(n))
        gmat = _matrix_poly(base, coeffs_u, lambda h: l_solver.solve(lt @ h))
        mt_u = gmat @ (b_t @ q_sketch.T)
    else:
        x0 = b_t @ q_sketch.T
        y = _matrix_poly(x0, coeffs_u, lambda h: lt @ l_solver.solve(h))
        mt_u = l_solver.solve(y)
    r_hat = _row_diff_norms(mt_u, g)

    # lower side
    q2 = rng.standard_normal((d, m)) / math.sqrt(d)
    if fs.ell <= 0.0:
        lp = fs.shifted_laplacian()
        lp_solver = build(lp)
        bp_t = fs.shifted_scaled_incidence().T.tocsr()
        mt_l = lp_solver.solve(bp_t @ q2.T)
        t_hat = _row_diff_norms(mt_l, g)
    else:
        coeffs_l = _lower_coeffs(fs.ell, t_l)
        lt_solver = build(lt)
        bt_t = fs.accum_scaled_incidence().T.tocsr()
        lap = fs.lap
        if basis_first:
            base = lt_solver.solve(np.eye(n))
            gmat = _matrix_poly(base, coeffs_l, lambda h: lt_solver.solve(lap @ h))
            mt_l = gmat @ (bt_t @ q2.T)
        else:
            y0 = lt_solver.solve(bt_t @ q2.T)
            mt_l = _matrix_poly(y0, coeffs_l, lambda h: lt_solver.solve(lap @ h))
        t_hat = _row_diff_norms(mt_l, g)
    return r_hat, t_hat


# ---------------------------------------------------------------------------
# Extreme-eigenvalue estimation via trace powers


def _trace_power_estimate(z: np.ndarray, k: int, apply_once) -> float:
    """Mean of ||F^k z_j||^2 over probe columns; estimates tr(F^(2k))."""
    h = z
    for _ in range(k):
        h = apply_once(h)
    return float(np.mean(np.einsum("ij,ij->j", h, h)))


def estimate_lambda_mins(fs: GraphBarrierState, cfg: EstimatorConfig,
                         solver: SolverHandle | None = None,
                         rng: np.random.Generator | int = 0
                         ) -> tuple[float, float]:
    """Estimates (alpha, beta) of lambda_min(uI - A) and lambda_min(A - ell I).

    Each comes from a trace power: the 2k-th trace of the corresponding
    approximate inverse root is estimated with random probes, and its
    (1/2k)-th root sandwiches the extreme eigenvalue within dim^(1/2k).
    The returned values take the geometric midpoint of that sandwich.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    cfg = cfg.resolved(fs.n)
    n = fs.n
    k = cfg.trace_k
    probes = cfg.trace_probes
    build = _solver_factory(cfg)
    l_solver = solver or build(fs.lap)
    t_u, t_l = _degrees(fs, cfg)

    nonzero = fs.scalars > 0
    m_active = int(np.count_nonzero(nonzero))
    if m_active == 0:
        # empty accumulation: both margins are exact
        return fs.u, -fs.ell

    # alpha: F = P(Bt L^+ Bt^T) with P the upper root polynomial; only the
    # rows of Bt with nonzero scalars matter, so probe that space
    coeffs_u = _upper_coeffs(fs.u, t_u)
    bt = fs.accum_scaled_incidence()[np.flatnonzero(nonzero)]
    bt_t = bt.T.tocsr()

    def k_u_apply(block):
        return bt @ l_solver.solve(bt_t @ block)

    def p_apply(block):
        return _matrix_poly(block, coeffs_u, k_u_apply)

    z = rng.standard_normal((m_active, probes))
    tr_u = _trace_power_estimate(z, k, p_apply)
    lam_root = tr_u ** (1.0 / (2 * k)) * m_active ** (-1.0 / (4 * k))
    alpha = lam_root ** (-2.0)

    # beta
    z2 = rng.standard_normal((fs.graph.n_edges, probes))
    b_full = fs.inc
    b_full_t = b_full.T.tocsr()
    if fs.ell <= 0.0:
        lp_solver = build(fs.shifted_laplacian())

        def k_l_apply(block):
            return b_full @ lp_solver.solve(b_full_t @ block)

        tr_l = _trace_power_estimate(z2, k, k_l_apply)
        beta = tr_l ** (-1.0 / (2 * k)) * (n - 1) ** (1.0 / (4 * k))
    else:
        coeffs_l = _lower_coeffs(fs.ell, t_l)
        lt_solver = build(fs.accum_laplacian())

        def k_apply(block):
            return b_full @ lt_solver.solve(b_full_t @ block)

        def z_apply(block):
            h = _matrix_poly(block, coeffs_l, k_apply)
            h = _matrix_poly(h, coeffs_l, k_apply)
            return k_apply(h)

        tr_l = _trace_power_estimate(z2, k, z_apply)
        # tr estimates the 4k-th power of the lower root operator
        lam_root_l = tr_l ** (1.0 / (4 * k)) * (n - 1) ** (-1.0 / (8 * k))
        beta = lam_root_l ** (-2.0)
    return float(alpha), float(beta)


# ---------------------------------------------------------------------------
# Per-iteration engine for fast-mode runs


class FastIterationEngine:
    """Maintains estimator state across the iterations of a fast-mode run.

    Resistances are re-sketched every round. Extreme-eigenvalue estimates
    are refreshed by trace powers every cfg.lambda_refresh rounds and
    deflated by cfg.lambda_safety in between, which only shrinks batches
    (an underestimate of the batch size is always safe). Taylor degrees
    are sized per round from the measured margins unless cfg pins eta or
    an explicit degree.

    All dense objects here live in node space with n small by assumption;
    the base Laplacian is solved through a precomputed pseudo-inverse,
    accumulated ones through grounded Cholesky factorizations.
    """

    def __init__(self, graph: WeightedGraph, q: int, eps: float,
                 cfg: EstimatorConfig | None, rng: np.random.Generator,
                 n_dim: int):
        self.graph = graph
        self.q = q
        self.eps = eps
        self.cfg = (cfg or EstimatorConfig()).resolved(graph.n_vertices)
        self.rng = rng
        self.n_dim = n_dim
        self.m = graph.n_edges
        self.b_dense = incidence(graph).toarray()
        self.lap_dense = self.b_dense.T @ self.b_dense
        self.lap_pinv = np.linalg.pinv(self.lap_dense)
        self.s = np.zeros(self.m)  # scalars per edge
        self.lt_dense = np.zeros_like(self.lap_dense)
        self.iteration = 0
        self._lam_cache: tuple[float, float] | None = None
        self._lam_stamp = -10 ** 9
        self.inflate = 1.0 + self.cfg.eps

    # -- internal solvers -------------------------------------------------

    def _solve_l(self, x):
        return self.lap_pinv @ x

    @staticmethod
    def _grounded_cho(mat):
        try:
            factor = scipy.linalg.cho_factor(mat[1:, 1:], lower=True)
        except np.linalg.LinAlgError:
            raise BarrierViolationError(float("nan"), -np.inf, np.inf) from None

        def solve(x):
            out = np.zeros_like(x)
            out[1:] = scipy.linalg.cho_solve(factor, x[1:])
            out -= out.mean(axis=0, keepdims=True)
            return out

        return solve

    # -- degree sizing -----------------------------------------------------

    def _degree_upper(self, u, gap_u):
        if self.cfg.taylor_degree is not None:
            return self.cfg.taylor_degree
        if self.cfg.eta is not None:
            return scheduled_degree(self.cfg.eta, self.cfg.eps, self.cfg.taylor_c)
        eta = min(0.95, max(ETA_FLOOR, 0.7 * gap_u / u))
        return tail_degree(eta, self.cfg.eps / 10.0)

    def _degree_lower(self, ell, gap_l):
        if self.cfg.taylor_degree is not None:
            return self.cfg.taylor_degree
        if self.cfg.eta is not None:
            return scheduled_degree(self.cfg.eta / 2.0, self.cfg.eps,
                                    self.cfg.taylor_c)
        eta = min(0.95, max(ETA_FLOOR, 0.7 * gap_l / (0.7 * gap_l + ell)))
        return tail_degree(eta, self.cfg.eps / 10.0)

    # -- public per-iteration interface -------------------------------------

    def resistances(self, u: float, ell: float) -> tuple[np.ndarray, np.ndarray]:
        gap_u, gap_l = self.lambda_mins(u, ell)
        d = self.cfg.jl_dim
        g = self.graph
        t_up = self._degree_upper(u, gap_u)
        coeffs_u = _upper_coeffs(u, t_up)
        q_sk = self.rng.standard_normal((d, self.m)) / math.sqrt(d)
        x0 = self.b_dense.T @ q_sk.T
        y = _matrix_poly(x0, coeffs_u,
                         lambda h: self.lt_dense @ self._solve_l(h))
        mt_u = self._solve_l(y)
        diff = mt_u[g.heads] - mt_u[g.tails]
        r_hat = g.weights * np.einsum("ij,ij->i", diff, diff)

        q_sk2 = self.rng.standard_normal((d, self.m)) / math.sqrt(d)
        if ell <= 0.0:
            lp = self.lt_dense - ell * self.lap_dense
            solve_lp = self._grounded_cho(lp)
            shifted_w = np.sqrt(self.s - ell)
            bp_t = (self.b_dense * shifted_w[:, None]).T
            mt_l = solve_lp(bp_t @ q_sk2.T)
        else:
            t_lo = self._degree_lower(ell, gap_l)
            coeffs_l = _lower_coeffs(ell, t_lo)
            solve_lt = self._grounded_cho(self.lt_dense)
            bt_t = (self.b_dense * np.sqrt(self.s)[:, None]).T
            y0 = solve_lt(bt_t @ q_sk2.T)
            mt_l = _matrix_poly(y0, coeffs_l,
                                lambda h: solve_lt(self.lap_dense @ h))
        diff = mt_l[g.heads] - mt_l[g.tails]
        t_hat = g.weights * np.einsum("ij,ij->i", diff, diff)
        return r_hat * self.inflate, t_hat * self.inflate

    def lambda_mins(self, u: float, ell: float) -> tuple[float, float]:
        if self._lam_cache is not None and \
                self.iteration - self._lam_stamp < self.cfg.lambda_refresh:
            return self._lam_cache
        if not np.any(self.s > 0):
            vals = (u, -ell)
        else:
            vals = self._refresh_lambda(u, ell)
        vals = (vals[0] * self.cfg.lambda_safety, vals[1] * self.cfg.lambda_safety)
        if vals[0] < 1e-8 * u or vals[1] <= 0:
            raise BarrierViolationError(float("nan"), ell, u, self.iteration)
        self._lam_cache = vals
        self._lam_stamp = self.iteration
        return vals

    def _refresh_lambda(self, u: float, ell: float) -> tuple[float, float]:
        cfg = self.cfg
        k = cfg.trace_k
        probes = cfg.trace_probes
        active = self.s > 0
        m_active = int(np.count_nonzero(active))
        bt = self.b_dense * np.sqrt(self.s)[:, None]
        gap_u_guess = self._lam_cache[0] if self._lam_cache else u
        t_up = self._degree_upper(u, max(gap_u_guess, 1e-3 * u))
        coeffs_u = _upper_coeffs(u, t_up)

        def k_u_apply(block):
            return bt @ self._solve_l(bt.T @ block)

        z = self.rng.standard_normal((self.m, probes))
        h = z
        for _ in range(k):
            h = _matrix_poly(h, coeffs_u, k_u_apply)
        tr_u = float(np.mean(np.einsum("ij,ij->j", h, h)))
        alpha = (tr_u ** (1.0 / (2 * k)) * m_active ** (-1.0 / (4 * k))) ** -2.0

        z2 = self.rng.standard_normal((self.m, probes))
        if ell <= 0.0:
            lp = self.lt_dense - ell * self.lap_dense
            solve_lp = self._grounded_cho(lp)

            def k_l_apply(block):
                return self.b_dense @ solve_lp(self.b_dense.T @ block)

            h = z2
            for _ in range(k):
                h = k_l_apply(h)
            tr_l = float(np.mean(np.einsum("ij,ij->j", h, h)))
            beta = tr_l ** (-1.0 / (2 * k)) * (self.n_dim) ** (1.0 / (4 * k))
        else:
            gap_l_guess = self._lam_cache[1] if self._lam_cache else -ell
            t_lo = self._degree_lower(ell, max(gap_l_guess, 1e-3 * max(ell, 1.0)))
            coeffs_l = _lower_coeffs(ell, t_lo)
            solve_lt = self._grounded_cho(self.lt_dense)

            def k_apply(block):
                return self.b_dense @ solve_lt(self.b_dense.T @ block)

            h = z2
            for _ in range(k):
                h = _matrix_poly(h, coeffs_l, k_apply)
                h = _matrix_poly(h, coeffs_l, k_apply)
                h = k_apply(h)
            tr_l = float(np.mean(np.einsum("ij,ij->j", h, h)))
            beta = (tr_l ** (1.0 / (4 * k)) * self.n_dim ** (-1.0 / (8 * k))) ** -2.0
        return float(alpha), float(beta)

    def apply_update(self, chosen: np.ndarray, add: np.ndarray) -> None:
        self.s[chosen] += add
        rows = self.b_dense[chosen]
        self.lt_dense += (rows * add[:, None]).T @ rows
        self.iteration += 1
