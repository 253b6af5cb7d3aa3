"""Barrier potentials, relative effective resistances, and batch sizing.

The potential of a symmetric matrix A between barriers ell < u is

    tr(uI - A)^{-q} + tr(A - ell I)^{-q},

a large q making the potential explode as soon as any eigenvalue of A
approaches either barrier. All quantities here are exact, computed through
one dense symmetric eigendecomposition that callers may reuse.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BarrierViolationError, ConfigError

log = logging.getLogger("sparsekit")

BARRIER_MARGIN = 1e-10
EPS_SOFT_LIMIT = 1.0 / 120.0
EPS_HARD_LIMIT = 0.1


_warned_eps: set[float] = set()


def _validate_params(q: int, eps: float) -> None:
    if not isinstance(q, (int, np.integer)) or q < 10:
        raise ConfigError(f"q must be an integer >= 10, got {q!r}")
    if not (0.0 < eps <= EPS_HARD_LIMIT):
        raise ConfigError(f"eps must lie in (0, {EPS_HARD_LIMIT}], got {eps}")
    if eps > EPS_SOFT_LIMIT and eps not in _warned_eps:
        _warned_eps.add(eps)
        log.warning("eps = %g exceeds 1/120; theory constants are not guaranteed", eps)


@dataclass
class BarrierState:
    """Accumulated matrix with its barrier values and run parameters.

    Invariant: every eigenvalue of ``a`` lies strictly inside (ell, u),
    with margin 1e-10 enforced by the operations below.
    """

    a: np.ndarray = field(repr=False)
    u: float
    ell: float
    j: int
    q: int
    eps: float

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        if self.a.ndim != 2 or self.a.shape[0] != self.a.shape[1]:
            raise ConfigError("state matrix must be square")
        if not self.u > self.ell:
            raise ConfigError(f"need u > ell, got u={self.u}, ell={self.ell}")
        _validate_params(self.q, self.eps)

    @property
    def dim(self) -> int:
        return int(self.a.shape[0])


def initial_barriers(dim: int, q: int) -> tuple[float, float]:
    """Starting barriers (u0, ell0) = (+-(2n)^(1/q)) for dimension n."""
    u0 = (2.0 * dim) ** (1.0 / q)
    return u0, -u0


def initial_state(dim: int, q: int, eps: float) -> BarrierState:
    _validate_params(q, eps)
    if dim < 1:
        raise ConfigError("dimension must be >= 1")
    u0, l0 = initial_barriers(dim, q)
    return BarrierState(a=np.zeros((dim, dim)), u=u0, ell=l0, j=0, q=q, eps=eps)


# ---------------------------------------------------------------------------
# Eigenvalue-level helpers (shared with the sampling engines)


def check_margins(evals: np.ndarray, u: float, ell: float,
                  iteration: int | None = None) -> None:
    """Raise when any eigenvalue is within 1e-10 of a barrier or beyond."""
    lo = float(evals[0])
    hi = float(evals[-1])
    if hi >= u - BARRIER_MARGIN:
        raise BarrierViolationError(hi, ell, u, iteration)
    if lo <= ell + BARRIER_MARGIN:
        raise BarrierViolationError(lo, ell, u, iteration)


def potential_from_eigenvalues(evals: np.ndarray, u: float, ell: float, q: int,
                               iteration: int | None = None) -> float:
    check_margins(evals, u, ell, iteration)
    return float(np.sum((u - evals) ** (-q)) + np.sum((evals - ell) ** (-q)))


def potential(state: BarrierState) -> float:
    """Value of the two-sided trace potential at the current state."""
    evals = np.linalg.eigvalsh(state.a)
    return potential_from_eigenvalues(evals, state.u, state.ell, state.q, state.j)


def lambda_extremes(state: BarrierState) -> tuple[float, float]:
    """Distances of the spectrum to the barriers.

    Returns (lambda_min(uI - A), lambda_min(A - ell I)); both strictly
    positive while the barrier invariant holds.
    """
    evals = np.linalg.eigvalsh(state.a)
    check_margins(evals, state.u, state.ell, state.j)
    return state.u - float(evals[-1]), float(evals[0]) - state.ell


def resistance_terms(state: BarrierState, vectors: np.ndarray):
    """Upper and lower resistance components for a block of row vectors.

    Returns (r, t) with r_i = v_i^T (uI - A)^{-1} v_i and
    t_i = v_i^T (A - ell I)^{-1} v_i, computed from one eigendecomposition.
    """
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    evals, evecs = np.linalg.eigh(state.a)
    check_margins(evals, state.u, state.ell, state.j)
    y2 = (v @ evecs) ** 2
    r = y2 @ (1.0 / (state.u - evals))
    t = y2 @ (1.0 / (evals - state.ell))
    return r, t


def relative_effective_resistance(state: BarrierState, v: np.ndarray) -> float:
    """v^T (uI - A)^{-1} v + v^T (A - ell I)^{-1} v for one vector."""
    r, t = resistance_terms(state, v)
    return float(r[0] + t[0])


def batch_size(state: BarrierState, resistances) -> float:
    """Number of samples for one round, as a real number.

    n^{-2/q} * sum(R_i) * min(lambda_min(uI - A), lambda_min(A - ell I)).
    Callers draw ceil() of this many vectors but use the real value in the
    barrier increments.
    """
    res = np.asarray(resistances, dtype=float)
    if res.size == 0:
        raise ConfigError("resistance list is empty")
    gap_u, gap_l = lambda_extremes(state)
    n = state.dim
    return float(n ** (-2.0 / state.q) * res.sum() * min(gap_u, gap_l))


def barrier_increments(state: BarrierState, n_samples: float,
                       sum_resistance: float) -> tuple[float, float]:
    """Per-round barrier shifts (delta_u, delta_ell).

    delta_u = (1 + 2 eps) * eps * N / (q * sum R);
    delta_ell uses (1 - 2 eps). The asymmetry makes the gap grow by the
    factor 4 eps / (1 + 2 eps) of delta_u per round.
    """
    if n_samples <= 0 or sum_resistance <= 0:
        raise ConfigError("need positive sample count and resistance sum")
    base = state.eps * n_samples / (state.q * sum_resistance)
    return (1.0 + 2.0 * state.eps) * base, (1.0 - 2.0 * state.eps) * base


# ---------------------------------------------------------------------------
# Rank-1 potential inequalities (test oracles)


def _trace_neg_power(matrix: np.ndarray, shift_sign: float, shift: float, q: int) -> float:
    # tr(shift_sign * matrix + shift * I)^{-q} via eigenvalues
    evals = np.linalg.eigvalsh(matrix)
    vals = shift_sign * evals + shift
    if np.any(vals <= 0):
        raise BarrierViolationError(float(evals[0] if shift_sign > 0 else evals[-1]),
                                    -np.inf, np.inf)
    return float(np.sum(vals ** (-float(q))))


def rank1_potential_bounds(a: np.ndarray, u: float, ell: float, q: int,
                           eps: float, w: np.ndarray):
    """Both sides of the one-step potential inequalities for a rank-1 update.

    Requires w^T (uI - A)^{-1} w <= eps/q and w^T (A - ell I)^{-1} w <= eps/q
    (raises ConfigError otherwise), q >= 10 and eps <= 1/10. Returns
    (lhs_lower, rhs_lower, lhs_upper, rhs_upper) where the harness asserts
    lhs <= rhs in both pairs:

      tr(A + ww^T - ell I)^{-q} <= tr(A - ell I)^{-q}
                                    - q (1 - eps) w^T (A - ell I)^{-(q+1)} w
      tr(uI - A - ww^T)^{-q}    <= tr(uI - A)^{-q}
                                    + q (1 + eps) w^T (uI - A)^{-(q+1)} w
    """
    _validate_params(q, eps)
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    evals, evecs = np.linalg.eigh(a)
    check_margins(evals, u, ell)
    y = evecs.T @ w
    form_u = float(np.sum(y ** 2 / (u - evals)))
    form_l = float(np.sum(y ** 2 / (evals - ell)))
    limit = eps / q
    if form_u > limit or form_l > limit:
        raise ConfigError(
            f"rank-1 update too large: forms ({form_u:.3e}, {form_l:.3e}) "
            f"exceed eps/q = {limit:.3e}")

    power_u = float(np.sum(y ** 2 / (u - evals) ** (q + 1)))
    power_l = float(np.sum(y ** 2 / (evals - ell) ** (q + 1)))
    phi_u = float(np.sum((u - evals) ** (-float(q))))
    phi_l = float(np.sum((evals - ell) ** (-float(q))))

    outer = np.outer(w, w)
    lhs_lower = _trace_neg_power(a + outer, 1.0, -ell, q)
    rhs_lower = phi_l - q * (1.0 - eps) * power_l
    lhs_upper = _trace_neg_power(a + outer, -1.0, u, q)
    rhs_upper = phi_u + q * (1.0 + eps) * power_u
    return lhs_lower, rhs_lower, lhs_upper, rhs_upper


def bss_rank1_bound(a: np.ndarray, u: float, ell: float, delta: float,
                    w: np.ndarray) -> tuple[float, float]:
    """One-step bound for the q = 1 trace potential (baseline algorithm).

    Requires ww^T <= delta (uI - A) and ww^T <= delta (A - ell I) with
    0 < delta < 1. Returns (lhs, rhs) for

      phi(A + ww^T) <= phi(A) + w^T (uI - A)^{-2} w / (1 - delta)
                            - w^T (A - ell I)^{-2} w / (1 + delta)

    with phi(A) = tr(uI - A)^{-1} + tr(A - ell I)^{-1}.
    """
    if not (0.0 < delta < 1.0):
        raise ConfigError(f"delta must be in (0, 1), got {delta}")
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    evals, evecs = np.linalg.eigh(a)
    check_margins(evals, u, ell)
    y = evecs.T @ w
    form_u = float(np.sum(y ** 2 / (u - evals)))
    form_l = float(np.sum(y ** 2 / (evals - ell)))
    if form_u > delta or form_l > delta:
        raise ConfigError("rank-1 update exceeds delta times the barrier gaps")
    phi = float(np.sum(1.0 / (u - evals)) + np.sum(1.0 / (evals - ell)))
    sq_u = float(np.sum(y ** 2 / (u - evals) ** 2))
    sq_l = float(np.sum(y ** 2 / (evals - ell) ** 2))
    lhs = _trace_neg_power(a + np.outer(w, w), -1.0, u, 1) \
        + _trace_neg_power(a + np.outer(w, w), 1.0, -ell, 1)
    rhs = phi + sq_u / (1.0 - delta) - sq_l / (1.0 + delta)
    return lhs, rhs
