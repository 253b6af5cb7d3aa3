"""The two sampling algorithms: barrier-guided batches and the one-at-a-time baseline.

Both consume an isotropic VectorSet, maintain a matrix between moving
barriers, and return nonnegative scalars supported on few vectors whose
weighted outer products approximate the identity after a final rescale.
Runs are deterministic given (seed, mode, inputs).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .potential import check_margins, initial_state
from .errors import BarrierViolationError, ConfigError
from .vectorset import VectorSet, validate_decomposition
from ._linalg import complement_basis

log = logging.getLogger("sparsekit")

HALF_BARRIER_TOL = 1e-10
STRICT_RESAMPLE_LIMIT = 64


@dataclass
class RunCaps:
    """Safety limits converting pathological runs into diagnosable aborts.

    None means "use the default for the algorithm": 100x the expected
    iteration and sample bounds, so a cap trip signals a real problem.
    """

    max_iterations: int | None = None
    max_samples: int | None = None

    def resolved(self, algorithm: str, n: int, q: int, eps: float) -> tuple[int, int]:
        if algorithm == "almost_linear":
            iters = math.ceil(100 * 10 * q * n ** (3.0 / q) / eps ** 2)
            samples = math.ceil(100 * 10 * q * n / eps ** 2)
        else:
            iters = math.ceil(800 * n / eps ** 2)
            samples = iters
        return (self.max_iterations or iters, self.max_samples or samples)


@dataclass
class RunLog:
    """Per-iteration trace of a run, stored column-wise."""

    batch_target: list[float] = field(default_factory=list)
    draws: list[int] = field(default_factory=list)
    delta_u: list[float] = field(default_factory=list)
    delta_ell: list[float] = field(default_factory=list)
    sum_resistance: list[float] = field(default_factory=list)
    min_gap: list[float] = field(default_factory=list)
    phi_before: list[float | None] = field(default_factory=list)
    phi_after: list[float | None] = field(default_factory=list)
    half_barrier_ok: list[bool | None] = field(default_factory=list)

    def __len__(self):
        return len(self.draws)

    def as_columns(self) -> dict:
        return {
            "batch_target": list(self.batch_target),
            "draws": list(self.draws),
            "delta_u": list(self.delta_u),
            "delta_ell": list(self.delta_ell),
            "sum_resistance": list(self.sum_resistance),
            "min_gap": list(self.min_gap),
            "phi_before": list(self.phi_before),
            "phi_after": list(self.phi_after),
            "half_barrier_ok": list(self.half_barrier_ok),
        }


@dataclass
class SparsifierResult:
    """Output of a sparsifier run.

    ``scalars`` are the raw accumulated values s_i; multiplying by
    ``rescale`` centers the spectrum of sum(s_i v_i v_i^T) at 1.
    ``aborted`` is set when a safety cap stopped the run before the
    ending condition; ``snapshots`` holds (iteration, scalars, u, ell)
    checkpoints when requested.
    """

    scalars: np.ndarray = field(repr=False)
    nonzero_count: int
    iterations: int
    final_u: float
    final_ell: float
    rescale: float
    log: RunLog = field(repr=False)
    seed: int
    total_samples: int
    algorithm: str
    mode: str
    aborted: bool = False
    abort_reason: str | None = None
    snapshots: list = field(default_factory=list, repr=False)
    drawn_indices: list | None = field(default=None, repr=False)


def sample_batch(weights, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. draws of indices with P(i) proportional to weights.

    Duplicates are expected; the draw sequence is a pure function of the
    generator state.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ConfigError("weights must be a nonempty 1-d array")
    if np.any(w < 0):
        raise ConfigError("weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise ConfigError("weights must not be all zero")
    if count < 1:
        raise ConfigError("sample count must be >= 1")
    return rng.choice(w.size, size=int(count), replace=True, p=w / total)


def check_half_barrier(w_mat: np.ndarray, a: np.ndarray, u: float) -> bool:
    """True iff 0 <= W <= (uI - A)/2 up to eigenvalue tolerance 1e-10.

    Diagnostic only; run loops never branch on it unless strict
    resampling was requested.
    """
    w_mat = np.asarray(w_mat, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.linalg.eigvalsh(w_mat)[0] < -HALF_BARRIER_TOL:
        return False
    gap = 0.5 * (u * np.eye(a.shape[0]) - a) - w_mat
    return bool(np.linalg.eigvalsh(gap)[0] >= -HALF_BARRIER_TOL)


def _reduced_vectors(vs: VectorSet) -> np.ndarray:
    """Vectors in coordinates of the declared subspace (kernel removed)."""
    if vs.kernel is None:
        return vs.vectors
    return vs.vectors @ complement_basis(vs.kernel)


def _validate_input(vs: VectorSet) -> None:
    report = validate_decomposition(vs, tol=1e-6)
    if not report.passed:
        raise ConfigError(
            f"vector set is not an identity decomposition "
            f"(relative deviation {report.deviation_rel:.3e})")


def _half_barrier_from_rows(z_rows: np.ndarray) -> bool:
    # z_rows are the whitened, weight-scaled batch rows; W is their Gram sum.
    gram = z_rows @ z_rows.T
    top = float(np.linalg.eigvalsh(gram)[-1]) if gram.size else 0.0
    return top <= 0.5 + HALF_BARRIER_TOL


def run_almost_linear(vs: VectorSet, q: int = 10, eps: float = 0.05,
                      mode: str = "exact", seed: int = 0,
                      caps: RunCaps | None = None,
                      estimator=None,
                      strict_resample: bool = False,
                      snapshot_at=(),
                      detail: bool = False) -> SparsifierResult:
    """Batched barrier-guided sampling.

    Each round computes relative effective resistances of all vectors
    (exactly, or through the fast estimators when mode="fast"), draws a
    batch with replacement proportional to them, adds eps/(q R_i) per draw
    to the chosen scalar, and advances both barriers. The loop ends once
    the barrier gap reaches twice its starting width; the final rescale is
    2 / (u_k + ell_k).

    ``snapshot_at`` requests (iteration, scalars, u, ell) checkpoints;
    ``detail`` additionally records the drawn indices of every round.
    """
    if mode not in ("exact", "fast"):
        raise ConfigError(f"mode must be 'exact' or 'fast', got {mode!r}")
    _validate_input(vs)
    vt = np.ascontiguousarray(_reduced_vectors(vs))
    m, n = vt.shape
    caps = caps or RunCaps()
    cap_iters, cap_samples = caps.resolved("almost_linear", n, q, eps)
    state = initial_state(n, q, eps)
    u0 = state.u
    ending_gap = 4.0 * u0
    u, ell = state.u, state.ell
    rng = np.random.default_rng(seed)

    fast_engine = None
    if mode == "fast":
        if strict_resample:
            raise ConfigError("strict resampling needs exact half-barrier checks; "
                              "use mode='exact'")
        if vs.provenance is None:
            raise ConfigError("fast mode needs graph provenance")
        from .fastpath import FastIterationEngine
        fast_engine = FastIterationEngine(vs.provenance, q=q, eps=eps,
                                          cfg=estimator, rng=rng, n_dim=n)

    scalars = np.zeros(m)
    a = np.zeros((n, n))
    run_log = RunLog()
    drawn = [] if detail else None
    snapshot_at = sorted(set(int(s) for s in snapshot_at))
    snapshots = []
    total_samples = 0
    j = 0
    aborted = False
    abort_reason = None
    inv_q_eps = eps / q
    n_pow = n ** (-2.0 / q)

    while u - ell < ending_gap:
        if j >= cap_iters:
            aborted, abort_reason = True, f"iteration cap {cap_iters} reached"
            break
        if total_samples >= cap_samples:
            aborted, abort_reason = True, f"sample cap {cap_samples} reached"
            break

        if mode == "exact":
            evals, evecs = np.linalg.eigh(a)
            check_margins(evals, u, ell, j)
            phi = float(np.sum((u - evals) ** (-q)) + np.sum((evals - ell) ** (-q)))
            y = vt @ evecs
            y2 = y * y
            r = y2 @ (1.0 / (u - evals))
            t = y2 @ (1.0 / (evals - ell))
            gap_u = u - float(evals[-1])
            gap_l = float(evals[0]) - ell
        else:
            r, t = fast_engine.resistances(u, ell)
            gap_u, gap_l = fast_engine.lambda_mins(u, ell)
            phi = None

        resist = r + t
        sum_res = float(resist.sum())
        batch_target = n_pow * sum_res * min(gap_u, gap_l)
        delta_u = (1.0 + 2.0 * eps) * eps * batch_target / (q * sum_res)
        delta_ell = (1.0 - 2.0 * eps) * eps * batch_target / (q * sum_res)
        n_draws = max(1, math.ceil(batch_target))

        for attempt in range(STRICT_RESAMPLE_LIMIT):
            idx = sample_batch(resist, n_draws, rng)
            counts = np.bincount(idx, minlength=m)
            chosen = np.flatnonzero(counts)
            add = inv_q_eps * counts[chosen] / resist[chosen]
            if mode == "exact":
                # whitened batch rows; Gram top eigenvalue decides the event
                z = (y[chosen] * np.sqrt(add)[:, None]) / np.sqrt(u - evals)
                half_ok = _half_barrier_from_rows(z)
            else:
                half_ok = None
            if half_ok is None or half_ok or not strict_resample:
                break
        else:
            aborted = True
            abort_reason = f"strict resampling failed {STRICT_RESAMPLE_LIMIT} times"
            break

        scalars[chosen] += add
        if mode == "exact":
            rows = vt[chosen]
            a += (rows * add[:, None]).T @ rows
        else:
            fast_engine.apply_update(chosen, add)
        total_samples += n_draws
        if drawn is not None:
            drawn.append(idx)

        run_log.batch_target.append(float(batch_target))
        run_log.draws.append(int(n_draws))
        run_log.delta_u.append(float(delta_u))
        run_log.delta_ell.append(float(delta_ell))
        run_log.sum_resistance.append(sum_res)
        run_log.min_gap.append(float(min(gap_u, gap_l)))
        run_log.phi_before.append(phi)
        run_log.phi_after.append(None)
        run_log.half_barrier_ok.append(half_ok)

        u += delta_u
        ell += delta_ell
        j += 1
        if snapshot_at and j == snapshot_at[0]:
            snapshot_at.pop(0)
            snapshots.append((j, scalars.copy(), u, ell))

    # final exact validation; also closes the phi_after column
    if mode == "fast":
        a = (vt.T * scalars) @ vt
    evals = np.linalg.eigvalsh(a)
    if not aborted:
        check_margins(evals, u, ell, j)
    for k in range(len(run_log)):
        if k + 1 < len(run_log):
            run_log.phi_after[k] = run_log.phi_before[k + 1]
    if len(run_log) and not aborted and mode == "exact":
        run_log.phi_after[-1] = float(
            np.sum((u - evals) ** (-q)) + np.sum((evals - ell) ** (-q)))

    return SparsifierResult(
        scalars=scalars,
        nonzero_count=int(np.count_nonzero(scalars)),
        iterations=j,
        final_u=u,
        final_ell=ell,
        rescale=2.0 / (u + ell),
        log=run_log,
        seed=seed,
        total_samples=total_samples,
        algorithm="almost_linear",
        mode=mode,
        aborted=aborted,
        abort_reason=abort_reason,
        snapshots=snapshots,
        drawn_indices=drawn,
    )


def run_randomized_bss(vs: VectorSet, eps: float = 0.1, seed: int = 0,
                       caps: RunCaps | None = None,
                       snapshot_at=(),
                       detail: bool = False) -> SparsifierResult:
    """One-vector-at-a-time baseline with inverse-trace barriers.

    Starts at u = -ell = 8n/eps and stops once the barrier gap has grown
    by another 8n/eps. (Read as gap growth: the literal gap starts at
    16n/eps, so a fresh-gap reading would never iterate.) Each step samples
    one vector with probability proportional to its relative effective
    resistance R_i and adds eps/R_i of its outer product.
    """
    if not (0.0 < eps <= 0.1):
        raise ConfigError(f"eps must lie in (0, 0.1], got {eps}")
    _validate_input(vs)
    vt = np.ascontiguousarray(_reduced_vectors(vs))
    m, n = vt.shape
    caps = caps or RunCaps()
    cap_iters, cap_samples = caps.resolved("randomized_bss", n, 10, eps)

    u = 8.0 * n / eps
    ell = -u
    growth_target = 8.0 * n / eps
    start_gap = u - ell
    rng = np.random.default_rng(seed)
    scalars = np.zeros(m)
    a = np.zeros((n, n))
    run_log = RunLog()
    drawn = [] if detail else None
    snapshot_at = sorted(set(int(s) for s in snapshot_at))
    snapshots = []
    j = 0
    aborted = False
    abort_reason = None

    while (u - ell) - start_gap < growth_target:
        if j >= cap_iters:
            aborted, abort_reason = True, f"iteration cap {cap_iters} reached"
            break
        evals, evecs = np.linalg.eigh(a)
        check_margins(evals, u, ell, j)
        trace_val = float(np.sum(1.0 / (u - evals)) + np.sum(1.0 / (evals - ell)))
        y = vt @ evecs
        y2 = y * y
        resist = y2 @ (1.0 / (u - evals)) + y2 @ (1.0 / (evals - ell))
        idx = int(sample_batch(resist, 1, rng)[0])
        weight = eps / resist[idx]
        scalars[idx] += weight
        a += weight * np.outer(vt[idx], vt[idx])
        delta_u = eps / (trace_val * (1.0 - eps))
        delta_ell = eps / (trace_val * (1.0 + eps))

        run_log.batch_target.append(1.0)
        run_log.draws.append(1)
        run_log.delta_u.append(float(delta_u))
        run_log.delta_ell.append(float(delta_ell))
        run_log.sum_resistance.append(float(resist.sum()))
        run_log.min_gap.append(float(min(u - evals[-1], evals[0] - ell)))
        run_log.phi_before.append(trace_val)
        run_log.phi_after.append(None)
        run_log.half_barrier_ok.append(None)
        if drawn is not None:
            drawn.append(np.array([idx]))

        u += delta_u
        ell += delta_ell
        j += 1
        if snapshot_at and j == snapshot_at[0]:
            snapshot_at.pop(0)
            snapshots.append((j, scalars.copy(), u, ell))

    evals = np.linalg.eigvalsh(a)
    if not aborted:
        check_margins(evals, u, ell, j)
    for k in range(len(run_log) - 1):
        run_log.phi_after[k] = run_log.phi_before[k + 1]

    return SparsifierResult(
        scalars=scalars,
        nonzero_count=int(np.count_nonzero(scalars)),
        iterations=j,
        final_u=u,
        final_ell=ell,
        rescale=2.0 / (u + ell),
        log=run_log,
        seed=seed,
        total_samples=j,
        algorithm="randomized_bss",
        mode="exact",
        aborted=aborted,
        abort_reason=abort_reason,
        snapshots=snapshots,
        drawn_indices=drawn,
    )
