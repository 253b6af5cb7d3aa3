"""Weighted undirected graphs: construction, I/O, Laplacians, verification.

The edge-list text format is one edge per line, ``a<TAB>b<TAB>w`` with
0-based vertex ids; the vertex count is inferred as ``max(id) + 1``.
Matrix Market coordinate symmetric files are accepted as Laplacians.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, DisconnectedGraphError, GraphFormatError
from ._linalg import ones_complement_basis

log = logging.getLogger("sparsekit")

DENSE_VERIFY_LIMIT = 2000


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected weighted graph with canonicalized edge list.

    Edges are stored as parallel arrays (heads, tails, weights) with
    heads < tails, no duplicate pairs, strictly positive finite weights.
    Edge order is preserved from construction; indices into the edge list
    are used as provenance by the sparsifier.
    """

    n_vertices: int
    heads: np.ndarray = field(repr=False)
    tails: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, n_vertices: int, edges) -> "WeightedGraph":
        if n_vertices < 1:
            raise ConfigError(f"vertex count must be >= 1, got {n_vertices}")
        rows = list(edges)
        a = np.array([e[0] for e in rows], dtype=np.int64)
        b = np.array([e[1] for e in rows], dtype=np.int64)
        w = np.array([e[2] for e in rows], dtype=float)
        if a.size:
            if a.min(initial=0) < 0 or b.min(initial=0) < 0 \
                    or a.max(initial=0) >= n_vertices or b.max(initial=0) >= n_vertices:
                raise ConfigError("edge endpoint outside vertex range")
            if np.any(a == b):
                i = int(np.argmax(a == b))
                raise ConfigError(f"self-loop at vertex {a[i]} is not allowed")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ConfigError("edge weights must be strictly positive and finite")
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        keys = lo * n_vertices + hi
        uniq, counts = np.unique(keys, return_counts=True)
        if np.any(counts > 1):
            dup = uniq[np.argmax(counts > 1)]
            raise ConfigError(
                f"duplicate edge ({dup // n_vertices}, {dup % n_vertices})"
            )
        return cls(n_vertices, lo, hi, w)

    @property
    def n_edges(self) -> int:
        return int(self.heads.shape[0])

    def edge_list(self):
        """Edges as (a, b, w) tuples in stored order."""
        return [
            (int(a), int(b), float(w))
            for a, b, w in zip(self.heads, self.tails, self.weights)
        ]

    def scaled(self, factor: float) -> "WeightedGraph":
        return WeightedGraph(self.n_vertices, self.heads, self.tails,
                             self.weights * float(factor))

    def reweighted(self, new_weights) -> "WeightedGraph":
        """Same topology with new positive weights; zero-weight edges dropped."""
        w = np.asarray(new_weights, dtype=float)
        keep = w != 0.0
        return WeightedGraph.from_edges(
            self.n_vertices,
            zip(self.heads[keep], self.tails[keep], w[keep]),
        )


def same_graph(g1: WeightedGraph, g2: WeightedGraph, tol: float = 0.0) -> bool:
    """Edge-multiset equality up to ``tol`` on weights."""
    if g1.n_vertices != g2.n_vertices or g1.n_edges != g2.n_edges:
        return False
    def canon(g):
        order = np.lexsort((g.tails, g.heads))
        return g.heads[order], g.tails[order], g.weights[order]
    a1, b1, w1 = canon(g1)
    a2, b2, w2 = canon(g2)
    return bool(np.array_equal(a1, a2) and np.array_equal(b1, b2)
                and np.allclose(w1, w2, rtol=tol, atol=tol))


# ---------------------------------------------------------------------------
# Laplacian and incidence assembly


def adjacency_sparse(g: WeightedGraph) -> sp.csr_matrix:
    n = g.n_vertices
    data = np.concatenate([g.weights, g.weights])
    rows = np.concatenate([g.heads, g.tails])
    cols = np.concatenate([g.tails, g.heads])
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def laplacian_sparse(g: WeightedGraph) -> sp.csr_matrix:
    adj = adjacency_sparse(g)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return (sp.diags(deg) - adj).tocsr()


def laplacian(g: WeightedGraph) -> np.ndarray:
    """Dense graph Laplacian: degrees on the diagonal, -w off-diagonal."""
    return laplacian_sparse(g).toarray()


def incidence(g: WeightedGraph) -> sp.csr_matrix:
    """Weighted signed incidence factor B with L = B^T B.

    Row i equals sqrt(w_i) * (e_a - e_b) for edge i = (a, b, w_i).
    """
    m = g.n_edges
    root_w = np.sqrt(g.weights)
    data = np.concatenate([root_w, -root_w])
    rows = np.concatenate([np.arange(m), np.arange(m)])
    cols = np.concatenate([g.heads, g.tails])
    return sp.csr_matrix((data, (rows, cols)), shape=(m, g.n_vertices))


def edge_vectors(g: WeightedGraph) -> np.ndarray:
    """Dense incidence rows u_i = sqrt(w_i)(e_a - e_b), one per edge."""
    return incidence(g).toarray()


def require_connected(g: WeightedGraph) -> None:
    """Raise DisconnectedGraphError naming a vertex pair with no path."""
    if g.n_vertices == 1:
        return
    ncomp, labels = connected_components(adjacency_sparse(g), directed=False)
    if ncomp > 1:
        u = int(np.argmax(labels == 0))
        v = int(np.argmax(labels != labels[u]))
        raise DisconnectedGraphError(u, v)


def is_connected(g: WeightedGraph) -> bool:
    try:
        require_connected(g)
    except DisconnectedGraphError:
        return False
    return True


# ---------------------------------------------------------------------------
# Generators for the test corpus


def generate(family: str, seed: int = 0, **params) -> WeightedGraph:
    """Deterministic unit-weight graph families.

    Families: ``complete`` (n), ``grid`` (rows, cols), ``barbell``
    (left, right), ``erdos_renyi`` (n, p). Erdos-Renyi draws are resampled
    up to 50 times until connected, then repaired by bridging components
    (logged) so the result is always connected.
    """
    if family == "complete":
        n = int(params["n"])
        if n < 2:
            raise ConfigError("complete graph needs n >= 2")
        edges = [(i, j, 1.0) for i in range(n) for j in range(i + 1, n)]
        return WeightedGraph.from_edges(n, edges)

    if family == "grid":
        rows, cols = int(params["rows"]), int(params["cols"])
        if rows < 1 or cols < 1 or rows * cols < 2:
            raise ConfigError("grid needs at least two vertices")
        def vid(r, c):
            return r * cols + c
        edges = []
        for r in range(rows):
            for c in range(cols):
                if c + 1 < cols:
                    edges.append((vid(r, c), vid(r, c + 1), 1.0))
                if r + 1 < rows:
                    edges.append((vid(r, c), vid(r + 1, c), 1.0))
        return WeightedGraph.from_edges(rows * cols, edges)

    if family == "barbell":
        left, right = int(params["left"]), int(params["right"])
        if left < 2 or right < 2:
            raise ConfigError("barbell needs cliques of size >= 2")
        edges = [(i, j, 1.0) for i in range(left) for j in range(i + 1, left)]
        edges += [
            (left + i, left + j, 1.0)
            for i in range(right) for j in range(i + 1, right)
        ]
        edges.append((left - 1, left, 1.0))
        return WeightedGraph.from_edges(left + right, edges)

    if family == "erdos_renyi":
        n, p = int(params["n"]), float(params["p"])
        if n < 2 or not (0.0 < p <= 1.0):
            raise ConfigError("erdos_renyi needs n >= 2 and p in (0, 1]")
        rng = np.random.default_rng(seed)
        for _ in range(50):
            iu, ju = np.triu_indices(n, k=1)
            mask = rng.random(iu.shape[0]) < p
            g = WeightedGraph.from_edges(
                n, zip(iu[mask], ju[mask], np.ones(int(mask.sum()))))
            if g.n_edges and is_connected(g):
                return g
        # repair: bridge components with deterministic extra edges
        log.warning("erdos_renyi(%d, %.3g) repaired to ensure connectivity", n, p)
        ncomp, labels = connected_components(adjacency_sparse(g), directed=False)
        reps = [int(np.argmax(labels == c)) for c in range(ncomp)]
        extra = [(reps[i], reps[i + 1], 1.0) for i in range(ncomp - 1)]
        return WeightedGraph.from_edges(n, g.edge_list() + extra)

    raise ConfigError(f"unknown graph family {family!r}")


# ---------------------------------------------------------------------------
# File formats


def parse_edge_tsv(text: str) -> WeightedGraph:
    edges = []
    max_id = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 3:
            raise GraphFormatError(
                f"expected 'a<TAB>b<TAB>w', got {raw!r}", line=lineno)
        try:
            a, b, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as exc:
            raise GraphFormatError(str(exc), line=lineno) from None
        if a < 0 or b < 0:
            raise GraphFormatError("negative vertex id", line=lineno)
        if a == b:
            raise GraphFormatError(f"self-loop at vertex {a}", line=lineno)
        if not np.isfinite(w) or w <= 0:
            raise GraphFormatError(f"weight must be positive, got {w}", line=lineno)
        edges.append((a, b, w))
        max_id = max(max_id, a, b)
    if not edges:
        raise GraphFormatError("no edges found")
    try:
        return WeightedGraph.from_edges(max_id + 1, edges)
    except ConfigError as exc:
        raise GraphFormatError(str(exc)) from None


def read_edge_tsv(path) -> WeightedGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_edge_tsv(fh.read())


def write_edge_tsv(g: WeightedGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b, w in g.edge_list():
            fh.write(f"{a}\t{b}\t{w!r}\n")


def read_laplacian_mtx(path) -> WeightedGraph:
    """Read a Matrix Market coordinate symmetric Laplacian as a graph."""
    try:
        mat = scipy.io.mmread(path)
    except Exception as exc:
        raise GraphFormatError(f"not a Matrix Market file: {exc}") from None
    mat = sp.coo_matrix(mat)
    if mat.shape[0] != mat.shape[1]:
        raise GraphFormatError("Laplacian must be square")
    n = mat.shape[0]
    edges = {}
    for i, j, v in zip(mat.row, mat.col, mat.data):
        if i == j or v == 0.0:
            continue
        if v > 0:
            raise GraphFormatError(
                f"off-diagonal entry ({i},{j}) = {v} is positive; not a Laplacian")
        key = (min(int(i), int(j)), max(int(i), int(j)))
        prev = edges.get(key)
        if prev is not None and not np.isclose(prev, -v):
            raise GraphFormatError(f"asymmetric entries for edge {key}")
        edges[key] = -v
    if not edges:
        raise GraphFormatError("no off-diagonal entries found")
    g = WeightedGraph.from_edges(n, [(a, b, w) for (a, b), w in edges.items()])
    lap = laplacian_sparse(g)
    diag = np.asarray(sp.coo_matrix(mat).todense()).diagonal() \
        if n <= DENSE_VERIFY_LIMIT else None
    if diag is not None and not np.allclose(diag, lap.diagonal(), rtol=1e-8, atol=1e-10):
        log.warning("Laplacian diagonal inconsistent with off-diagonal degrees; "
                    "using degrees derived from off-diagonal entries")
    return g


def write_laplacian_mtx(g: WeightedGraph, path) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(laplacian_sparse(g)), symmetry="symmetric")


def load_graph(path, fmt: str = "tsv") -> WeightedGraph:
    if fmt == "tsv":
        return read_edge_tsv(path)
    if fmt == "mtx":
        return read_laplacian_mtx(path)
    raise ConfigError(f"unknown graph format {fmt!r}")


def save_graph(g: WeightedGraph, path, fmt: str = "tsv") -> None:
    if fmt == "tsv":
        write_edge_tsv(g, path)
    elif fmt == "mtx":
        write_laplacian_mtx(g, path)
    else:
        raise ConfigError(f"unknown graph format {fmt!r}")


# ---------------------------------------------------------------------------
# Exact verification of the sparsifier guarantee


@dataclass
class VerificationReport:
    """Exact spectral comparison of a candidate sparsifier against its source.

    lambda_lo and lambda_hi are the extreme generalized eigenvalues of
    (L', L) restricted to the complement of the all-ones vector;
    epsilon_achieved = max(1 - lambda_lo, lambda_hi - 1). quad_form_samples
    holds ratios x^T L' x / x^T L x for random probe vectors.
    """

    lambda_lo: float
    lambda_hi: float
    epsilon_achieved: float
    edges_in: int
    edges_out: int
    quad_form_samples: list[float]


def verify_sparsifier(g: WeightedGraph, g_sparse: WeightedGraph,
                      n_probe: int = 16, seed: int = 0) -> VerificationReport:
    """Dense, exact check of (1 +- eps) quadratic-form containment.

    Computes all generalized eigenvalues of (L_sparse, L) on the subspace
    orthogonal to the all-ones vector, plus random quadratic-form probes.
    Dense and exact by design; refuses graphs beyond n = 2000.
    """
    if g.n_vertices != g_sparse.n_vertices:
        raise ConfigError(
            f"vertex count mismatch: {g.n_vertices} vs {g_sparse.n_vertices}")
    if g.n_vertices > DENSE_VERIFY_LIMIT:
        raise ConfigError(
            f"exact verification is capped at n = {DENSE_VERIFY_LIMIT}")
    require_connected(g)
    basis = ones_complement_basis(g.n_vertices)
    l_base = basis.T @ laplacian(g) @ basis
    l_cand = basis.T @ laplacian(g_sparse) @ basis
    evals = scipy.linalg.eigh(l_cand, l_base, eigvals_only=True)
    lam_lo, lam_hi = float(evals[0]), float(evals[-1])

    rng = np.random.default_rng(seed)
    samples = []
    lap_base = laplacian_sparse(g)
    lap_cand = laplacian_sparse(g_sparse)
    for _ in range(max(0, int(n_probe))):
        x = rng.standard_normal(g.n_vertices)
        x -= x.mean()
        samples.append(float((x @ (lap_cand @ x)) / (x @ (lap_base @ x))))

    return VerificationReport(
        lambda_lo=lam_lo,
        lambda_hi=lam_hi,
        epsilon_achieved=max(1.0 - lam_lo, lam_hi - 1.0),
        edges_in=g.n_edges,
        edges_out=g_sparse.n_edges,
        quad_form_samples=samples,
    )
