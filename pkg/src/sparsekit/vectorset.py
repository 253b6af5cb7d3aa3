"""Isotropic rank-1 decompositions and the graph reduction.

A VectorSet holds vectors v_1..v_m whose outer products sum to the identity,
either on the full space or on the orthogonal complement of a declared
kernel direction (for connected graphs: the all-ones vector). Graphs reduce
to this form through v_i = pinv_sqrt(L) u_i with u_i the weighted signed
incidence vector of edge i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .graphs import WeightedGraph, edge_vectors, laplacian, require_connected
from ._linalg import pinv_sqrt

DEFAULT_TOL = 1e-8
KERNEL_CUT = 1e-12


@dataclass
class VectorSet:
    """m vectors of dimension n decomposing the identity on a declared subspace.

    ``kernel`` is a unit vector whose orthogonal complement carries the
    identity; None means the identity is meant on the full space.
    ``provenance`` maps vector index i to edge i of the source graph.
    """

    dim: int
    vectors: np.ndarray = field(repr=False)
    provenance: WeightedGraph | None = None
    kernel: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise ConfigError(
                f"vectors must be (m, {self.dim}), got {self.vectors.shape}")
        if self.kernel is not None:
            self.kernel = np.asarray(self.kernel, dtype=float)
            if self.kernel.shape != (self.dim,):
                raise ConfigError("kernel direction has wrong dimension")
            self.kernel = self.kernel / np.linalg.norm(self.kernel)

    @property
    def n_vectors(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def subspace_dim(self) -> int:
        return self.dim - (0 if self.kernel is None else 1)


@dataclass
class ValidationReport:
    """Outcome of checking sum(v v^T) against the identity."""

    deviation: float        # Frobenius norm of the residual
    deviation_rel: float    # deviation / ||I||_F on the subspace
    tol: float
    passed: bool
    subspace_dim: int


def validate_decomposition(vs: VectorSet, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Measure || sum_i v_i v_i^T - I ||_F on the declared subspace.

    Passes when the relative deviation is at most ``tol``. Structural
    problems (non-finite entries, too few vectors) raise ConfigError.
    """
    v = vs.vectors
    if not np.all(np.isfinite(v)):
        raise ConfigError("vector set contains non-finite entries")
    if vs.n_vectors < vs.subspace_dim:
        raise ConfigError(
            f"need at least {vs.subspace_dim} vectors, got {vs.n_vectors}")
    gram = v.T @ v
    target = np.eye(vs.dim)
    if vs.kernel is not None:
        target -= np.outer(vs.kernel, vs.kernel)
    deviation = float(np.linalg.norm(gram - target, ord="fro"))
    scale = np.sqrt(vs.subspace_dim)
    return ValidationReport(
        deviation=deviation,
        deviation_rel=deviation / scale,
        tol=tol,
        passed=deviation <= tol * scale,
        subspace_dim=vs.subspace_dim,
    )


def from_graph(g: WeightedGraph) -> VectorSet:
    """Reduce a connected graph to an isotropic decomposition on ones-complement.

    Uses the dense pseudo-inverse square root of the Laplacian; eigenvalues
    below 1e-12 of the largest are treated as kernel. The i-th vector
    corresponds to edge i of the input graph.
    """
    require_connected(g)
    root, rank = pinv_sqrt(laplacian(g), kernel_cut=KERNEL_CUT)
    if rank != g.n_vertices - 1:
        raise ConfigError(
            f"Laplacian rank {rank} != n-1; graph numerically disconnected")
    vectors = edge_vectors(g) @ root
    kernel = np.full(g.n_vertices, 1.0 / np.sqrt(g.n_vertices))
    return VectorSet(dim=g.n_vertices, vectors=vectors,
                     provenance=g, kernel=kernel)


def extract_sparsifier(g: WeightedGraph, result) -> WeightedGraph:
    """Materialize the reweighted subgraph selected by a sparsifier run.

    Keeps edges with nonzero scalars; edge i gets weight
    rescale * s_i * w_i so the output Laplacian approximates the input one.
    """
    scalars = np.asarray(result.scalars, dtype=float)
    if g is None:
        raise ConfigError("graph provenance is required to extract a sparsifier")
    if scalars.shape[0] != g.n_edges:
        raise ConfigError(
            f"scalar count {scalars.shape[0]} does not match edge count {g.n_edges}")
    return g.reweighted(scalars * g.weights * float(result.rescale))
