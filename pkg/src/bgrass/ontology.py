"""Adverse-event relation graph and its correlation structure.

Terms that share at least one ontology group are connected; the graph is
summarized by its normalized Laplacian L, and a correlation matrix is
obtained by inverting the shifted precision L + eps*I and rescaling it to
unit diagonal.  The strength of cross-term information borrowing decreases
with eps; eps = inf is an exact independence state (identity correlation).

The sampler never inverts the correlation matrix numerically: writing
D = diag((L + eps*I)^{-1}), the inverse correlation is exactly
D^{1/2} (L + eps*I) D^{1/2}, which keeps the sparsity pattern of L and is
carried here together with its Cholesky factor.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky


@dataclass(frozen=True)
class OntologyGraph:
    """Undirected same-group relation graph over the modeled vocabulary."""

    n_vertices: int
    edges: np.ndarray  # (E, 2) int64, each row j < k, no duplicates
    degrees: np.ndarray  # (J,) int64
    groups: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_edges(self):
        return self.edges.shape[0]


def build_graph(mapping, ae_vocabulary):
    """Build the relation graph for an ordered vocabulary.

    Parameters
    ----------
    mapping : dict[str, set[str]]
        Term id -> group ids (terms may belong to several groups).
    ae_vocabulary : sequence of str
        Modeled terms, in model order; terms absent from the mapping stay
        isolated.

    Two terms are adjacent when they share at least one group; sharing
    several groups still yields a single edge.
    """
    index = {term: j for j, term in enumerate(ae_vocabulary)}
    j_count = len(ae_vocabulary)

    members: dict[str, list[int]] = {}
    for term, group_ids in mapping.items():
        j = index.get(term)
        if j is None:
            continue
        for gid in group_ids:
            members.setdefault(gid, []).append(j)

    groups = {gid: np.array(sorted(set(idx)), dtype=np.int64) for gid, idx in members.items()}

    edge_set = set()
    for idx in groups.values():
        for a in range(idx.size):
            for b in range(a + 1, idx.size):
                edge_set.add((int(idx[a]), int(idx[b])))
    if edge_set:
        edges = np.array(sorted(edge_set), dtype=np.int64)
    else:
        edges = np.empty((0, 2), dtype=np.int64)

    degrees = np.zeros(j_count, dtype=np.int64)
    for j, k in edges:
        degrees[j] += 1
        degrees[k] += 1
    return OntologyGraph(n_vertices=j_count, edges=edges, degrees=degrees, groups=groups)


def laplacian(graph):
    """Normalized graph Laplacian: unit diagonal, -1/sqrt(d_j d_k) on edges."""
    j_count = graph.n_vertices
    lap = np.eye(j_count)
    if graph.n_edges:
        j = graph.edges[:, 0]
        k = graph.edges[:, 1]
        w = -1.0 / np.sqrt(graph.degrees[j] * graph.degrees[k])
        lap[j, k] = w
        lap[k, j] = w
    return lap


@dataclass(frozen=True)
class CorrelationStructure:
    """Correlation matrix of the graph prior plus its precision form.

    ``precision`` is the exact inverse of ``omega`` by construction
    (D^{1/2} (L + eps*I) D^{1/2}); ``precision_chol`` is its lower Cholesky
    factor.  ``epsilon = math.inf`` encodes the independence state, where
    every matrix here is the identity.
    """

    epsilon: float
    omega: np.ndarray
    scale_diag: np.ndarray  # diag((L + eps*I)^{-1}); ones in the inf state
    precision: np.ndarray
    precision_chol: np.ndarray

    @property
    def n_terms(self):
        return self.omega.shape[0]

    @property
    def is_independent(self):
        return math.isinf(self.epsilon)


def correlation_from_precision(lap, epsilon):
    """Standardize (L + eps*I)^{-1} into a correlation structure.

    Parameters
    ----------
    lap : (J, J) ndarray
        Normalized Laplacian from :func:`laplacian`.
    epsilon : float
        Positive diagonal shift, or ``math.inf`` for exact independence.

    Raises
    ------
    ValueError
        If epsilon is not positive.
    numpy.linalg.LinAlgError
        If the shifted precision cannot be factorized; the message carries
        a condition-number estimate.
    """
    j_count = lap.shape[0]
    if math.isinf(epsilon):
        eye = np.eye(j_count)
        return CorrelationStructure(
            epsilon=math.inf,
            omega=eye,
            scale_diag=np.ones(j_count),
            precision=eye.copy(),
            precision_chol=eye.copy(),
        )
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive or inf, got {epsilon!r}")

    shifted = lap + epsilon * np.eye(j_count)
    try:
        factor = cholesky(shifted, lower=True)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(shifted)
        raise np.linalg.LinAlgError(
            f"L + eps*I not factorizable at eps={epsilon} (cond~{cond:.3e})"
        ) from exc
    inv = cho_solve((factor, True), np.eye(j_count))
    scale = np.diag(inv).copy()
    root = np.sqrt(scale)
    omega = inv / np.outer(root, root)
    np.fill_diagonal(omega, 1.0)
    omega = 0.5 * (omega + omega.T)

    precision = shifted * np.outer(root, root)
    precision = 0.5 * (precision + precision.T)
    try:
        prec_chol = cholesky(precision, lower=True)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(precision)
        raise np.linalg.LinAlgError(
            f"scaled precision not factorizable at eps={epsilon} (cond~{cond:.3e})"
        ) from exc
    return CorrelationStructure(
        epsilon=float(epsilon),
        omega=omega,
        scale_diag=scale,
        precision=precision,
        precision_chol=prec_chol,
    )


def dump_matrices(corr, lap, omega_path, laplacian_path, delimiter=","):
    """Debug dump of L and the correlation matrix as delimited text."""
    np.savetxt(laplacian_path, lap, delimiter=delimiter)
    np.savetxt(omega_path, corr.omega, delimiter=delimiter)
