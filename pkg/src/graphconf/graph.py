"""Attributed graphs, node relabelings and structure matrices.

A :class:`Graph` is the concrete labeled representative of an attributed
graph: a symmetric structure matrix, a node-feature matrix, optional edge
features and the uniform node measure. Everything downstream compares
graphs only through quantities that are invariant (or equivariant) under
:func:`apply_permutation`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .errors import (
    AsymmetricStructure,
    ConfigError,
    DimensionMismatch,
    LengthMismatch,
    NonBinaryAdjacency,
    NonUniformWeights,
    NotOneHot,
)

N_MAX = 64


def _frozen(x, ndim: int, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Graph:
    """Finite undirected attributed graph with a uniform node measure.

    Parameters
    ----------
    adjacency : array-like of shape (n, n)
        Symmetric structure matrix with zero diagonal. Stored as floats.
    features : array-like of shape (n, d)
        Node feature matrix.
    edge_features : array-like of shape (n, n, m), optional
        Edge feature tensor, symmetric in its first two indices.
    weights : array-like of shape (n,), optional
        Node measure. Defaults to uniform; anything else is rejected by
        :func:`validate_graph`.

    Arrays are copied and made read-only on construction.
    """

    adjacency: np.ndarray
    features: np.ndarray
    edge_features: Optional[np.ndarray] = None
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        adj = _frozen(self.adjacency, 2, "adjacency")
        feats = np.array(self.features, dtype=float)
        if feats.ndim == 1:
            feats = feats[:, None]
        feats = _frozen(feats, 2, "features")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", feats)
        if self.edge_features is not None:
            object.__setattr__(self, "edge_features", _frozen(self.edge_features, 3, "edge_features"))
        n = adj.shape[0]
        if self.weights is None:
            w = np.full(n, 1.0 / n) if n > 0 else np.zeros(0)
        else:
            w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def has_edge_features(self) -> bool:
        return self.edge_features is not None

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        if (self.edge_features is None) != (other.edge_features is None):
            return False
        same = (
            self.adjacency.shape == other.adjacency.shape
            and self.features.shape == other.features.shape
            and np.array_equal(self.adjacency, other.adjacency)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.weights, other.weights)
        )
        if same and self.edge_features is not None:
            same = np.array_equal(self.edge_features, other.edge_features)
        return bool(same)

    __hash__ = None


def validate_graph(g: Graph, n_max: int = N_MAX) -> Graph:
    """Return ``g`` unchanged if every representation invariant holds."""
    n = g.n
    if g.adjacency.shape != (n, n) or n < 1:
        raise DimensionMismatch(f"adjacency must be a nonempty square matrix, got {g.adjacency.shape}")
    if n > n_max:
        raise DimensionMismatch(f"graph has {n} nodes, above the limit of {n_max}")
    if g.features.shape[0] != n:
        raise DimensionMismatch(f"features have {g.features.shape[0]} rows for a {n}-node graph")
    if not (np.all(np.isfinite(g.adjacency)) and np.all(np.isfinite(g.features))):
        raise DimensionMismatch("adjacency and features must be finite")
    if not np.array_equal(g.adjacency, g.adjacency.T):
        raise AsymmetricStructure("adjacency is not symmetric")
    if np.any(np.diag(g.adjacency) != 0):
        raise AsymmetricStructure("adjacency has a nonzero diagonal")
    if g.edge_features is not None:
        x = g.edge_features
        if x.shape[:2] != (n, n):
            raise DimensionMismatch(f"edge_features have shape {x.shape} for a {n}-node graph")
        if not np.array_equal(x, x.transpose(1, 0, 2)):
            raise AsymmetricStructure("edge_features are not symmetric in the node indices")
    w = g.weights
    if w.shape != (n,):
        raise NonUniformWeights(f"weights have shape {w.shape}, expected ({n},)")
    if abs(w.sum() - 1.0) > 1e-12 or np.any(np.abs(w - 1.0 / n) > 1e-12):
        raise NonUniformWeights("node weights must be uniform 1/n")
    return g


def as_permutation(p: Sequence[int], n: Optional[int] = None) -> np.ndarray:
    """Check that ``p`` is a bijection of ``{0, ..., n-1}`` and return it as an int array."""
    arr = np.asarray(p, dtype=np.int64).reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise LengthMismatch(f"permutation has length {arr.shape[0]}, graph has {n} nodes")
    if not np.array_equal(np.sort(arr), np.arange(arr.shape[0])):
        raise LengthMismatch(f"{list(arr)} is not a permutation")
    return arr


def invert_permutation(p) -> np.ndarray:
    return np.argsort(as_permutation(p), kind="stable")


def permutation_matrix(p) -> np.ndarray:
    """Matrix ``P`` with ``P[i, p[i]] = 1``, so that ``P @ A @ P.T == A[p][:, p]``."""
    p = as_permutation(p)
    P = np.zeros((p.shape[0], p.shape[0]))
    P[np.arange(p.shape[0]), p] = 1.0
    return P


def apply_permutation(g: Graph, p) -> Graph:
    """Relabel nodes: returns ``(P A P^T, P F, P X P^T)`` with the same uniform weights.

    Node ``i`` of the result is node ``p[i]`` of ``g``. Only rows and
    columns move, so the round trip through the inverse is bit-exact.
    """
    p = as_permutation(p, g.n)
    ef = None
    if g.edge_features is not None:
        ef = g.edge_features[p][:, p]
    return Graph(g.adjacency[p][:, p], g.features[p], ef)


class StructureKind(str, Enum):
    ADJACENCY = "adjacency"
    LAPLACIAN = "laplacian"
    SYM_NORM_LAPLACIAN = "sym_laplacian"
    SHORTEST_PATH = "shortest_path"

    @classmethod
    def parse(cls, value) -> "StructureKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "a": cls.ADJACENCY,
            "adj": cls.ADJACENCY,
            "l": cls.LAPLACIAN,
            "lsym": cls.SYM_NORM_LAPLACIAN,
            "l_sym": cls.SYM_NORM_LAPLACIAN,
            "sym_norm_laplacian": cls.SYM_NORM_LAPLACIAN,
            "sp": cls.SHORTEST_PATH,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown structure kind {value!r}") from None


def laplacian(adjacency: np.ndarray) -> np.ndarray:
    return np.diag(adjacency.sum(axis=1)) - adjacency


def sym_norm_laplacian(adjacency: np.ndarray) -> np.ndarray:
    """``I - D^{-1/2} A D^{-1/2}``; isolated nodes keep a unit diagonal and zero off-diagonal."""
    deg = adjacency.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    return np.eye(adjacency.shape[0]) - inv_sqrt[:, None] * adjacency * inv_sqrt[None, :]


def hop_distances(adjacency: np.ndarray) -> np.ndarray:
    """Unweighted shortest-path lengths; unreachable pairs get the sentinel ``n``."""
    n = adjacency.shape[0]
    if not np.all((adjacency == 0) | (adjacency == 1)):
        raise NonBinaryAdjacency("shortest-path structure needs a binary adjacency matrix")
    d = shortest_path(adjacency, method="D", directed=False, unweighted=True)
    d[~np.isfinite(d)] = n
    return d


def structure_cost(g: Graph, kind) -> np.ndarray:
    kind = StructureKind.parse(kind)
    A = np.array(g.adjacency)
    if kind is StructureKind.ADJACENCY:
        return A
    if kind is StructureKind.LAPLACIAN:
        return laplacian(A)
    if kind is StructureKind.SYM_NORM_LAPLACIAN:
        return sym_norm_laplacian(A)
    return hop_distances(A)


class TransformKind(str, Enum):
    NONE = "none"
    POWER = "power"
    TRUNCATED_EXP = "exp"


@dataclass(frozen=True)
class CostTransform:
    """Transform applied to a structure matrix before comparison.

    ``include_identity`` only matters for the truncated exponential: when
    False the series starts at the first power, which drops the identity
    term of the exponential.
    """

    kind: TransformKind = TransformKind.NONE
    k: int = 1
    lam: float = 1.0
    order: int = 5
    include_identity: bool = True
    feature_diffusion: bool = False

    def __post_init__(self):
        kind = self.kind
        if not isinstance(kind, TransformKind):
            try:
                kind = TransformKind(str(kind).lower())
            except ValueError:
                raise ConfigError(f"unknown transform kind {self.kind!r}") from None
            object.__setattr__(self, "kind", kind)
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError(f"transform.k must be a positive integer, got {self.k!r}")
        if int(self.order) != self.order or self.order < 1:
            raise ConfigError(f"transform.order must be a positive integer, got {self.order!r}")
        if not self.lam > 0:
            raise ConfigError(f"transform.lambda must be positive, got {self.lam!r}")


def truncated_exp(M: np.ndarray, lam: float, order: int, include_identity: bool = True) -> np.ndarray:
    """Partial sum of ``exp(-lam M)`` up to ``M^order``."""
    n = M.shape[0]
    term = np.eye(n)
    out = np.eye(n) if include_identity else np.zeros((n, n))
    for i in range(1, order + 1):
        term = term @ M * (-lam / i)
        out = out + term
    return out


def apply_transform(M: np.ndarray, F: np.ndarray, t: CostTransform) -> Tuple[np.ndarray, np.ndarray]:
    M = np.asarray(M, dtype=float)
    F = np.asarray(F, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"cost matrix must be square, got {M.shape}")
    if F.shape[0] != M.shape[0]:
        raise DimensionMismatch(f"{F.shape[0]} feature rows for a {M.shape[0]}x{M.shape[0]} cost")
    if t.kind is TransformKind.POWER:
        M = np.linalg.matrix_power(M, int(t.k))
    elif t.kind is TransformKind.TRUNCATED_EXP:
        M = truncated_exp(M, t.lam, int(t.order), t.include_identity)
    if t.feature_diffusion:
        F = M @ F
    return M, F


def color_histogram(g: Graph, n_colors: Optional[int] = None) -> np.ndarray:
    """Count nodes per color for one-hot node features."""
    F = g.features
    c = F.shape[1] if n_colors is None else n_colors
    if F.shape[1] != c:
        raise DimensionMismatch(f"features have {F.shape[1]} columns, palette has {c}")
    one_hot = np.all((F == 0) | (F == 1), axis=1) & (F.sum(axis=1) == 1)
    if not np.all(one_hot):
        bad = int(np.flatnonzero(~one_hot)[0])
        raise NotOneHot(f"feature row {bad} is not a standard basis vector: {F[bad].tolist()}")
    return F.sum(axis=0).astype(np.int64)


def is_connected(adjacency: np.ndarray) -> bool:
    n = adjacency.shape[0]
    if n <= 1:
        return True
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for i in frontier:
            for j in np.flatnonzero(adjacency[i]):
                if not seen[j]:
                    seen[j] = True
                    nxt.append(int(j))
        frontier = nxt
    return bool(seen.all())

