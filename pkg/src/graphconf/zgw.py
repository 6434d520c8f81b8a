"""Fused (network) Gromov-Wasserstein discrepancies between attributed graphs.

One objective covers the whole family. For a coupling ``pi`` between two
graphs it is::

    (1 - beta - gamma) * sum_ik |F1_i - F2_k|^2 pi_ik
    + gamma * sum_ijkl |X1_ij - X2_kl|^2 pi_ik pi_jl
    + beta  * sum_ijkl (C1_ij - C2_kl)^2 pi_ik pi_jl

with ``C`` the (transformed) structure matrices and ``X`` optional edge
features. ``gamma = 0`` is FGW and ``beta = 1, gamma = 0`` is plain GW.
Values are squared objectives with no 1/2 prefactor and no root; any fixed
monotone rescaling gives the same conformal sets.

The minimum over couplings is nonconvex. :func:`solve_fgw` runs conditional
gradient from a chosen start and returns an upper bound on it;
:func:`permutation_oracle` enumerates permutation couplings exactly for
small equal-size graphs.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, MarginalMismatch, MissingEdgeFeatures, SizeMismatch, TooLarge
from .graph import (
    CostTransform,
    Graph,
    StructureKind,
    TransformKind,
    apply_transform,
    laplacian,
    structure_cost,
    sym_norm_laplacian,
)
from .ot import MARGINAL_TOL, Coupling, all_permutations, solve_exact_ot


class InitKind(str, Enum):
    IDENTITY = "identity"
    UNIFORM = "uniform"
    FD = "fd"
    LFD = "lfd"
    LFD_SYM = "lfd_sym"

    @classmethod
    def parse(cls, value) -> "InitKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        if key == "id":
            return cls.IDENTITY
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown init kind {value!r}") from None


@dataclass(frozen=True)
class DistanceConfig:
    """Selects one member of the distance family and the solver settings."""

    structure: StructureKind = StructureKind.ADJACENCY
    transform: CostTransform = field(default_factory=CostTransform)
    beta: float = 0.5
    gamma: float = 0.0
    q_exponent: int = 2
    p_exponent: int = 2
    init: InitKind = InitKind.FD
    max_iters: int = 200
    tol: float = 1e-9
    oracle_mode: bool = False
    oracle_limit: int = 7

    def __post_init__(self):
        object.__setattr__(self, "structure", StructureKind.parse(self.structure))
        object.__setattr__(self, "init", InitKind.parse(self.init))
        if not (0.0 <= self.beta <= 1.0):
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta!r}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma!r}")
        if self.beta + self.gamma > 1.0 + 1e-12:
            raise ConfigError(f"beta + gamma must not exceed 1, got {self.beta + self.gamma!r}")
        if self.q_exponent != 2 or self.p_exponent != 2:
            raise ConfigError("only q = p = 2 (squared losses) is supported")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol!r}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        if self.oracle_limit < 1:
            raise ConfigError(f"oracle_limit must be positive, got {self.oracle_limit!r}")

    @classmethod
    def gw(cls, **kw) -> "DistanceConfig":
        return cls(beta=1.0, gamma=0.0, **kw)

    @classmethod
    def fgw(cls, beta: float = 0.5, **kw) -> "DistanceConfig":
        return cls(beta=beta, gamma=0.0, **kw)

    @classmethod
    def fngw(cls, beta: float = 0.33, gamma: float = 0.33, **kw) -> "DistanceConfig":
        return cls(beta=beta, gamma=gamma, **kw)

    @property
    def feature_weight(self) -> float:
        return 1.0 - self.beta - self.gamma

    def to_dict(self) -> dict:
        t = self.transform
        return {
            "structure": self.structure.value,
            "transform": {
                "kind": t.kind.value,
                "k": int(t.k),
                "lambda": float(t.lam),
                "order": int(t.order),
                "include_identity": bool(t.include_identity),
            },
            "feature_diffusion": bool(t.feature_diffusion),
            "beta": float(self.beta),
            "gamma": float(self.gamma),
            "init": self.init.value,
            "max_iters": int(self.max_iters),
            "tol": float(self.tol),
            "oracle_mode": bool(self.oracle_mode),
            "oracle_limit": int(self.oracle_limit),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DistanceConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)} | {"transform", "feature_diffusion"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown distance config field(s): {', '.join(unknown)}")
        t = dict(d.pop("transform", None) or {})
        bad = sorted(set(t) - {"kind", "k", "lambda", "order", "include_identity"})
        if bad:
            raise ConfigError(f"unknown transform field(s): {', '.join(bad)}")
        transform = CostTransform(
            kind=t.get("kind", TransformKind.NONE),
            k=t.get("k", 1),
            lam=t.get("lambda", 1.0),
            order=t.get("order", 5),
            include_identity=t.get("include_identity", True),
            feature_diffusion=bool(d.pop("feature_diffusion", False)),
        )
        return cls(transform=transform, **d)


@dataclass
class SolveResult:
    value: float
    coupling: Coupling
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)
    stop_reason: str = ""


def graph_costs(g: Graph, cfg: DistanceConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Transformed structure matrix and (possibly diffused) features of one graph."""
    return apply_transform(structure_cost(g, cfg.structure), g.features, cfg.transform)


def feature_cost(F1: np.ndarray, F2: np.ndarray) -> np.ndarray:
    if F1.shape[1] != F2.shape[1]:
        raise SizeMismatch(f"feature dimensions differ: {F1.shape[1]} vs {F2.shape[1]}")
    return ((F1[:, None, :] - F2[None, :, :]) ** 2).sum(axis=-1)


class _Problem:
    """Everything the objective needs for one ordered pair of graphs."""

    def __init__(self, g1: Graph, g2: Graph, cfg: DistanceConfig):
        if cfg.gamma > 0 and not (g1.has_edge_features and g2.has_edge_features):
            raise MissingEdgeFeatures("gamma > 0 requires edge features on both graphs")
        C1, F1 = graph_costs(g1, cfg)
        C2, F2 = graph_costs(g2, cfg)
        self.a, self.b = g1.weights, g2.weights
        self.w_feat = cfg.feature_weight
        self.M = feature_cost(F1, F2)
        # (weight, C1, C2) triples of squared-loss quadratic terms
        self.quad = [(cfg.beta, C1, C2)]
        if cfg.gamma > 0:
            X1, X2 = g1.edge_features, g2.edge_features
            if X1.shape[2] != X2.shape[2]:
                raise SizeMismatch(f"edge feature dimensions differ: {X1.shape[2]} vs {X2.shape[2]}")
            for c in range(X1.shape[2]):
                self.quad.append((cfg.gamma, X1[:, :, c], X2[:, :, c]))
        self.quad = [(w, A, B, A * A, B * B) for w, A, B in self.quad]

    def objective(self, pi: np.ndarray) -> float:
        p, q = pi.sum(axis=1), pi.sum(axis=0)
        val = self.w_feat * np.sum(self.M * pi)
        for w, C1, C2, C1sq, C2sq in self.quad:
            term = p @ C1sq @ p + q @ C2sq @ q - 2.0 * np.sum(pi * (C1 @ pi @ C2.T))
            val = val + w * term
        return float(val)

    def gradient(self, pi: np.ndarray) -> np.ndarray:
        p, q = pi.sum(axis=1), pi.sum(axis=0)
        grad = self.w_feat * self.M
        for w, C1, C2, C1sq, C2sq in self.quad:
            grad = grad + 2.0 * w * ((C1sq @ p)[:, None] + (C2sq @ q)[None, :] - 2.0 * (C1 @ pi @ C2.T))
        return grad

    def curvature(self, d: np.ndarray) -> float:
        """Coefficient of ``t^2`` in ``objective(pi + t d)`` for ``d`` with zero marginals."""
        return float(sum(-2.0 * w * np.sum(d * (C1 @ d @ C2.T)) for w, C1, C2, _, _ in self.quad))


def _as_plan(pi) -> np.ndarray:
    return np.asarray(pi.pi if isinstance(pi, Coupling) else pi, dtype=float)


def _check_marginals(pi: np.ndarray, a: np.ndarray, b: np.ndarray):
    if pi.shape != (a.shape[0], b.shape[0]):
        raise MarginalMismatch(f"coupling has shape {pi.shape}, expected {(a.shape[0], b.shape[0])}")
    if np.any(pi < -MARGINAL_TOL) or not (
        np.allclose(pi.sum(axis=1), a, rtol=0, atol=MARGINAL_TOL)
        and np.allclose(pi.sum(axis=0), b, rtol=0, atol=MARGINAL_TOL)
    ):
        raise MarginalMismatch("coupling marginals do not match the graph weights")


def fgw_objective(g1: Graph, g2: Graph, pi, cfg: DistanceConfig) -> float:
    """Objective value at a given coupling, clamped at zero against round-off."""
    plan = _as_plan(pi)
    prob = _Problem(g1, g2, cfg)
    _check_marginals(plan, prob.a, prob.b)
    return max(0.0, prob.objective(plan))


def gw_objective(g1: Graph, g2: Graph, pi, structure=StructureKind.ADJACENCY,
                 transform: Optional[CostTransform] = None) -> float:
    """Pure structure term ``sum (C1_ij - C2_kl)^2 pi_ik pi_jl``, computed on its own."""
    plan = _as_plan(pi)
    transform = transform or CostTransform()
    C1, _ = apply_transform(structure_cost(g1, structure), g1.features, transform)
    C2, _ = apply_transform(structure_cost(g2, structure), g2.features, transform)
    _check_marginals(plan, g1.weights, g2.weights)
    p, q = plan.sum(axis=1), plan.sum(axis=0)
    val = p @ (C1 * C1) @ p + q @ (C2 * C2) @ q - 2.0 * np.sum(plan * (C1 @ plan @ C2.T))
    return max(0.0, float(val))


def _augmented_features(g: Graph, kind: InitKind) -> np.ndarray:
    A = np.array(g.adjacency)
    if kind is InitKind.FD:
        S = A
    elif kind is InitKind.LFD:
        S = laplacian(A)
    else:
        S = sym_norm_laplacian(A)
    return np.hstack([g.features, S @ g.features])


def initial_coupling(g1: Graph, g2: Graph, kind, cfg: Optional[DistanceConfig] = None) -> Coupling:
    """Starting plan for the solver.

    ``identity`` needs equal sizes and otherwise falls back to the uniform
    plan. The feature-diffusion starts solve an exact transport problem
    between the augmented node features ``(F, S F)``, with ``S`` the
    adjacency (``fd``), Laplacian (``lfd``) or normalized Laplacian
    (``lfd_sym``) of each graph.
    """
    kind = InitKind.parse(kind)
    a, b = g1.weights, g2.weights
    if kind is InitKind.IDENTITY and g1.n == g2.n:
        return Coupling(np.eye(g1.n) / g1.n, a, b)
    if kind in (InitKind.IDENTITY, InitKind.UNIFORM):
        return Coupling(np.outer(a, b), a, b)
    cost = feature_cost(_augmented_features(g1, kind), _augmented_features(g2, kind))
    coupling, _ = solve_exact_ot(cost, a, b)
    return coupling


def _line_search(slope: float, curv: float) -> float:
    """Minimizer over [0, 1] of ``slope * t + curv * t^2``."""
    if curv > 0:
        return float(min(1.0, max(0.0, -slope / (2.0 * curv))))
    return 1.0 if curv + slope < 0 else 0.0


def solve_fgw(g1: Graph, g2: Graph, cfg: DistanceConfig, init=None) -> SolveResult:
    """Conditional-gradient (Frank-Wolfe) descent on the objective.

    Each step solves an exact transport problem on the gradient and takes the
    exact minimizer of the quadratic along the segment to that vertex. The
    recorded objective never increases: a step whose recomputed value
    exceeds the current one is rejected and the solver stops. ``stop_reason``
    records which rule ended the loop.

    Parameters
    ----------
    init : Coupling or array-like, optional
        Explicit starting plan; overrides ``cfg.init``.
    """
    prob = _Problem(g1, g2, cfg)
    if init is None:
        pi = initial_coupling(g1, g2, cfg.init, cfg).pi.copy()
    else:
        pi = _as_plan(init).copy()
        _check_marginals(pi, prob.a, prob.b)

    f = prob.objective(pi)
    history = [f]
    reason = "max_iters"
    it = 0
    while it < cfg.max_iters:
        it += 1
        grad = prob.gradient(pi)
        vertex, _ = solve_exact_ot(grad, prob.a, prob.b)
        d = vertex.pi - pi
        slope = float(np.sum(grad * d))
        if slope >= 0:
            reason = "stationary"
            break
        t = _line_search(slope, prob.curvature(d))
        if t <= 0:
            reason = "stationary"
            break
        new_pi = pi + t * d
        f_new = prob.objective(new_pi)
        if f_new > f:
            reason = "rejected_step"
            break
        delta = f - f_new
        pi, f = new_pi, f_new
        history.append(f)
        if delta <= cfg.tol * abs(f):
            reason = "tolerance"
            break

    coupling = Coupling(pi, prob.a, prob.b)
    return SolveResult(max(0.0, f), coupling, it, reason != "max_iters", history, reason)


def permutation_oracle(g1: Graph, g2: Graph, cfg: DistanceConfig) -> Tuple[float, np.ndarray]:
    """Exact minimum of the objective over couplings ``P / n``, ``P`` a permutation matrix.

    Returns the value and the lexicographically first minimizing ``sigma``,
    meaning node ``i`` of ``g1`` is matched to node ``sigma[i]`` of ``g2``.
    If ``g2 = apply_permutation(g1, p)`` then ``sigma`` is the inverse of ``p``.
    """
    if g1.n != g2.n:
        raise SizeMismatch(f"oracle needs equal sizes, got {g1.n} and {g2.n}")
    n = g1.n
    if n > cfg.oracle_limit:
        raise TooLarge(f"{n} nodes exceeds the oracle limit of {cfg.oracle_limit}")
    prob = _Problem(g1, g2, cfg)
    perms = all_permutations(n)
    rows = np.arange(n)
    vals = prob.w_feat * (prob.M[rows, perms].sum(axis=1) / n)
    rr, cc = perms[:, :, None], perms[:, None, :]
    for w, C1, C2, _, _ in prob.quad:
        diff = C1[None, :, :] - C2[rr, cc]
        vals = vals + w * ((diff * diff).sum(axis=(1, 2)) / (n * n))
    best = int(np.argmin(vals))
    return max(0.0, float(vals[best])), perms[best].copy()


def score(prediction: Graph, candidate: Graph, cfg: DistanceConfig) -> float:
    """Nonconformity score of ``candidate`` against ``prediction``."""
    if cfg.oracle_mode and prediction.n == candidate.n and prediction.n <= cfg.oracle_limit:
        return permutation_oracle(prediction, candidate, cfg)[0]
    return solve_fgw(prediction, candidate, cfg).value


def _thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("GRAPHCONF_THREADS", "1")))
    except ValueError:
        return 1


def score_many(prediction: Graph, candidates: Sequence[Graph], cfg: DistanceConfig,
               threads: Optional[int] = None) -> np.ndarray:
    """Scores of several candidates, in candidate order.

    ``threads`` defaults to the ``GRAPHCONF_THREADS`` environment variable
    (1 when unset). Each call is deterministic, so the result does not
    depend on the thread count.
    """
    threads = _thread_cap() if threads is None else max(1, int(threads))
    if threads == 1 or len(candidates) < 2:
        return np.array([score(prediction, c, cfg) for c in candidates], dtype=float)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        out = list(pool.map(lambda c: score(prediction, c, cfg), candidates))
    return np.array(out, dtype=float)
