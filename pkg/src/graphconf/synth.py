"""Coloring-style synthetic corpus with a simulated noisy graph predictor.

Ground-truth graphs are connected Erdos-Renyi graphs whose nodes carry one of
``n_colors`` one-hot colors. The predictor returns a relabeled copy of the
truth with probability ``predictor_accuracy`` and otherwise a relabeled copy
with flipped edges and recolored nodes. Candidate libraries hold every
corpus graph with the same color histogram as the truth.

All randomness is drawn from named substreams of a single seed, so the same
config always yields the same corpus.
"""

from __future__ import annotations

import zlib
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, GenerationFailure, TruthMissing
from .graph import Graph, apply_permutation, color_histogram, is_connected

MAX_REJECTIONS = 1000
SPLITS = ("train", "cal", "test")


@dataclass(frozen=True)
class SynthConfig:
    """Corpus and noise settings.

    With ``heteroscedastic`` on, the predictor's error probability and noise
    rates are multiplied by ``(median_size / library_size) ** hetero_strength``
    (clipped to ``[1/4, 4]``), so inputs with large candidate libraries are
    predicted more reliably than inputs with small ones.
    """

    n_nodes_range: Tuple[int, int] = (3, 6)
    n_colors: int = 4
    edge_prob: float = 0.4
    n_train: int = 0
    n_cal: int = 200
    n_test: int = 500
    predictor_accuracy: float = 0.82
    edge_flip_rate: float = 0.1
    color_swap_rate: float = 0.1
    seed: int = 0
    library_cap: int = 256
    heteroscedastic: bool = False
    hetero_strength: float = 1.0

    def __post_init__(self):
        lo, hi = (int(v) for v in self.n_nodes_range)
        object.__setattr__(self, "n_nodes_range", (lo, hi))
        if lo < 2 or hi < lo:
            raise ConfigError(f"n_nodes_range must satisfy 2 <= min <= max, got {self.n_nodes_range!r}")
        if self.n_colors < 1:
            raise ConfigError(f"n_colors must be positive, got {self.n_colors!r}")
        for name in ("edge_prob", "predictor_accuracy", "edge_flip_rate", "color_swap_rate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {v!r}")
        for name in ("n_train", "n_cal", "n_test"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)!r}")
        if self.library_cap < 1:
            raise ConfigError(f"library_cap must be positive, got {self.library_cap!r}")
        if self.hetero_strength < 0:
            raise ConfigError(f"hetero_strength must be nonnegative, got {self.hetero_strength!r}")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_nodes_range"] = list(self.n_nodes_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown synth config field(s): {', '.join(unknown)}")
        d = dict(d)
        if "n_nodes_range" in d:
            r = d["n_nodes_range"]
            if not (isinstance(r, (list, tuple)) and len(r) == 2):
                raise ConfigError(f"n_nodes_range must be a [min, max] pair, got {r!r}")
            d["n_nodes_range"] = tuple(r)
        return cls(**d)


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named purpose (``gen``, ``predictor``, ``split`` ...)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(zlib.crc32(name.encode()),)))


def _one_hot(colors: np.ndarray, n_colors: int) -> np.ndarray:
    return np.eye(n_colors)[colors]


def _components(adjacency: np.ndarray) -> List[List[int]]:
    n = adjacency.shape[0]
    label = [-1] * n
    comps = []
    for s in range(n):
        if label[s] >= 0:
            continue
        label[s] = len(comps)
        comp, stack = [s], [s]
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adjacency[i]):
                if label[j] < 0:
                    label[j] = len(comps)
                    comp.append(int(j))
                    stack.append(int(j))
        comps.append(sorted(comp))
    return comps


def gen_graph(rng: np.random.Generator, cfg: SynthConfig) -> Graph:
    """Connected Erdos-Renyi graph with uniform random one-hot colors.

    Connectivity is obtained by rejection; after ``MAX_REJECTIONS`` failed
    draws the last draw is repaired by chaining its components together.
    """
    lo, hi = cfg.n_nodes_range
    n = int(rng.integers(lo, hi + 1))
    iu = np.triu_indices(n, 1)
    for _ in range(MAX_REJECTIONS):
        A = np.zeros((n, n))
        A[iu] = rng.random(iu[0].size) < cfg.edge_prob
        A = A + A.T
        if is_connected(A):
            break
    else:
        comps = _components(A)
        for c1, c2 in zip(comps[:-1], comps[1:]):
            A[c1[0], c2[0]] = A[c2[0], c1[0]] = 1.0
        if not is_connected(A):
            raise GenerationFailure("spanning-tree repair left the graph disconnected")
    colors = rng.integers(0, cfg.n_colors, n)
    return Graph(A, _one_hot(colors, cfg.n_colors))


def simulate_predictor(truth: Graph, rng: np.random.Generator, cfg: SynthConfig, noise_scale: float = 1.0) -> Graph:
    """Noisy, randomly relabeled copy of ``truth``.

    ``noise_scale`` multiplies the error probability and both noise rates
    (each capped at 1).
    """
    n = truth.n
    p_err = min(1.0, (1.0 - cfg.predictor_accuracy) * noise_scale)
    A = np.array(truth.adjacency)
    F = np.array(truth.features)
    if rng.random() < p_err:
        flip_p = min(1.0, cfg.edge_flip_rate * noise_scale)
        swap_p = min(1.0, cfg.color_swap_rate * noise_scale)
        iu = np.triu_indices(n, 1)
        flips = rng.random(iu[0].size) < flip_p
        upper = A[iu]
        upper[flips] = 1.0 - upper[flips]
        A = np.zeros((n, n))
        A[iu] = upper
        A = A + A.T
        c = F.shape[1]
        colors = F.argmax(axis=1)
        swaps = rng.random(n) < swap_p
        shifts = rng.integers(1, c, n) if c > 1 else np.zeros(n, dtype=np.int64)
        colors = np.where(swaps, (colors + shifts) % c, colors)
        F = _one_hot(colors, c)
    return apply_permutation(Graph(A, F), rng.permutation(n))


def build_candidate_library(pool: Sequence[Tuple[Hashable, Graph]], truth_id: Hashable, cap: int = 256,
                            n_colors: Optional[int] = None) -> List[Hashable]:
    """Ids of pool graphs sharing the truth's color histogram; truth first, then pool order, at most ``cap``."""
    graphs = dict(pool)
    if truth_id not in graphs:
        raise TruthMissing(f"truth {truth_id!r} is not in the pool")
    key = tuple(color_histogram(graphs[truth_id], n_colors))
    out = [truth_id]
    for gid, g in pool:
        if len(out) >= cap:
            break
        if gid != truth_id and g.n == graphs[truth_id].n and tuple(color_histogram(g, n_colors)) == key:
            out.append(gid)
    return out


@dataclass
class DatasetExample:
    id: str
    split: str
    truth_id: str
    prediction_id: str
    candidate_ids: List[str]

    @property
    def truth_in_candidates(self) -> bool:
        return self.truth_id in self.candidate_ids

    @property
    def candidate_size(self) -> int:
        return len(self.candidate_ids)


@dataclass
class Dataset:
    graphs: Dict[str, Graph]
    examples: List[DatasetExample]
    config: Optional[SynthConfig] = None

    def split(self, name: str) -> List[DatasetExample]:
        return [e for e in self.examples if e.split == name]


def _hetero_scale(size: int, ref: float, strength: float) -> float:
    return float(np.clip((ref / size) ** strength, 0.25, 4.0))


def generate_dataset(cfg: SynthConfig) -> Dataset:
    """Generate truths, candidate libraries and predictions for every split.

    The pool for candidate libraries is the full corpus of ground-truth
    graphs, which treats calibration and test examples symmetrically.
    """
    gen = substream(cfg.seed, "gen")
    pred_rng = substream(cfg.seed, "predictor")
    total = cfg.n_train + cfg.n_cal + cfg.n_test
    truths = [(f"g{i:05d}", gen_graph(gen, cfg)) for i in range(total)]

    groups = defaultdict(list)
    for gid, g in truths:
        groups[tuple(color_histogram(g, cfg.n_colors))].append(gid)
    libraries = []
    for gid, g in truths:
        same = groups[tuple(color_histogram(g, cfg.n_colors))]
        libraries.append(([gid] + [o for o in same if o != gid])[: cfg.library_cap])

    ref = float(np.median([len(lib) for lib in libraries])) if libraries else 1.0
    graphs = dict(truths)
    examples = []
    splits = ["train"] * cfg.n_train + ["cal"] * cfg.n_cal + ["test"] * cfg.n_test
    for i, ((gid, g), lib, split) in enumerate(zip(truths, libraries, splits)):
        scale = _hetero_scale(len(lib), ref, cfg.hetero_strength) if cfg.heteroscedastic else 1.0
        pid = f"p{i:05d}"
        graphs[pid] = simulate_predictor(g, pred_rng, cfg, scale)
        examples.append(DatasetExample(f"x{i:05d}", split, gid, pid, lib))
    return Dataset(graphs, examples, cfg)
