"""Readers and writers for graph corpora, datasets, score tables and prediction sets.

Files are JSON-lines, JSON and CSV only. Floats are written with ``repr`` so
that values round-trip exactly and reruns produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .conformal import CalibrationRecord, PredictionSet
from .errors import ConfigError, DimensionMismatch
from .graph import Graph, validate_graph
from .synth import Dataset, DatasetExample, SynthConfig


def _num(x: float):
    x = float(x)
    return int(x) if x.is_integer() and abs(x) < 2 ** 53 else x


def _nested(arr: np.ndarray):
    if arr.ndim == 1:
        return [_num(v) for v in arr]
    return [_nested(a) for a in arr]


def graph_to_json(gid: str, g: Graph) -> dict:
    d = {"id": gid, "n": g.n, "adjacency": _nested(g.adjacency), "features": _nested(g.features)}
    if g.edge_features is not None:
        d["edge_features"] = _nested(g.edge_features)
    return d


def graph_from_json(d: dict) -> Graph:
    try:
        g = Graph(d["adjacency"], d["features"], d.get("edge_features"))
    except KeyError as e:
        raise DimensionMismatch(f"graph {d.get('id', '?')!r} is missing field {e.args[0]!r}") from None
    if int(d.get("n", g.n)) != g.n:
        raise DimensionMismatch(f"graph {d.get('id')!r} declares n={d['n']} but has {g.n} nodes")
    return validate_graph(g)


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=False)


def write_jsonl(path, rows: Iterable[dict]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(_dump(row) + "\n")


def read_jsonl(path) -> List[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}:{lineno}:{e.colno}: {e.msg}") from None
    return out


def write_graphs(path, graphs: Dict[str, Graph]):
    write_jsonl(path, (graph_to_json(gid, g) for gid, g in graphs.items()))


def read_graphs(path) -> Dict[str, Graph]:
    return {d["id"]: graph_from_json(d) for d in read_jsonl(path)}


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None


def save_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_dataset(ds: Dataset, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_graphs(directory / "graphs.jsonl", ds.graphs)
    write_jsonl(
        directory / "examples.jsonl",
        (
            {"id": e.id, "split": e.split, "truth_id": e.truth_id, "prediction_id": e.prediction_id,
             "candidate_ids": e.candidate_ids}
            for e in ds.examples
        ),
    )
    if ds.config is not None:
        save_json(directory / "config.json", ds.config.to_dict())


def read_dataset(directory) -> Dataset:
    directory = Path(directory)
    graphs = read_graphs(directory / "graphs.jsonl")
    examples = [
        DatasetExample(d["id"], d.get("split", "test"), d["truth_id"], d["prediction_id"], list(d["candidate_ids"]))
        for d in read_jsonl(directory / "examples.jsonl")
    ]
    missing = {gid for e in examples for gid in [e.truth_id, e.prediction_id, *e.candidate_ids]} - graphs.keys()
    if missing:
        raise ConfigError(f"examples reference unknown graph ids: {', '.join(sorted(missing)[:5])}")
    cfg = None
    if (directory / "config.json").exists():
        cfg = SynthConfig.from_dict(load_json(directory / "config.json"))
    return Dataset(graphs, examples, cfg)


def fmt_float(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_records(path, records: Sequence[CalibrationRecord]):
    d = max((len(r.feature) for r in records), default=0)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(["id", "score", "candidate_size", *[f"feature_{i}" for i in range(d)]])
        for r in records:
            w.writerow([r.id, fmt_float(r.score), r.candidate_size, *[fmt_float(v) for v in r.feature]])


def read_records(path) -> List[CalibrationRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        feats = [float(row[k]) for k in sorted((k for k in row if k.startswith("feature_")), key=lambda k: int(k[8:]))]
        out.append(CalibrationRecord(float(row["score"]), tuple(feats), int(row["candidate_size"]), row["id"]))
    return out


def write_candidate_scores(path, rows: Iterable[tuple]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(["example_id", "candidate_id", "score"])
        for ex, cid, s in rows:
            w.writerow([ex, cid, fmt_float(s)])


def read_candidate_scores(path) -> Dict[str, Dict[str, float]]:
    out: Dict[str, Dict[str, float]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["example_id"], {})[row["candidate_id"]] = float(row["score"])
    return out


SET_HEADER = ["example_id", "threshold", "set_size", "candidate_size", "contains_truth", "member_ids"]


def write_sets(path, sets: Sequence[PredictionSet]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(SET_HEADER)
        for s in sets:
            flag = "" if s.contains_truth is None else str(int(bool(s.contains_truth)))
            w.writerow([s.example_id, fmt_float(s.threshold), s.size, s.candidate_size, flag, ";".join(map(str, s.members))])


def read_sets(path) -> List[PredictionSet]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            members = [m for m in row["member_ids"].split(";") if m]
            flag = row["contains_truth"]
            out.append(PredictionSet(float(row["threshold"]), members, int(row["candidate_size"]),
                                     None if flag == "" else flag == "1", row["example_id"]))
    return out


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
