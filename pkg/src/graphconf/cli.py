"""Command-line interface.

Subcommands::

    graphconf gen          --config synth.json --out DATA
    graphconf score        --config run.json [--dataset DATA] --out SCORES [--oracle]
    graphconf calibrate    --config run.json [--scores SCORES] --out MODEL [--alpha A] [--method cp|scqr]
    graphconf predict      --config run.json [--dataset DATA] [--scores SCORES] [--model MODEL] --out SETS
    graphconf eval         [--config run.json] [--sets SETS] --out EVAL
    graphconf oracle-check --config run.json [--dataset DATA] --out REPORT

Paths left off the command line are taken from the ``paths`` object of the
run config. ``GRAPHCONF_THREADS`` caps the number of scoring threads.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import io
from .conformal import CalibrationRecord, calibrate_cp
from .errors import ConfigError, GraphConfError
from .evaluation import coverage_by_candidate_size, format_table, summarize
from .graph import apply_permutation
from .pipeline import (
    FEATURE_MAPS,
    TestItem,
    fit_scqr,
    score_dataset,
    sets_from_thresholds,
    split_seed,
)
from .scqr import ScqrModel, TrainingConfig, scqr_threshold
from .synth import SynthConfig, generate_dataset, substream
from .zgw import DistanceConfig, permutation_oracle, solve_fgw

log = logging.getLogger("graphconf")

EXIT_IO = 3
EXIT_CHECK_FAILED = 4

DESCENT_TOL = 1e-12
SANDWICH_TOL = 1e-10
INVARIANCE_TOL = 1e-12
ISO_SOLVER_TOL = 1e-8


class CheckFailed(GraphConfError):
    exit_code = EXIT_CHECK_FAILED


@dataclass
class RunConfig:
    distance: DistanceConfig = field(default_factory=DistanceConfig)
    alpha: float = 0.1
    method: str = "cp"
    feature: str = "candidate_size"
    scqr: TrainingConfig = field(default_factory=TrainingConfig)
    paths: Dict[str, str] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if self.method not in ("cp", "scqr"):
            raise ConfigError(f"method must be 'cp' or 'scqr', got {self.method!r}")
        if self.feature not in FEATURE_MAPS:
            raise ConfigError(f"feature must be one of {FEATURE_MAPS}, got {self.feature!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown run config field(s): {', '.join(unknown)}")
        d = dict(d)
        if "distance" in d:
            d["distance"] = DistanceConfig.from_dict(d["distance"])
        if "scqr" in d:
            s = dict(d["scqr"])
            bad = sorted(set(s) - {f.name for f in fields(TrainingConfig)})
            if bad:
                raise ConfigError(f"unknown scqr field(s): {', '.join(bad)}")
            d["scqr"] = TrainingConfig(**s)
        return cls(**d)


def _load_run_config(args) -> RunConfig:
    cfg = RunConfig.from_dict(io.load_json(args.config)) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "alpha", None) is not None:
        cfg.alpha = args.alpha
        cfg.__post_init__()
    if getattr(args, "method", None):
        cfg.method = args.method
    if getattr(args, "oracle", False):
        d = cfg.distance.to_dict()
        d["oracle_mode"] = True
        cfg.distance = DistanceConfig.from_dict(d)
    return cfg


def _path(args, cfg: RunConfig, name: str) -> Path:
    value = getattr(args, name, None) or cfg.paths.get(name)
    if not value:
        raise ConfigError(f"no {name} path: pass --{name} or set paths.{name} in the run config")
    return Path(value)


def _out(args, cfg: RunConfig, default_key: str) -> Path:
    value = args.out or cfg.paths.get(default_key)
    if not value:
        raise ConfigError(f"no output directory: pass --out or set paths.{default_key}")
    return io.ensure_dir(value)


def cmd_gen(args) -> int:
    raw = io.load_json(args.config)
    if "seed" not in raw:
        log.warning("synth config has no seed; using 0")
        raw = {**raw, "seed": 0}
    cfg = SynthConfig.from_dict(raw)
    if not args.out:
        raise ConfigError("gen needs --out")
    ds = generate_dataset(cfg)
    io.write_dataset(ds, args.out)
    sizes = [e.candidate_size for e in ds.examples]
    counts = {s: len(ds.split(s)) for s in ("train", "cal", "test")}
    print(f"wrote {len(ds.examples)} examples ({counts['train']} train, {counts['cal']} cal, "
          f"{counts['test']} test) and {len(ds.graphs)} graphs to {args.out}")
    if sizes:
        print(f"candidate library size: mean {np.mean(sizes):.2f}, median {np.median(sizes):.0f}, max {max(sizes)}")
    return 0


def cmd_score(args) -> int:
    cfg = _load_run_config(args)
    ds = io.read_dataset(_path(args, cfg, "dataset"))
    out = _out(args, cfg, "scores")
    scored = score_dataset(ds, cfg.distance, cfg.feature)
    io.write_records(out / "calibration.csv", scored.calibration)
    io.write_candidate_scores(
        out / "candidate_scores.csv",
        ((t.example_id, cid, s) for t in scored.test for cid, s in zip(t.candidate_ids, t.scores)),
    )
    test_records = [CalibrationRecord(t.truth_score, t.feature, len(t.candidate_ids), t.example_id)
                    for t in scored.test]
    io.write_records(out / "test_records.csv", test_records)
    io.save_json(out / "run_config.json", {"distance": cfg.distance.to_dict(), "feature": cfg.feature})
    print(f"scored {len(scored.calibration)} calibration and {len(scored.test)} test examples "
          f"({sum(len(t.candidate_ids) for t in scored.test)} candidate pairs) into {out}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_run_config(args)
    scores = _path(args, cfg, "scores")
    out = _out(args, cfg, "model")
    records = io.read_records(scores / "calibration.csv")
    if not records:
        raise ConfigError(f"{scores / 'calibration.csv'} has no calibration rows")
    if cfg.method == "cp":
        tau = calibrate_cp(records, cfg.alpha)
        model = {"method": "cp", "alpha": cfg.alpha, "threshold": tau if math.isfinite(tau) else "inf",
                 "n_calibration": len(records)}
        print(f"CP threshold {tau!r} from {len(records)} calibration scores (alpha={cfg.alpha})")
    else:
        m = fit_scqr(records, cfg.alpha, cfg.scqr, split_seed(cfg.seed))
        model = {"method": "scqr", **m.to_dict()}
        print(f"SCQR {m.regressor.kind} regressor, residual quantile {m.residual_quantile!r} (alpha={cfg.alpha})")
    io.save_json(out / "model.json", model)
    return 0


def _test_items(ds, scores_dir: Path) -> List[TestItem]:
    table = io.read_candidate_scores(scores_dir / "candidate_scores.csv")
    feats = {r.id: r.feature for r in io.read_records(scores_dir / "test_records.csv")}
    items = []
    for e in ds.split("test"):
        if e.id not in table:
            raise ConfigError(f"no candidate scores for test example {e.id}")
        row = table[e.id]
        items.append(TestItem(e.id, e.truth_id, list(e.candidate_ids),
                              np.array([row[c] for c in e.candidate_ids]), feats[e.id]))
    return items


def cmd_predict(args) -> int:
    cfg = _load_run_config(args)
    ds = io.read_dataset(_path(args, cfg, "dataset"))
    items = _test_items(ds, _path(args, cfg, "scores"))
    model = io.load_json(_path(args, cfg, "model") / "model.json")
    out = _out(args, cfg, "sets")
    if model.get("method") != cfg.method:
        raise ConfigError(f"model was calibrated with method {model.get('method')!r}, run config asks for {cfg.method!r}")
    if cfg.method == "cp":
        tau = float(model["threshold"])
        thresholds = [tau] * len(items)
    else:
        m = ScqrModel.from_dict(model)
        thresholds = [scqr_threshold(m, it.feature) for it in items]
    sets = sets_from_thresholds(items, thresholds)
    io.write_sets(out / "sets.csv", sets)
    print(f"wrote {len(sets)} prediction sets to {out / 'sets.csv'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    sets = io.read_sets(_path(args, cfg, "sets") / "sets.csv")
    out = _out(args, cfg, "eval")
    s = summarize(sets)
    label = cfg.method.upper()
    with open(out / "summary.csv", "w", encoding="utf-8", newline="\n") as fh:
        keys = list(s.as_dict())
        fh.write("method," + ",".join(keys) + "\n")
        fh.write(label + "," + ",".join("" if v is None else io.fmt_float(v) if isinstance(v, float) else str(v)
                                       for v in s.as_dict().values()) + "\n")
    table = format_table([(label, s)])
    (out / "summary.txt").write_text(table + "\n", encoding="utf-8")
    with open(out / "coverage_bins.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("bin_lo,bin_hi,coverage,count\n")
        for lo, hi, cov, cnt in coverage_by_candidate_size(sets):
            fh.write(f"{lo},{hi},{io.fmt_float(cov)},{cnt}\n")
    print(table)
    return 0


def cmd_oracle_check(args) -> int:
    cfg = _load_run_config(args)
    ds = io.read_dataset(_path(args, cfg, "dataset"))
    out = _out(args, cfg, "report")
    dist = cfg.distance
    rng = substream(cfg.seed, "oracle")
    checked = skipped = iso = 0
    worst = {"descent": 0.0, "sandwich": 0.0, "invariance": 0.0, "iso_solver": 0.0, "iso_oracle": 0.0}
    for e in ds.examples:
        g1, g2 = ds.graphs[e.prediction_id], ds.graphs[e.truth_id]
        if g1.n != g2.n or g1.n > dist.oracle_limit:
            skipped += 1
            continue
        checked += 1
        val, best = permutation_oracle(g1, g2, dist)
        plain = solve_fgw(g1, g2, dist)
        seeded = solve_fgw(g1, g2, dist, init=_perm_coupling(best))
        for r in (plain, seeded):
            steps = np.diff(r.history)
            worst["descent"] = max(worst["descent"], float(steps.max(initial=0.0)))
        worst["sandwich"] = max(worst["sandwich"], seeded.value - val)
        relabeled = apply_permutation(g2, rng.permutation(g2.n))
        worst["invariance"] = max(worst["invariance"], abs(permutation_oracle(g1, relabeled, dist)[0] - val))
        if val == 0.0:
            iso += 1
            worst["iso_solver"] = max(worst["iso_solver"], plain.value)
    report = {"pairs_checked": checked, "skipped_too_large": skipped, "isomorphic_pairs": iso,
              "max_descent_violation": worst["descent"], "max_sandwich_excess": worst["sandwich"],
              "max_invariance_gap": worst["invariance"], "max_solver_value_on_isomorphic": worst["iso_solver"]}
    ok = (worst["descent"] <= DESCENT_TOL and worst["sandwich"] <= SANDWICH_TOL
          and worst["invariance"] <= INVARIANCE_TOL)
    report["passed"] = ok
    io.save_json(out / "oracle_check.json", report)
    print(f"{checked} pairs checked, {skipped} skipped (size above oracle limit or unequal sizes)")
    if checked:
        print(f"max descent violation {worst['descent']:.3e}, max sandwich excess {worst['sandwich']:.3e}, "
              f"max invariance gap {worst['invariance']:.3e}; {iso} isomorphic pairs, "
              f"max solver value on them {worst['iso_solver']:.3e}")
    if not ok:
        raise CheckFailed("oracle check found violations; see oracle_check.json")
    return 0


def _perm_coupling(perm: np.ndarray) -> np.ndarray:
    n = perm.shape[0]
    pi = np.zeros((n, n))
    pi[np.arange(n), perm] = 1.0 / n
    return pi


COMMANDS = {
    "gen": cmd_gen,
    "score": cmd_score,
    "calibrate": cmd_calibrate,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "oracle-check": cmd_oracle_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphconf", description="Conformal prediction sets for graph-valued outputs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name not in ("eval",))
        p.add_argument("--out")
        if name != "gen":
            p.add_argument("--alpha", type=float)
            p.add_argument("--method", choices=("cp", "scqr"))
            p.add_argument("--oracle", action="store_true", help="score with the permutation oracle when possible")
            p.add_argument("--dataset")
            p.add_argument("--scores")
            p.add_argument("--model")
            p.add_argument("--sets")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except GraphConfError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
