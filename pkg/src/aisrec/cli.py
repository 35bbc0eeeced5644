"""Command-line front end: ``generate``, ``eval``, ``sweep`` and ``stats``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import re
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from .dataset import GeneratorParams, generate_synthetic, parse_votes, write_votes
from .errors import AisRecError, UnknownMetric, UnpairedUsers
from .evaluation import (
    METRICS,
    PER_USER_HEADER,
    PredictorConfig,
    aggregate_runs,
    read_per_user,
    run_experiment,
    write_per_user,
    write_summary,
)
from .immune import ImmuneParams, write_trace
from .metrics import wilcoxon_signed_rank
from .similarity import SimilarityParams

DEFAULTS = {
    # dataset
    "data": None,
    "scale": "unit_grid",
    "n_users": 2000,
    "n_movies": 500,
    "n_genres": 8,
    "votes_min": 50,
    "votes_max": 300,
    "affinity_spread": 0.25,
    "noise_spread": 0.1,
    "data_seed": 7,
    # predictor
    "predictor": "ais",
    "k": 100,
    "reviewer_budget": None,
    "k1": 0.2,
    "k2": 0.0,
    "k3": 0.1,
    "pool_capacity": 100,
    "init_concentration": 10.0,
    "max_concentration": 100.0,
    "min_concentration": 0.01,
    "antigen_concentration": 10.0,
    "stability_window": 10,
    "maturation_cap": 10_000,
    "overlap_penalty": 100,
    "no_overlap_default": 0.0,
    "zero_variance_default": 0.0,
    "target_filter": True,
    "literal_denominator": False,
    # protocol
    "n_test": 100,
    "max_reviewers": 15_000,
    "min_votes": 10,
    "n_runs": 5,
    "seed": 0,
    "trace": False,
    "out": "results",
    "k1_grid": None,
    "k2_grid": None,
}

PER_USER_PATTERN = re.compile(r"per_user_(\d+)\.csv$")


def atomic_write(path: Path, text: str):
    """Write via a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def _add_generator_flags(p):
    g = p.add_argument_group("synthetic data")
    g.add_argument("--n-users", type=int)
    g.add_argument("--n-movies", type=int)
    g.add_argument("--n-genres", type=int)
    g.add_argument("--votes-min", type=int)
    g.add_argument("--votes-max", type=int)
    g.add_argument("--affinity-spread", type=float)
    g.add_argument("--noise-spread", type=float)
    g.add_argument("--data-seed", type=int, help="generator seed")


def _add_experiment_flags(p):
    p.add_argument("--config", help="JSON file of settings; command-line flags take precedence")
    p.add_argument("--data", help="vote CSV (user_id,movie_id,score); synthetic data is generated when omitted")
    p.add_argument("--scale", choices=["unit_grid", "zero_to_five"])
    _add_generator_flags(p)

    a = p.add_argument_group("predictor")
    a.add_argument("--predictor", choices=["ais", "simple_pearson"])
    a.add_argument("--k", type=int, help="simple_pearson neighbourhood size")
    a.add_argument("--reviewer-budget", type=int, help="simple_pearson reviewers examined per user")
    for name in ("k1", "k2", "k3", "init_concentration", "max_concentration", "min_concentration",
                 "antigen_concentration", "no_overlap_default", "zero_variance_default"):
        a.add_argument("--" + name.replace("_", "-"), type=float)
    for name in ("pool_capacity", "stability_window", "maturation_cap", "overlap_penalty"):
        a.add_argument("--" + name.replace("_", "-"), type=int)
    a.add_argument("--no-target-filter", dest="target_filter", action="store_const", const=False,
                   help="let the immune network admit reviewers who did not rate the hidden film")
    a.add_argument("--literal-denominator", action="store_const", const=True,
                   help="divide by the signed weight sum instead of the absolute sum")

    r = p.add_argument_group("protocol")
    r.add_argument("--n-test", type=int)
    r.add_argument("--max-reviewers", type=int)
    r.add_argument("--min-votes", type=int)
    r.add_argument("--n-runs", type=int)
    r.add_argument("--seed", type=int, help="base seed; run i uses seed + i")
    r.add_argument("--trace", action="store_const", const=True, help="write immune concentration traces")
    r.add_argument("--out", help="output directory")


def resolve(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise AisRecError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(loaded)
    cfg.update({k: v for k, v in vars(args).items() if v is not None and k in DEFAULTS})
    return cfg


def predictor_config(cfg: dict) -> PredictorConfig:
    immune = ImmuneParams(
        k1=cfg["k1"], k2=cfg["k2"], k3=cfg["k3"],
        pool_capacity=cfg["pool_capacity"],
        init_concentration=cfg["init_concentration"],
        max_concentration=cfg["max_concentration"],
        min_concentration=cfg["min_concentration"],
        antigen_concentration=cfg["antigen_concentration"],
        stability_window=cfg["stability_window"],
        maturation_cap=cfg["maturation_cap"],
    )
    similarity = SimilarityParams(cfg["no_overlap_default"], cfg["zero_variance_default"], cfg["overlap_penalty"])
    return PredictorConfig(cfg["predictor"], cfg["k"], cfg["reviewer_budget"], immune, similarity,
                           cfg["target_filter"], cfg["literal_denominator"])


def generator_params(cfg: dict) -> GeneratorParams:
    return GeneratorParams(cfg["n_users"], cfg["n_movies"], cfg["n_genres"], (cfg["votes_min"], cfg["votes_max"]),
                           cfg["affinity_spread"], cfg["noise_spread"], cfg["data_seed"])


def load_dataset(cfg: dict):
    if cfg["data"]:
        with open(cfg["data"], encoding="utf-8", newline="") as fh:
            return parse_votes(fh, cfg["scale"])
    return generate_synthetic(generator_params(cfg))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_generate(args):
    cfg = resolve(args)
    params = generator_params(cfg)
    text = write_votes(generate_synthetic(params))
    atomic_write(Path(args.out), text)
    print(f"wrote {args.out}")


def run_eval(cfg: dict, dataset, config: PredictorConfig, out: Path, quiet=False):
    """Run `n_runs` seeded runs and write runs.csv plus one per-user file per run."""
    runs = []
    files = {}
    for i in range(cfg["n_runs"]):
        seed = cfg["seed"] + i
        traces = {} if cfg["trace"] else None
        run = run_experiment(dataset, cfg["n_test"], cfg["max_reviewers"], config, seed, cfg["min_votes"],
                             traces=traces)
        runs.append(run)
        buf = io.StringIO()
        write_per_user(run.users, buf)
        files[out / f"per_user_{seed}.csv"] = buf.getvalue()
        for uid, rows in (traces or {}).items():
            buf = io.StringIO()
            write_trace(rows, buf)
            files[out / "traces" / f"seed{seed}_user{uid}.csv"] = buf.getvalue()
    buf = io.StringIO()
    write_summary(runs, buf)
    files[out / "runs.csv"] = buf.getvalue()
    for path, text in files.items():
        atomic_write(path, text)
    if not quiet:
        summary = aggregate_runs(runs)
        print(f"{config.kind} fingerprint={summary.fingerprint} runs={summary.n_runs}")
        for metric in METRICS:
            print(f"  {metric:<20} mean={summary.means[metric]:.6g} std={summary.stds[metric]:.6g}")
    return runs


def cmd_eval(args):
    cfg = resolve(args)
    if cfg["n_runs"] < 1:
        raise AisRecError("n_runs must be >= 1")
    config = predictor_config(cfg)
    dataset = load_dataset(cfg)
    run_eval(cfg, dataset, config, Path(cfg["out"]))


def _grid(values, flag):
    if not values:
        raise AisRecError(f"{flag} needs at least one value")
    return [float(v) for v in values]


def cmd_sweep(args):
    cfg = resolve(args)
    k1s = _grid(cfg["k1_grid"] or [cfg["k1"]], "--k1-grid")
    k2s = _grid(cfg["k2_grid"] or [cfg["k2"]], "--k2-grid")
    base = predictor_config(cfg)
    dataset = load_dataset(cfg)
    out = Path(cfg["out"])

    long_rows, wide_rows = [], []
    for k1 in k1s:
        for k2 in k2s:
            config = replace(base, immune=replace(base.immune, k1=k1, k2=k2))
            runs = run_eval(cfg, dataset, config, out / f"k1_{k1:g}_k2_{k2:g}", quiet=True)
            s = aggregate_runs(runs)
            wide = [k1, k2, s.n_runs]
            for metric in METRICS:
                long_rows.append([k1, k2, metric, s.means[metric], s.stds[metric]])
                wide += [s.means[metric], s.stds[metric]]
            wide_rows.append(wide)
            print(f"k1={k1:g} k2={k2:g} " + " ".join(f"{m}={s.means[m]:.4g}" for m in METRICS))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k1", "k2", "metric", "mean", "std"])
    w.writerows([[repr(a), repr(b), m, repr(mu), repr(sd)] for a, b, m, mu, sd in long_rows])
    atomic_write(out / "sweep.csv", buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k1", "k2", "n_runs"] + [f"{p}_{m}" for m in METRICS for p in ("mean", "std")])
    w.writerows([[repr(v) if isinstance(v, float) else v for v in row] for row in wide_rows])
    atomic_write(out / "sweep_wide.csv", buf.getvalue())


def _per_user_files(path: Path) -> dict:
    """{key: file} where key is the run seed for directories, None for a single file."""
    if path.is_dir():
        found = {int(m.group(1)): f for f in sorted(path.iterdir()) if (m := PER_USER_PATTERN.search(f.name))}
        if not found:
            raise AisRecError(f"no per_user_<seed>.csv files in {path}")
        return found
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    return {None: path}


def paired_metric(path_a, path_b, metric):
    """Values of `metric` paired by (run seed, user id); rows missing the metric on either side are skipped."""
    numeric = [h for h in PER_USER_HEADER if h not in ("user_id", "fallback_used")]
    if metric not in numeric:
        raise UnknownMetric(f"unknown metric {metric!r}; choose from {', '.join(numeric)}")
    files_a, files_b = _per_user_files(Path(path_a)), _per_user_files(Path(path_b))
    if set(files_a) != set(files_b):
        raise UnpairedUsers("the two inputs cover different runs")
    a, b, skipped = [], [], 0
    for key in sorted(files_a, key=lambda k: -1 if k is None else k):
        rows = []
        for f in (files_a[key], files_b[key]):
            with open(f, encoding="utf-8", newline="") as fh:
                data = read_per_user(fh)
            if data and metric not in data[0]:
                raise UnknownMetric(f"metric {metric!r} not in header of {f}")
            rows.append({r["user_id"]: r[metric] for r in data})
        ra, rb = rows
        if set(ra) != set(rb):
            raise UnpairedUsers(f"user ids differ between {files_a[key]} and {files_b[key]}")
        for uid in sorted(ra, key=int):
            if ra[uid] is None or rb[uid] is None:
                skipped += 1
                continue
            a.append(float(ra[uid]))
            b.append(float(rb[uid]))
    return a, b, skipped


def cmd_stats(args):
    a, b, skipped = paired_metric(args.a, args.b, args.metric)
    if not a:
        raise AisRecError("no user has the metric on both sides")
    result = wilcoxon_signed_rank(a, b)
    verdict = "significant" if result.significant_at_95 else "not significant"
    if result.degenerate:
        verdict += " (all differences zero)"
    print(f"metric={args.metric} pairs={len(a)} skipped={skipped}")
    print(f"W={result.statistic:g} n_effective={result.n_effective} p={result.p_value:.6g} "
          f"{'exact' if result.exact else 'normal-approx'}")
    print(f"verdict: {verdict} at 95%")
    return result


def build_parser():
    parser = argparse.ArgumentParser(prog="aisrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic vote file")
    g.add_argument("--config")
    _add_generator_flags(g)
    g.add_argument("--out", required=True, help="output CSV path")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("eval", help="run the leave-one-out experiment")
    _add_experiment_flags(e)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="evaluate a grid of stimulation/suppression rates")
    _add_experiment_flags(s)
    s.add_argument("--k1-grid", nargs="+", type=float)
    s.add_argument("--k2-grid", nargs="+", type=float)
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("stats", help="Wilcoxon signed-rank test between two per-user result sets")
    t.add_argument("a", help="per-user CSV or an eval output directory")
    t.add_argument("b", help="per-user CSV or an eval output directory")
    t.add_argument("--metric", default="abs_error")
    t.set_defaults(func=cmd_stats)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (AisRecError, OSError, ValueError, KeyError) as exc:
        msg = str(exc).strip() or type(exc).__name__
        print(f"aisrec: error: {msg.splitlines()[0]}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
