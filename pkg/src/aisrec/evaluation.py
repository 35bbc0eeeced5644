"""Leave-one-vote-out experiment loop and metric aggregation.

For every test user one vote is hidden, a neighbourhood is built from the
remaining votes and the hidden vote is predicted. The neighbourhood's full
recommendation list is also scored against the films the user has seen.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import statistics
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence, TextIO

import numpy as np

from .dataset import Dataset, UserProfile, reserve_vote, split_test_users
from .errors import ConfigMismatch, EmptyInput, InvalidParams, NoPrediction
from .immune import ImmuneParams, IndexedMatcher, PearsonMatcher
from .metrics import kendall_tau
from .predictor import predict, recommend, select_neighbors_ais, select_neighbors_sp
from .similarity import ProfileBlock, SimilarityParams

PREDICTORS = ("simple_pearson", "ais")

# per-user metric name -> attribute; order fixes the summary CSV columns
METRICS = (
    "abs_error",
    "n_recommendations",
    "overlap_size",
    "kendall_tau",
    "reviewers_examined",
    "neighborhood_size",
)

PER_USER_HEADER = (
    "user_id",
    "abs_error",
    "n_recommendations",
    "overlap_size",
    "kendall_tau",
    "reviewers_examined",
    "neighborhood_size",
    "fallback_used",
)


@dataclass(frozen=True)
class PredictorConfig:
    kind: str = "ais"
    k: int = 100  # simple_pearson neighbourhood size
    reviewer_budget: int | None = None  # simple_pearson reviewers drawn per user
    immune: ImmuneParams = field(default_factory=ImmuneParams)
    similarity: SimilarityParams = field(default_factory=SimilarityParams)
    filter_target: bool = True
    literal_denominator: bool = False

    def __post_init__(self):
        if self.kind not in PREDICTORS:
            raise InvalidParams(f"unknown predictor {self.kind!r}")
        if self.k < 1:
            raise InvalidParams("k must be >= 1")
        if self.reviewer_budget is not None and self.reviewer_budget < 0:
            raise InvalidParams("reviewer_budget must be nonnegative")

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class PerUserMetrics:
    user_id: int
    abs_error: float | None
    n_recommendations: int
    overlap_size: int
    kendall_tau: float | None
    reviewers_examined: int
    neighborhood_size: int
    fallback_used: bool


@dataclass(frozen=True)
class RunMetrics:
    seed: int
    fingerprint: str
    n_users: int
    means: dict
    stds: dict
    n_no_prediction: int
    n_missing_tau: int
    users: tuple = ()

    def __getitem__(self, metric):
        return self.means[metric]


def _user_seed(seed: int, user_id: int) -> int:
    return int(np.random.SeedSequence([seed, user_id]).generate_state(1, np.uint64)[0])


def evaluate_user(test: UserProfile, reviewers: Sequence[UserProfile], config: PredictorConfig, seed,
                  matcher_for=None, trace: list | None = None) -> PerUserMetrics:
    """Hide one vote, build a neighbourhood, predict it and score the recommendations.

    `matcher_for` maps the training profile to a correlation source; by
    default correlations are computed pairwise from the profiles.
    """
    train, (movie, actual) = reserve_vote(test, seed)
    if matcher_for is None:
        matcher = PearsonMatcher(train, config.similarity)
    else:
        matcher = matcher_for(train)
    target = movie if config.filter_target else None

    if config.kind == "simple_pearson":
        hood = select_neighbors_sp(train, reviewers, config.k, target, config.similarity,
                                   budget=config.reviewer_budget, matcher=matcher)
    else:
        hood = select_neighbors_ais(train, reviewers, config.immune, config.similarity, target,
                                    matcher=matcher, trace=trace)

    abs_error = None
    fallback = False
    try:
        p = predict(train, hood, movie, config.literal_denominator)
        abs_error = abs(actual - p.value)
        fallback = p.fallback
    except NoPrediction:
        pass

    recs = recommend(train, hood, config.literal_denominator)
    seen = [(m, test.votes[m], value) for m, value in recs if m in test.votes]
    tau = kendall_tau(seen) if len(seen) >= 2 else None
    return PerUserMetrics(test.user_id, abs_error, len(recs), len(seen), tau,
                          hood.reviewers_examined, len(hood), fallback)


def _mean_std(values):
    if not values:
        return math.nan, math.nan
    mean = math.fsum(values) / len(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def summarize(users: Sequence[PerUserMetrics], seed: int, fingerprint: str) -> RunMetrics:
    """Means and sample standard deviations over the users where each metric exists."""
    users = sorted(users, key=lambda u: u.user_id)
    means, stds = {}, {}
    for metric in METRICS:
        values = [getattr(u, metric) for u in users if getattr(u, metric) is not None]
        means[metric], stds[metric] = _mean_std([float(v) for v in values])
    return RunMetrics(
        seed=seed,
        fingerprint=fingerprint,
        n_users=len(users),
        means=means,
        stds=stds,
        n_no_prediction=sum(u.abs_error is None for u in users),
        n_missing_tau=sum(u.kendall_tau is None for u in users),
        users=tuple(users),
    )


class ReviewerPool:
    """A run's reviewer stream with its correlations precomputed.

    Reviewer-reviewer correlations do not depend on the test user, so they
    are computed once per run; each test user only needs one extra row.
    """

    def __init__(self, reviewers: Sequence[UserProfile], params: SimilarityParams):
        self.reviewers = list(reviewers)
        self.params = params
        self.block = ProfileBlock(self.reviewers)
        self.peer_r = self.block.correlate(params=params) if self.reviewers else np.empty((0, 0))

    def matcher(self, antigen: UserProfile) -> IndexedMatcher:
        antigen_r = self.block.correlate_profile(antigen, self.params) if self.reviewers else np.empty(0)
        return IndexedMatcher(antigen_r, self.peer_r, self.block.position)


def run_experiment(dataset: Dataset, n_test: int, max_reviewers: int, config: PredictorConfig, seed: int,
                   min_votes: int = 10, pool: ReviewerPool | None = None,
                   traces: dict | None = None) -> RunMetrics:
    """One run: split, evaluate every test user, aggregate.

    All test users share the run's reviewer permutation; each gets its own
    seed derived from the run seed and its user id. When `traces` is a dict
    it receives each user's concentration trace rows keyed by user id.
    """
    tests, reviewers = split_test_users(dataset, n_test, max_reviewers, seed, min_votes)
    if pool is None or pool.reviewers != reviewers:
        pool = ReviewerPool(reviewers, config.similarity)
    users = []
    for test in tests:
        trace = None if traces is None else traces.setdefault(test.user_id, [])
        users.append(evaluate_user(test, reviewers, config, _user_seed(seed, test.user_id),
                                   matcher_for=pool.matcher, trace=trace))
    return summarize(users, seed, config.fingerprint())


def run_many(dataset: Dataset, n_test: int, max_reviewers: int, config: PredictorConfig,
             seeds: Iterable[int], min_votes: int = 10) -> list[RunMetrics]:
    return [run_experiment(dataset, n_test, max_reviewers, config, s, min_votes) for s in seeds]


@dataclass(frozen=True)
class RunSummary:
    n_runs: int
    means: dict
    stds: dict
    std_defined: bool
    fingerprint: str


def aggregate_runs(runs: Sequence[RunMetrics]) -> RunSummary:
    """Unweighted mean and sample std of each run-level mean across runs."""
    if not runs:
        raise EmptyInput("no runs to aggregate")
    prints = {r.fingerprint for r in runs}
    if len(prints) > 1:
        raise ConfigMismatch(f"runs come from different configurations: {sorted(prints)}")
    means, stds = {}, {}
    for metric in METRICS:
        values = [r.means[metric] for r in runs if not math.isnan(r.means[metric])]
        means[metric], stds[metric] = _mean_std(values)
    return RunSummary(len(runs), means, stds, len(runs) > 1, runs[0].fingerprint)


def matched_sp_config(ais_runs: Sequence[RunMetrics], base: PredictorConfig) -> PredictorConfig:
    """Simple Pearson settings matching the AIS runs' neighbourhood size and reviewer count."""
    summary = aggregate_runs(ais_runs)
    k = max(1, round(summary.means["neighborhood_size"]))
    budget = max(1, round(summary.means["reviewers_examined"]))
    return replace(base, kind="simple_pearson", k=k, reviewer_budget=budget)


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def write_per_user(users: Iterable[PerUserMetrics], stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(PER_USER_HEADER)
    for u in sorted(users, key=lambda u: u.user_id):
        writer.writerow([_fmt(getattr(u, name)) for name in PER_USER_HEADER])


def read_per_user(stream: TextIO) -> list[dict]:
    """Rows of a per-user CSV as dicts; empty fields become None."""
    reader = csv.DictReader(stream)
    rows = []
    for row in reader:
        rows.append({k: (v if v != "" else None) for k, v in row.items()})
    return rows


def summary_header() -> list[str]:
    cols = ["run", "seed", "fingerprint", "n_users", "n_no_prediction", "n_missing_tau"]
    for metric in METRICS:
        cols += [f"mean_{metric}", f"std_{metric}"]
    return cols


def write_summary(runs: Sequence[RunMetrics], stream: TextIO, aggregate: bool = True):
    """One row per run, then an `aggregate` row across runs."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(summary_header())
    for i, run in enumerate(runs):
        row = [i, run.seed, run.fingerprint, run.n_users, run.n_no_prediction, run.n_missing_tau]
        for metric in METRICS:
            row += [_fmt(run.means[metric]), _fmt(run.stds[metric])]
        writer.writerow(row)
    if aggregate and runs:
        s = aggregate_runs(runs)
        row = ["aggregate", "", s.fingerprint,
               sum(r.n_users for r in runs),
               sum(r.n_no_prediction for r in runs),
               sum(r.n_missing_tau for r in runs)]
        for metric in METRICS:
            row += [_fmt(s.means[metric]), _fmt(s.stds[metric])]
        writer.writerow(row)


__all__ = [
    "METRICS",
    "PER_USER_HEADER",
    "PerUserMetrics",
    "PredictorConfig",
    "ReviewerPool",
    "RunMetrics",
    "RunSummary",
    "aggregate_runs",
    "evaluate_user",
    "matched_sp_config",
    "read_per_user",
    "run_experiment",
    "run_many",
    "summarize",
    "write_per_user",
    "write_summary",
]
