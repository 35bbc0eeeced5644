"""Neighbourhood selection (Simple Pearson top-k or immune network) and
correlation-weighted vote prediction."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .dataset import UserProfile
from .errors import InvalidParams, NoPrediction
from .immune import ImmuneNetwork, ImmuneParams, PearsonMatcher, mature, run_selection
from .similarity import SimilarityParams

# |sum of weights| below this falls back to the user's mean vote
WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True)
class Member:
    profile: UserProfile
    correlation: float
    weight: float


@dataclass(frozen=True)
class Neighborhood:
    members: tuple[Member, ...]
    source: str
    reviewers_examined: int
    saturated: bool | None = None

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True)
class Prediction:
    movie_id: int
    value: float
    n_contributors: int
    fallback: bool


def select_neighbors_sp(train: UserProfile, reviewers: Iterable[UserProfile], k: int, target_movie=None,
                        params: SimilarityParams = SimilarityParams(), budget: int | None = None,
                        matcher=None) -> Neighborhood:
    """Top-k reviewers by absolute correlation among those who rated `target_movie`.

    At most `budget` reviewers are drawn from the stream. Equal |r| keeps the
    earlier reviewer.
    """
    if k < 1:
        raise InvalidParams("k must be >= 1")
    matcher = matcher if matcher is not None else PearsonMatcher(train, params)
    stream = reviewers if budget is None else itertools.islice(reviewers, budget)
    examined = 0
    scored = []
    for pos, profile in enumerate(stream):
        examined += 1
        if target_movie is not None and target_movie not in profile.votes:
            continue
        scored.append((pos, profile, matcher.antigen_correlation(profile)))
    best = heapq.nsmallest(k, scored, key=lambda t: (-abs(t[2]), t[0]))
    members = tuple(Member(p, r, r) for _, p, r in best)
    return Neighborhood(members, "simple_pearson", examined)


def select_neighbors_ais(train: UserProfile, reviewers: Iterable[UserProfile],
                         iparams: ImmuneParams = ImmuneParams(), sparams: SimilarityParams = SimilarityParams(),
                         target_movie=None, matcher=None, trace: list | None = None) -> Neighborhood:
    """Grow an immune network on `train`, mature it and weight each survivor by r * x."""
    net = ImmuneNetwork(train, iparams, sparams, matcher=matcher, trace=trace)
    admit = None if target_movie is None else (lambda p: target_movie in p.votes)
    run_selection(net, reviewers, admit)
    if not len(net):
        return Neighborhood((), "ais", net.reviewers_examined)
    mature(net)
    members = []
    for profile, r, x in zip(net.profiles, net.correlations.values(), net.concentrations.values()):
        members.append(Member(profile, r, r * x))
    return Neighborhood(tuple(members), "ais", net.reviewers_examined, net.saturated)


def predict(train: UserProfile, hood: Neighborhood, movie: int, literal_denominator: bool = False) -> Prediction:
    """Mean-offset weighted average of the contributors' deviations.

    The denominator is the sum of absolute weights; `literal_denominator`
    switches to the plain signed sum.
    """
    num = 0.0
    den = 0.0
    n = 0
    for member in hood.members:
        vote = member.profile.votes.get(movie)
        if vote is None:
            continue
        n += 1
        num += member.weight * (vote - member.profile.mean)
        den += member.weight if literal_denominator else abs(member.weight)
    if n == 0:
        raise NoPrediction(f"no neighbour rated movie {movie}")
    if abs(den) < WEIGHT_FLOOR:
        return Prediction(movie, min(1.0, max(0.0, train.mean)), n, True)
    value = train.mean + num / den
    return Prediction(movie, min(1.0, max(0.0, value)), n, False)


def recommend(train: UserProfile, hood: Neighborhood, literal_denominator: bool = False) -> list[tuple[int, float]]:
    """Score every film any neighbour rated; best first, ties by movie id."""
    if not hood.members:
        return []
    movies = sorted({m for member in hood.members for m in member.profile.votes})
    col = {m: i for i, m in enumerate(movies)}
    dev = np.zeros((len(hood.members), len(movies)))
    rated = np.zeros_like(dev)
    for row, member in enumerate(hood.members):
        p = member.profile
        cols = [col[m] for m in p.votes]
        dev[row, cols] = [s - p.mean for s in p.votes.values()]
        rated[row, cols] = 1.0
    w = np.array([member.weight for member in hood.members])
    num = w @ dev
    den = w @ rated if literal_denominator else np.abs(w) @ rated
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(np.abs(den) < WEIGHT_FLOOR, train.mean, train.mean + num / den)
    values = np.clip(values, 0.0, 1.0)
    return sorted(zip(movies, values.tolist()), key=lambda t: (-t[1], t[0]))
