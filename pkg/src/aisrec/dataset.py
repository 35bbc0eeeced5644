"""Vote data types, the CSV vote format, a synthetic generator and the
leave-one-out split helpers."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping, TextIO

import numpy as np

from .errors import (
    DuplicateVote,
    InvalidParams,
    MalformedLine,
    NotEnoughUsers,
    OffGridScore,
    ProfileTooSmall,
)

GRID_STEPS = 5
GRID = tuple(k / GRID_STEPS for k in range(GRID_STEPS + 1))
HEADER = ("user_id", "movie_id", "score")
SCALES = ("unit_grid", "zero_to_five")

# off-grid detection slack, in grid steps
_GRID_SLACK = 1e-9


def snap_to_grid(value: float) -> float:
    """Clamp to [0, 1] and round half-up to the nearest multiple of 0.2."""
    value = min(1.0, max(0.0, value))
    return math.floor(value * GRID_STEPS + 0.5) / GRID_STEPS


def grid_value(score: float) -> float:
    """Return `score` as an exact grid value, or raise OffGridScore."""
    steps = score * GRID_STEPS
    k = math.floor(steps + 0.5)
    if not 0 <= k <= GRID_STEPS or abs(steps - k) > _GRID_SLACK:
        raise OffGridScore(f"score {score!r} is not on the vote grid")
    return k / GRID_STEPS


@dataclass(frozen=True, eq=False)
class UserProfile:
    """A user's sparse votes, movie id -> score on the unit grid.

    Used both as the active user (antigen) and as a candidate reviewer
    (antibody). Profiles are immutable; the mean vote is cached.
    """

    user_id: int
    votes: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "votes", MappingProxyType(dict(self.votes)))

    def __len__(self):
        return len(self.votes)

    def __contains__(self, movie_id):
        return movie_id in self.votes

    def __eq__(self, other):
        if not isinstance(other, UserProfile):
            return NotImplemented
        return self.user_id == other.user_id and dict(self.votes) == dict(other.votes)

    def __hash__(self):
        return hash(self.user_id)

    def __repr__(self):
        return f"UserProfile(user_id={self.user_id}, n_votes={len(self.votes)})"

    @cached_property
    def mean(self) -> float:
        """Average vote over every film the user rated."""
        if not self.votes:
            return math.nan
        return math.fsum(self.votes.values()) / len(self.votes)

    def without(self, movie_id: int) -> UserProfile:
        votes = dict(self.votes)
        del votes[movie_id]
        return UserProfile(self.user_id, votes)


class Dataset:
    """An immutable collection of user profiles with unique user ids."""

    def __init__(self, profiles: Iterable[UserProfile] = ()):
        profiles = tuple(sorted(profiles, key=lambda p: p.user_id))
        ids = [p.user_id for p in profiles]
        if len(set(ids)) != len(ids):
            raise InvalidParams("duplicate user ids in dataset")
        self._profiles = profiles
        self._by_id = {p.user_id: p for p in profiles}

    @property
    def profiles(self) -> tuple[UserProfile, ...]:
        return self._profiles

    @cached_property
    def movie_ids(self) -> frozenset[int]:
        return frozenset(m for p in self._profiles for m in p.votes)

    @property
    def n_votes(self) -> int:
        return sum(len(p) for p in self._profiles)

    def __len__(self):
        return len(self._profiles)

    def __iter__(self):
        return iter(self._profiles)

    def __getitem__(self, user_id: int) -> UserProfile:
        return self._by_id[user_id]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self._profiles == other._profiles

    def __repr__(self):
        return f"Dataset(n_users={len(self)}, n_movies={len(self.movie_ids)}, n_votes={self.n_votes})"


# --------------------------------------------------------------------------
# CSV vote files
# --------------------------------------------------------------------------


def _parse_id(text, line_no, name):
    text = text.strip()
    if not text.isdigit():
        raise MalformedLine(line_no, f"{name} {text!r} is not a nonnegative integer")
    return int(text)


def parse_votes(stream: TextIO | str, scale: str = "unit_grid") -> Dataset:
    """Read a `user_id,movie_id,score` CSV into a Dataset.

    `scale` is ``"unit_grid"`` when scores are already in {0, 0.2, ..., 1}
    or ``"zero_to_five"`` for integer votes that are divided by five.
    """
    if scale not in SCALES:
        raise InvalidParams(f"unknown scale {scale!r}")
    if isinstance(stream, str):
        stream = io.StringIO(stream)

    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != HEADER:
        raise MalformedLine(1, f"expected header {','.join(HEADER)}")

    votes: dict[int, dict[int, float]] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise MalformedLine(line_no, f"expected 3 fields, got {len(row)}")
        user_id = _parse_id(row[0], line_no, "user_id")
        movie_id = _parse_id(row[1], line_no, "movie_id")
        raw = row[2].strip()
        if scale == "zero_to_five":
            if not raw.isdigit():
                raise MalformedLine(line_no, f"score {raw!r} is not an integer 0-5")
            value = int(raw) / GRID_STEPS
        else:
            try:
                value = float(raw)
            except ValueError:
                raise MalformedLine(line_no, f"score {raw!r} is not a number") from None
            if not math.isfinite(value):
                raise MalformedLine(line_no, f"score {raw!r} is not finite")
        try:
            value = grid_value(value)
        except OffGridScore as exc:
            raise OffGridScore(f"line {line_no}: {exc}") from None
        user_votes = votes.setdefault(user_id, {})
        if movie_id in user_votes:
            raise DuplicateVote(f"line {line_no}: user {user_id} already voted on movie {movie_id}")
        user_votes[movie_id] = value

    return Dataset(UserProfile(uid, v) for uid, v in votes.items())


def write_votes(dataset: Dataset, stream: TextIO | None = None) -> str:
    """Serialise to the unit-grid CSV format, sorted by (user_id, movie_id).

    Returns the text; also writes it to `stream` when one is given.
    """
    lines = [",".join(HEADER)]
    for profile in dataset.profiles:
        for movie_id in sorted(profile.votes):
            lines.append(f"{profile.user_id},{movie_id},{profile.votes[movie_id]!r}")
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text


# --------------------------------------------------------------------------
# Synthetic data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorParams:
    n_users: int = 2000
    n_movies: int = 500
    n_genres: int = 8
    votes_per_user: tuple[int, int] = (20, 100)
    affinity_spread: float = 0.25
    noise_spread: float = 0.1
    seed: int = 0

    def validate(self):
        lo, hi = self.votes_per_user
        if self.n_users < 0 or self.n_movies < 1:
            raise InvalidParams("n_users must be >= 0 and n_movies >= 1")
        if self.n_genres < 1:
            raise InvalidParams("n_genres must be >= 1")
        if not 1 <= lo <= hi <= self.n_movies:
            raise InvalidParams(
                f"votes_per_user range {self.votes_per_user} must lie within [1, {self.n_movies}]"
            )
        if self.affinity_spread < 0 or self.noise_spread < 0:
            raise InvalidParams("spreads must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise InvalidParams("seed must be a 64-bit unsigned integer")


def generate_synthetic(params: GeneratorParams) -> Dataset:
    """Draw a genre-structured rating dataset.

    Every movie belongs to one genre. Each user has a normally distributed
    affinity per genre (standard deviation `affinity_spread`); a vote is
    ``0.5 + affinity[genre] + noise`` clamped and snapped to the grid. Users
    whose affinities point the same way end up positively correlated.
    """
    params.validate()
    rng = np.random.default_rng(params.seed)
    genre_of = rng.integers(params.n_genres, size=params.n_movies)
    lo, hi = params.votes_per_user

    profiles = []
    for user_id in range(params.n_users):
        affinity = rng.normal(0.0, params.affinity_spread, size=params.n_genres)
        n_votes = int(rng.integers(lo, hi + 1))
        movies = np.sort(rng.choice(params.n_movies, size=n_votes, replace=False))
        noise = rng.normal(0.0, params.noise_spread, size=n_votes)
        raw = 0.5 + affinity[genre_of[movies]] + noise
        profiles.append(
            UserProfile(user_id, {int(m): snap_to_grid(float(s)) for m, s in zip(movies, raw)})
        )
    return Dataset(profiles)


# --------------------------------------------------------------------------
# Leave-one-out protocol helpers
# --------------------------------------------------------------------------


def split_test_users(dataset: Dataset, n_test: int, max_reviewers: int, seed, min_votes: int = 10):
    """Draw `n_test` test users and a shuffled reviewer list from the rest.

    Test users are sampled without replacement among profiles with at least
    `min_votes` votes. Reviewers are a seeded permutation of every other
    profile, truncated to `max_reviewers`.
    """
    if n_test < 0 or max_reviewers < 0:
        raise InvalidParams("n_test and max_reviewers must be nonnegative")
    rng = np.random.default_rng(seed)
    profiles = dataset.profiles
    eligible = [i for i, p in enumerate(profiles) if len(p) >= min_votes]
    if n_test > 0 and n_test + 1 > len(eligible):
        raise NotEnoughUsers(
            f"need {n_test + 1} profiles with >= {min_votes} votes, found {len(eligible)}"
        )
    picked = rng.choice(len(eligible), size=n_test, replace=False) if n_test else []
    test_idx = [eligible[int(i)] for i in picked]
    chosen = set(test_idx)
    rest = [i for i in range(len(profiles)) if i not in chosen]
    order = rng.permutation(len(rest))[:max_reviewers]
    return [profiles[i] for i in test_idx], [profiles[rest[int(j)]] for j in order]


def reserve_vote(profile: UserProfile, seed):
    """Hide one uniformly chosen vote. Returns (training profile, (movie, score))."""
    if len(profile) < 2:
        raise ProfileTooSmall(f"user {profile.user_id} has {len(profile)} vote(s); need >= 2")
    rng = np.random.default_rng(seed)
    movies = sorted(profile.votes)
    movie = movies[int(rng.integers(len(movies)))]
    return profile.without(movie), (movie, profile.votes[movie])
