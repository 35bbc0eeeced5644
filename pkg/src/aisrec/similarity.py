"""Amended Pearson correlation between user profiles.

Means are taken over each user's whole profile while the sums run over the
co-rated films only. Two fallbacks and a linear small-overlap penalty are
applied in this order: no overlap, zero variance, n < P shrinkage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import UserProfile
from .errors import EmptyProfile, InvalidParams

# denominators at or below this are treated as exactly zero
ZERO_VARIANCE_TOL = 1e-15


@dataclass(frozen=True)
class SimilarityParams:
    no_overlap_default: float = 0.0
    zero_variance_default: float = 0.0
    overlap_penalty: int = 100

    def __post_init__(self):
        if self.overlap_penalty < 1:
            raise InvalidParams("overlap_penalty must be >= 1")
        for name in ("no_overlap_default", "zero_variance_default"):
            if not -1.0 <= getattr(self, name) <= 1.0:
                raise InvalidParams(f"{name} must lie in [-1, 1]")


@dataclass(frozen=True)
class Correlation:
    r: float
    n_overlap: int


def overlap(u: UserProfile, v: UserProfile) -> set[int]:
    return u.votes.keys() & v.votes.keys()


def _amend(num, den, n, params):
    if n == 0:
        return params.no_overlap_default
    if den <= ZERO_VARIANCE_TOL:
        return params.zero_variance_default
    r = num / math.sqrt(den)
    r = min(1.0, max(-1.0, r))
    if n < params.overlap_penalty:
        r *= n / params.overlap_penalty
    return r


def pearson(u: UserProfile, v: UserProfile, params: SimilarityParams = SimilarityParams()) -> Correlation:
    if not u.votes or not v.votes:
        raise EmptyProfile("pearson needs two non-empty profiles")
    common = overlap(u, v)
    u_mean, v_mean = u.mean, v.mean
    num = su = sv = 0.0
    for movie in sorted(common):
        du = u.votes[movie] - u_mean
        dv = v.votes[movie] - v_mean
        num += du * dv
        su += du * du
        sv += dv * dv
    return Correlation(_amend(num, su * sv, len(common), params), len(common))


def match_strength(c: Correlation | float) -> float:
    """Antibody/antigen binding strength: the absolute correlation."""
    r = c.r if isinstance(c, Correlation) else c
    return abs(r)


class ProfileBlock:
    """Dense encoding of a list of profiles for batched correlation.

    Holds per-profile deviations from the full-profile mean (zero where no
    vote) and a vote mask over a shared movie index, so that the overlap
    sums reduce to matrix products.
    """

    def __init__(self, profiles: Sequence[UserProfile], movie_index: dict[int, int] | None = None):
        if movie_index is None:
            movies = sorted({m for p in profiles for m in p.votes})
            movie_index = {m: i for i, m in enumerate(movies)}
        self.profiles = list(profiles)
        self.movie_index = movie_index
        self.position = {p.user_id: i for i, p in enumerate(self.profiles)}
        self.dev, self.mask = self.encode(self.profiles)

    def encode(self, profiles):
        n_movies = len(self.movie_index)
        dev = np.zeros((len(profiles), n_movies))
        mask = np.zeros((len(profiles), n_movies))
        for row, p in enumerate(profiles):
            if not p.votes:
                raise EmptyProfile(f"user {p.user_id} has no votes")
            cols, vals = [], []
            for m, s in p.votes.items():
                col = self.movie_index.get(m)
                if col is not None:
                    cols.append(col)
                    vals.append(s - p.mean)
            dev[row, cols] = vals
            mask[row, cols] = 1.0
        return dev, mask

    def correlate(self, other: ProfileBlock | None = None, params: SimilarityParams = SimilarityParams()) -> np.ndarray:
        """Amended Pearson matrix between this block's rows and `other`'s rows."""
        other = self if other is None else other
        if other.movie_index is not self.movie_index and other.movie_index != self.movie_index:
            raise InvalidParams("blocks must share a movie index")
        return _amend_arrays(self.dev, self.mask, other.dev, other.mask, params)

    def correlate_profile(self, profile: UserProfile, params: SimilarityParams = SimilarityParams()) -> np.ndarray:
        """Amended Pearson of one profile against every row.

        Votes of `profile` on films outside the movie index still count
        toward its mean but cannot overlap with any row.
        """
        dev, mask = self.encode([profile])
        return _amend_arrays(dev, mask, self.dev, self.mask, params)[0]


def _amend_arrays(dev_a, mask_a, dev_b, mask_b, params):
    n = mask_a @ mask_b.T
    num = dev_a @ dev_b.T
    den = ((dev_a * dev_a) @ mask_b.T) * (mask_a @ (dev_b * dev_b).T)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.clip(num / np.sqrt(den), -1.0, 1.0)
    r = np.where(n < params.overlap_penalty, r * (n / params.overlap_penalty), r)
    r = np.where(den <= ZERO_VARIANCE_TOL, params.zero_variance_default, r)
    return np.where(n == 0, params.no_overlap_default, r)
