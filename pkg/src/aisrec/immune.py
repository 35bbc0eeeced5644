"""Idiotypic immune network used to grow a recommendation neighbourhood.

Each antibody is a reviewer profile with a concentration. One iteration
applies, synchronously to every antibody ``i``::

    dx_i = k1 * m_i * x_i * y  -  (k2 / N) * sum_{j != i} m_ij * x_i * x_j  -  k3 * x_i

where ``m_i`` is the absolute correlation with the antigen (the active
user), ``m_ij`` the absolute correlation between two antibodies, ``y`` the
antigen concentration and ``N`` the current pool size. Concentrations are
clamped to ``[0, max_concentration]`` and antibodies that fall below
``min_concentration`` are removed.
"""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np

from .dataset import UserProfile
from .errors import EmptyPool, InvalidParams, PoolFull
from .similarity import SimilarityParams, pearson


@dataclass(frozen=True)
class ImmuneParams:
    k1: float = 0.2  # stimulation
    k2: float = 0.0  # suppression
    k3: float = 0.1  # death rate
    pool_capacity: int = 100
    init_concentration: float = 10.0
    max_concentration: float = 100.0
    min_concentration: float = 0.01
    antigen_concentration: float = 10.0
    stability_window: int = 10
    maturation_cap: int = 10_000

    def __post_init__(self):
        if min(self.k1, self.k2, self.k3) < 0:
            raise InvalidParams("rate constants must be nonnegative")
        if not 0 < self.init_concentration < self.max_concentration:
            raise InvalidParams("need 0 < init_concentration < max_concentration")
        if not 0 <= self.min_concentration < self.init_concentration:
            raise InvalidParams("need 0 <= min_concentration < init_concentration")
        if self.pool_capacity < 1 or self.stability_window < 1 or self.maturation_cap < 0:
            raise InvalidParams("pool_capacity and stability_window must be >= 1")


@dataclass(frozen=True)
class Antibody:
    profile: UserProfile
    concentration: float
    antigen_match: float
    correlation: float
    peer_matches: dict


class PearsonMatcher:
    """Computes correlations on demand from the profiles themselves."""

    def __init__(self, antigen: UserProfile, params: SimilarityParams = SimilarityParams()):
        self.antigen = antigen
        self.params = params

    def antigen_correlation(self, profile: UserProfile) -> float:
        return pearson(self.antigen, profile, self.params).r

    def peer_correlations(self, profile: UserProfile, others: Sequence[UserProfile]) -> np.ndarray:
        return np.array([pearson(profile, o, self.params).r for o in others], dtype=float)


class IndexedMatcher:
    """Looks correlations up in precomputed arrays.

    `antigen_r[i]` is the antigen's correlation with the reviewer at row
    `i`, `peer_r` the reviewer-by-reviewer matrix and `position` maps a
    user id to its row.
    """

    def __init__(self, antigen_r: np.ndarray, peer_r: np.ndarray, position: dict[int, int]):
        self.antigen_r = antigen_r
        self.peer_r = peer_r
        self.position = position

    def antigen_correlation(self, profile):
        return float(self.antigen_r[self.position[profile.user_id]])

    def peer_correlations(self, profile, others):
        row = self.peer_r[self.position[profile.user_id]]
        return row[[self.position[o.user_id] for o in others]].astype(float, copy=True)


class ImmuneNetwork:
    """Antibody pool around a single antigen.

    The pool is kept ordered by user id so that an iteration is a pure
    function of the pool's contents, whatever order reviewers arrived in.
    """

    def __init__(self, antigen: UserProfile, params: ImmuneParams = ImmuneParams(),
                 similarity: SimilarityParams = SimilarityParams(), matcher=None, trace: list | None = None):
        self.antigen = antigen
        self.params = params
        self.matcher = matcher if matcher is not None else PearsonMatcher(antigen, similarity)
        self.trace = trace
        self.stable_iterations = 0
        self.reviewers_examined = 0
        self.iterations = 0
        self.maturation_steps = 0
        self.saturated = None
        self._ids: list[int] = []
        self._profiles: list[UserProfile] = []
        self._x = np.empty(0)
        self._r = np.empty(0)
        self._peer = np.empty((0, 0))

    # -- state ----------------------------------------------------------

    @property
    def antigen_concentration(self) -> float:
        return self.params.antigen_concentration

    @property
    def size(self) -> int:
        return len(self._ids)

    def __len__(self):
        return len(self._ids)

    @property
    def is_full(self) -> bool:
        return len(self._ids) >= self.params.pool_capacity

    @property
    def stable(self) -> bool:
        return self.stable_iterations >= self.params.stability_window

    @property
    def profiles(self) -> list[UserProfile]:
        return list(self._profiles)

    @property
    def concentrations(self) -> dict[int, float]:
        return dict(zip(self._ids, self._x.tolist()))

    @property
    def correlations(self) -> dict[int, float]:
        return dict(zip(self._ids, self._r.tolist()))

    @property
    def antibodies(self) -> list[Antibody]:
        out = []
        for i, p in enumerate(self._profiles):
            peers = {uid: float(self._peer[i, j]) for j, uid in enumerate(self._ids) if j != i}
            out.append(Antibody(p, float(self._x[i]), abs(float(self._r[i])), float(self._r[i]), peers))
        return out

    def set_concentrations(self, values: dict[int, float]):
        """Overwrite concentrations by user id (for experiments and tests)."""
        for uid, value in values.items():
            self._x[self._ids.index(uid)] = value

    # -- operations -----------------------------------------------------

    def add_antibody(self, profile: UserProfile) -> bool:
        """Insert `profile` at the initial concentration.

        Returns False without touching the pool if the reviewer is already
        present.
        """
        if self.is_full:
            raise PoolFull(f"pool already holds {self.params.pool_capacity} antibodies")
        pos = bisect.bisect_left(self._ids, profile.user_id)
        if pos < len(self._ids) and self._ids[pos] == profile.user_id:
            return False

        r = self.matcher.antigen_correlation(profile)
        peer = np.abs(self.matcher.peer_correlations(profile, self._profiles))

        self._ids.insert(pos, profile.user_id)
        self._profiles.insert(pos, profile)
        self._x = np.insert(self._x, pos, self.params.init_concentration)
        self._r = np.insert(self._r, pos, r)
        grown = np.insert(self._peer, pos, peer, axis=0)
        self._peer = np.insert(grown, pos, np.insert(peer, pos, 0.0), axis=1)

        self.reviewers_examined += 1
        self.stable_iterations = 0
        return True

    def iterate(self) -> int:
        """Advance one synchronous step. Returns the number of antibodies removed."""
        if not self._ids:
            raise EmptyPool("cannot iterate an empty pool")
        p = self.params
        x = self._x
        n = len(x)
        m = np.abs(self._r)
        stimulation = p.k1 * m * x * p.antigen_concentration
        suppression = (p.k2 / n) * x * (self._peer @ x)
        x = np.clip(x + stimulation - suppression - p.k3 * x, 0.0, p.max_concentration)
        self.iterations += 1

        if self.trace is not None:
            self.trace.extend(zip([self.iterations] * n, self._ids, x.tolist()))

        keep = x >= p.min_concentration
        removed = int(n - keep.sum())
        if removed:
            idx = np.flatnonzero(keep)
            self._ids = [self._ids[i] for i in idx]
            self._profiles = [self._profiles[i] for i in idx]
            self._r = self._r[idx]
            self._peer = self._peer[np.ix_(idx, idx)]
            x = x[idx]
            self.stable_iterations = 0
        else:
            self.stable_iterations += 1
        self._x = x
        return removed

    def reset(self):
        self._x = np.full(len(self._ids), self.params.init_concentration)


def run_selection(net: ImmuneNetwork, reviewers: Iterable[UserProfile],
                  admit: Callable[[UserProfile], bool] | None = None) -> ImmuneNetwork:
    """Stream reviewers into the pool until it stabilises or the stream ends.

    Whenever the pool is at capacity it is iterated until either something
    dies (making room) or it has gone `stability_window` iterations without
    changing size. Every reviewer drawn from the stream counts as examined,
    including ones rejected by `admit`.
    """
    stream = iter(reviewers)
    while not net.stable:
        for profile in stream:
            if admit is None or admit(profile):
                break
            net.reviewers_examined += 1
        else:
            break
        if not net.add_antibody(profile):
            net.reviewers_examined += 1
        while net.is_full and not net.stable:
            net.iterate()
    return net


def mature(net: ImmuneNetwork) -> ImmuneNetwork:
    """Reset every concentration, then iterate until one antibody saturates.

    Stops early when the pool empties or `maturation_cap` iterations pass;
    `net.saturated` records whether an antibody actually reached the
    maximum.
    """
    if not len(net):
        raise EmptyPool("cannot mature an empty pool")
    net.reset()
    cap = net.params.max_concentration
    steps = 0
    while len(net) and not (net._x >= cap).any() and steps < net.params.maturation_cap:
        net.iterate()
        steps += 1
    net.maturation_steps = steps
    net.saturated = bool(len(net) and (net._x >= cap).any())
    return net


def write_trace(rows, stream: TextIO):
    """Write trace rows as `iteration,antibody_user_id,concentration` CSV."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["iteration", "antibody_user_id", "concentration"])
    for it, uid, x in rows:
        writer.writerow([it, uid, repr(float(x))])
