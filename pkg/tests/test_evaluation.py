import io
import math
from dataclasses import replace

import pytest

from aisrec.dataset import GeneratorParams, UserProfile, generate_synthetic, reserve_vote
from aisrec.errors import ConfigMismatch, EmptyInput, ProfileTooSmall
from aisrec.evaluation import (
    METRICS,
    PER_USER_HEADER,
    PerUserMetrics,
    PredictorConfig,
    RunMetrics,
    aggregate_runs,
    evaluate_user,
    matched_sp_config,
    read_per_user,
    run_experiment,
    summarize,
    write_per_user,
    write_summary,
)
from aisrec.immune import ImmuneParams
from aisrec.metrics import kendall_tau
from aisrec.predictor import predict, recommend, select_neighbors_ais


@pytest.fixture(scope="module")
def small():
    return generate_synthetic(GeneratorParams(n_users=160, n_movies=60, n_genres=3, votes_per_user=(12, 40),
                                              affinity_spread=0.3, noise_spread=0.1, seed=21))


class FixedMatcher:
    def __init__(self, r):
        self.r = r

    def antigen_correlation(self, profile):
        return self.r

    def peer_correlations(self, profile, others):
        return [self.r] * len(others)


AIS = PredictorConfig(immune=ImmuneParams(k1=0.3, pool_capacity=20))


class TestEvaluateUser:
    def test_empty_neighbourhood(self):
        test = UserProfile(1, {m: 0.2 * (m % 6) for m in range(12)})
        m = evaluate_user(test, [], AIS, seed=0)
        assert m.abs_error is None
        assert m.n_recommendations == 0 and m.overlap_size == 0
        assert m.kendall_tau is None
        assert m.neighborhood_size == 0

    def test_only_reserved_film_overlaps(self):
        test = UserProfile(1, {1: 0.2, 2: 0.8, 3: 0.4})
        _, (movie, _) = reserve_vote(test, 5)
        reviewer = UserProfile(2, {movie: 0.6, 100: 0.4, 101: 1.0})
        m = evaluate_user(test, [reviewer], AIS, seed=5, matcher_for=lambda train: FixedMatcher(0.9))
        assert m.abs_error is not None
        assert m.overlap_size == 1
        assert m.kendall_tau is None
        assert m.n_recommendations == 3

    def test_too_small(self):
        with pytest.raises(ProfileTooSmall):
            evaluate_user(UserProfile(1, {1: 0.2}), [], AIS, seed=0)

    def test_deterministic(self, small):
        test, *reviewers = small.profiles
        assert evaluate_user(test, reviewers, AIS, 3) == evaluate_user(test, reviewers, AIS, 3)

    def test_matches_manual_pipeline(self, small):
        test, *reviewers = small.profiles
        m = evaluate_user(test, reviewers, AIS, 9)
        train, (movie, actual) = reserve_vote(test, 9)
        hood = select_neighbors_ais(train, reviewers, AIS.immune, AIS.similarity, target_movie=movie)
        assert m.abs_error == pytest.approx(abs(actual - predict(train, hood, movie).value), abs=1e-12)
        recs = recommend(train, hood)
        seen = [(mv, test.votes[mv], v) for mv, v in recs if mv in test.votes]
        assert m.n_recommendations == len(recs)
        assert m.overlap_size == len(seen)
        assert m.kendall_tau == pytest.approx(kendall_tau(seen), abs=1e-12)
        assert m.neighborhood_size == len(hood)
        assert m.reviewers_examined == hood.reviewers_examined
        assert m.overlap_size <= m.n_recommendations

    def test_simple_pearson(self, small):
        test, *reviewers = small.profiles
        cfg = PredictorConfig(kind="simple_pearson", k=7, reviewer_budget=50)
        m = evaluate_user(test, reviewers, cfg, 1)
        assert m.reviewers_examined == 50
        assert m.neighborhood_size <= 7


class TestRunExperiment:
    def test_single_user(self, small):
        run = run_experiment(small, 1, 100, AIS, seed=4)
        (u,) = run.users
        assert run.n_users == 1
        for metric in METRICS:
            value = getattr(u, metric)
            if value is None:
                assert math.isnan(run.means[metric])
            else:
                assert run.means[metric] == float(value)
                assert run.stds[metric] == 0.0

    def test_deterministic(self, small):
        a = run_experiment(small, 10, 120, AIS, seed=8)
        b = run_experiment(small, 10, 120, AIS, seed=8)
        assert a == b

    def test_seed_changes_run(self, small):
        assert run_experiment(small, 10, 120, AIS, seed=8) != run_experiment(small, 10, 120, AIS, seed=9)

    def test_precomputed_matches_pairwise(self, small):
        # the harness's batched correlations must reproduce the pairwise path
        from aisrec.dataset import split_test_users
        from aisrec.evaluation import _user_seed

        run = run_experiment(small, 5, 120, AIS, seed=2)
        tests, reviewers = split_test_users(small, 5, 120, 2)
        for test in tests:
            direct = evaluate_user(test, reviewers, AIS, _user_seed(2, test.user_id))
            fast = next(u for u in run.users if u.user_id == test.user_id)
            assert direct.neighborhood_size == fast.neighborhood_size
            assert direct.reviewers_examined == fast.reviewers_examined
            assert direct.n_recommendations == fast.n_recommendations
            if direct.abs_error is not None:
                assert direct.abs_error == pytest.approx(fast.abs_error, abs=1e-9)

    def test_reports_all_metrics(self, small):
        run = run_experiment(small, 20, 15000, AIS, seed=1)
        assert run.n_users == 20
        assert set(run.means) == set(METRICS)
        assert all(not math.isnan(run.means[m]) for m in METRICS)


def _run(seed, fp="abc", mae_=0.1):
    means = {m: 1.0 for m in METRICS} | {"abs_error": mae_}
    return RunMetrics(seed, fp, 10, means, {m: 0.0 for m in METRICS}, 0, 0)


class TestAggregate:
    def test_single(self):
        s = aggregate_runs([_run(1)])
        assert s.means["abs_error"] == 0.1 and s.stds["abs_error"] == 0.0
        assert not s.std_defined

    def test_identical(self):
        s = aggregate_runs([_run(i) for i in range(5)])
        assert all(v == 0.0 for v in s.stds.values())

    def test_two_runs(self):
        s = aggregate_runs([_run(0, mae_=0.1), _run(1, mae_=0.3)])
        assert s.means["abs_error"] == pytest.approx(0.2, abs=1e-15)
        assert s.stds["abs_error"] == pytest.approx(math.sqrt(0.02), abs=1e-15)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            aggregate_runs([])

    def test_mismatch(self):
        with pytest.raises(ConfigMismatch):
            aggregate_runs([_run(0, "a"), _run(1, "b")])

    def test_matched_sp(self):
        runs = [replace(_run(0), means={**_run(0).means, "neighborhood_size": 41.6, "reviewers_examined": 300.2})]
        sp = matched_sp_config(runs, PredictorConfig())
        assert (sp.kind, sp.k, sp.reviewer_budget) == ("simple_pearson", 42, 300)


class TestSummarize:
    def test_excludes_missing(self):
        users = [
            PerUserMetrics(2, 0.2, 5, 3, 0.5, 10, 4, False),
            PerUserMetrics(1, None, 0, 0, None, 10, 0, False),
        ]
        run = summarize(users, 0, "x")
        assert run.means["abs_error"] == 0.2
        assert run.means["kendall_tau"] == 0.5
        assert run.means["n_recommendations"] == 2.5
        assert run.n_no_prediction == 1 and run.n_missing_tau == 1
        assert [u.user_id for u in run.users] == [1, 2]


class TestCsv:
    def test_per_user_round_trip(self):
        users = [PerUserMetrics(3, None, 0, 0, None, 7, 0, False), PerUserMetrics(1, 0.25, 9, 4, -0.5, 12, 3, True)]
        buf = io.StringIO()
        write_per_user(users, buf)
        text = buf.getvalue()
        assert text.splitlines()[0] == ",".join(PER_USER_HEADER)
        assert text.splitlines()[1] == "1,0.25,9,4,-0.5,12,3,true"
        assert text.splitlines()[2] == "3,,0,0,,7,0,false"
        rows = read_per_user(io.StringIO(text))
        assert rows[1]["abs_error"] is None and rows[0]["kendall_tau"] == "-0.5"

    def test_summary_rows(self):
        buf = io.StringIO()
        write_summary([_run(i) for i in range(5)], buf)
        lines = buf.getvalue().splitlines()
        assert len(lines) == 1 + 5 + 1
        assert lines[-1].startswith("aggregate,")
        assert "\r" not in buf.getvalue()
