"""Collaborative filtering with neighbourhoods chosen by an idiotypic
immune network, plus a Simple Pearson baseline and a leave-one-out
evaluation harness."""

from .dataset import (
    Dataset,
    GeneratorParams,
    UserProfile,
    generate_synthetic,
    parse_votes,
    reserve_vote,
    split_test_users,
    write_votes,
)
from .evaluation import (
    PerUserMetrics,
    PredictorConfig,
    RunMetrics,
    aggregate_runs,
    evaluate_user,
    matched_sp_config,
    run_experiment,
)
from .immune import ImmuneNetwork, ImmuneParams, mature, run_selection
from .metrics import kendall_tau, mae, wilcoxon_signed_rank
from .predictor import Neighborhood, predict, recommend, select_neighbors_ais, select_neighbors_sp
from .similarity import SimilarityParams, match_strength, overlap, pearson

__version__ = "0.1.0"
