"""Onset-based clustering validation for event-stream monitoring."""

from .dataset import (
    Dataset,
    DatasetError,
    FeatureSubset,
    decimate,
    load_dataset,
    moving_median,
    save_dataset,
    truncate_levels,
)
from .clustering import (
    ClusterParams,
    EmptyClusterError,
    Partition,
    gk_cluster,
    harden,
    kmeans,
)
from .validity import (
    CviScore,
    DegenerateOnsetsError,
    OnsetDistribution,
    PriorOnsets,
    calinski_harabasz,
    cross_entropy,
    davies_bouldin,
    entropy,
    extract_onsets,
    kl_divergence,
    onset_cvi,
    rand_index,
    silhouette,
)
from .search import (
    OnsetHistogram,
    SearchConfig,
    SearchFailedError,
    SearchRecord,
    SearchResult,
    VoteWeights,
    accumulate_histogram,
    enumerate_subsets,
    evaluate_against_truth,
    run_search,
    select_best,
    voting_scheme,
)
from .stream import OnsetTracker, StreamError
from .synth import generate_fixture

__version__ = "0.1.0"
