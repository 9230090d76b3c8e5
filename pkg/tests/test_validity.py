import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import entropy as scipy_entropy
from sklearn.metrics import (
    calinski_harabasz_score,
    davies_bouldin_score,
    silhouette_score,
)

from onsetcvi.clustering import ClusterParams, Partition
from onsetcvi.dataset import FeatureSubset
from onsetcvi.validity import (
    CviScore,
    DegenerateOnsetsError,
    OnsetDistribution,
    PriorOnsets,
    calinski_harabasz,
    calinski_harabasz_value,
    cross_entropy,
    davies_bouldin,
    davies_bouldin_value,
    entropy,
    extract_onsets,
    first_occurrences,
    kl_divergence,
    onset_cvi,
    onset_distribution,
    pairwise_distances,
    rand_index,
    silhouette,
    silhouette_from_distances,
    silhouette_many,
)


def make_partition(assignments, k, subset=(0,)):
    return Partition(assignments=np.asarray(assignments), k=k,
                     subset=FeatureSubset(subset), objective=0.0,
                     params=ClusterParams(centers=np.zeros((k, len(subset)))))


# strategy: a normalized probability vector of length 2..8
prob_vectors = st.integers(2, 8).flatmap(
    lambda n: st.lists(st.floats(1e-6, 1.0), min_size=n, max_size=n)
).map(lambda w: np.array(w) / np.sum(w))


class TestWorkedExample:
    """Three clusters first appearing at 27, 57, 82 over a 127-unit test."""

    ONSETS = [27.0, 57.0, 82.0]
    T = 127.0

    def test_gap_distribution(self):
        dist = onset_distribution(self.ONSETS, self.T)
        np.testing.assert_allclose(dist.deltas, [0.30, 0.25, 0.45])
        np.testing.assert_allclose(dist.onsets, [0.0, 30.0, 55.0])
        assert dist.t_end == 100.0

    def test_entropy_and_divergences(self):
        deltas = onset_distribution(self.ONSETS, self.T).deltas
        uniform = np.full(3, 1 / 3)
        assert entropy(deltas) == pytest.approx(1.539, abs=1e-3)
        assert cross_entropy(deltas, uniform) == pytest.approx(1.585, abs=1e-3)
        assert kl_divergence(deltas, uniform) == pytest.approx(0.0454714, abs=1e-4)
        assert entropy(deltas) / math.log2(3) == pytest.approx(0.971, abs=1e-3)


class TestOnsetDistribution:
    def test_onsets_are_shifted_and_sorted(self):
        dist = onset_distribution([5.0, 3.0, 9.0], 13.0)
        np.testing.assert_allclose(dist.onsets, [0.0, 2.0, 6.0])
        np.testing.assert_allclose(dist.deltas, [0.2, 0.4, 0.4])

    def test_coincident_onsets_allowed(self):
        dist = onset_distribution([2.0, 2.0, 4.0], 6.0)
        np.testing.assert_allclose(dist.deltas, [0.0, 0.5, 0.5])
        assert entropy(dist.deltas) == 1.0  # zero gap contributes nothing

    def test_all_onsets_at_end_degenerate(self):
        with pytest.raises(DegenerateOnsetsError):
            onset_distribution([10.0, 10.0], 10.0)

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            OnsetDistribution(onsets=np.array([1.0, 2.0]), t_end=5.0,
                              deltas=np.array([0.2, 0.8]))


class TestFirstOccurrences:
    def test_temporal_order_not_label_order(self):
        # cluster 2 appears before cluster 1; output is sorted by time
        a = np.array([2, 2, 1, 3, 1])
        axis = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
        np.testing.assert_allclose(first_occurrences(a, axis), [0.0, 2.0, 3.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            first_occurrences(np.array([1, 2]), np.array([0.0]))


class TestExtractOnsets:
    def test_axis_end_defaults_to_last_event(self):
        p = make_partition([1, 2, 2, 1], 2)
        dist = extract_onsets(p, np.array([0.0, 4.0, 5.0, 8.0]))
        np.testing.assert_allclose(dist.deltas, [0.5, 0.5])

    def test_explicit_horizon(self):
        p = make_partition([1, 2], 2)
        dist = extract_onsets(p, np.array([0.0, 4.0]), axis_end=16.0)
        np.testing.assert_allclose(dist.deltas, [0.25, 0.75])


class TestInformationMeasures:
    def test_entropy_matches_scipy(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = rng.dirichlet(np.ones(rng.integers(2, 10)))
            assert entropy(p) == pytest.approx(scipy_entropy(p, base=2), abs=1e-10)

    def test_kl_matches_scipy(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = rng.integers(2, 10)
            p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
            assert kl_divergence(p, q) == pytest.approx(
                scipy_entropy(p, q, base=2), abs=1e-10)

    def test_zero_in_p_true_gives_infinity(self):
        assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf
        assert cross_entropy([0.5, 0.5], [1.0, 0.0]) == math.inf

    def test_zero_in_p_est_is_fine(self):
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(1.0)

    def test_invalid_vectors_rejected(self):
        with pytest.raises(ValueError):
            entropy([0.5, 0.6])
        with pytest.raises(ValueError):
            entropy([1.2, -0.2])
        with pytest.raises(ValueError):
            kl_divergence([0.5, 0.5], [0.3, 0.3, 0.4])

    @settings(max_examples=1000, deadline=None)
    @given(p=prob_vectors)
    def test_deltas_sum_and_entropy_bounds(self, p):
        # any prob vector realizable as gaps: entropy in [0, log2 n]
        e = entropy(p)
        assert 0.0 <= e <= math.log2(len(p)) + 1e-12
        assert abs(p.sum() - 1.0) <= 1e-9

    @settings(max_examples=1000, deadline=None)
    @given(data=st.data())
    def test_kl_nonnegative_and_identity(self, data):
        p = data.draw(prob_vectors)
        q = data.draw(st.lists(st.floats(1e-6, 1.0), min_size=len(p),
                               max_size=len(p)).map(
            lambda w: np.array(w) / np.sum(w)))
        kl = kl_divergence(p, q)
        assert kl >= -1e-12
        assert kl == pytest.approx(cross_entropy(p, q) - entropy(p), abs=1e-10)
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)

    @settings(max_examples=1000, deadline=None)
    @given(
        onsets=st.lists(st.floats(0.0, 99.0), min_size=2, max_size=8),
        slack=st.floats(0.1, 50.0),
    )
    def test_random_onsets_deltas_sum_to_one(self, onsets, slack):
        dist = onset_distribution(onsets, max(onsets) + slack)
        assert abs(dist.deltas.sum() - 1.0) <= 1e-12


class TestOnsetCvi:
    def test_normalized_entropy_in_unit_interval(self):
        p = make_partition([1, 2, 3, 1], 3)
        score = onset_cvi(p, np.array([0.0, 1.0, 2.0, 9.0]), axis_end=10.0)
        assert score.kind == "onset_entropy"
        assert score.direction == "maximize"
        assert 0.0 <= score.value <= 1.0

    def test_evenly_spread_onsets_score_one(self):
        p = make_partition([1, 2, 3], 3)
        score = onset_cvi(p, np.array([0.0, 10.0, 20.0]), axis_end=30.0)
        assert score.value == pytest.approx(1.0)

    def test_prior_switches_to_kl(self):
        p = make_partition([1, 2], 2)
        prior = PriorOnsets(np.array([0.25, 0.75]))
        score = onset_cvi(p, np.array([0.0, 3.0]), prior=prior, axis_end=12.0)
        assert score.kind == "onset_kl"
        assert score.direction == "minimize"
        assert score.value == pytest.approx(0.0, abs=1e-12)

    @settings(max_examples=1000, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        k=st.integers(2, 6),
        scale=st.floats(0.01, 1000.0),
        shift=st.floats(-1000.0, 1000.0),
    )
    def test_invariant_under_relabeling_and_affine_axis(self, seed, k, scale, shift):
        rng = np.random.default_rng(seed)
        n = 30
        assignments = np.concatenate([np.arange(1, k + 1),
                                      rng.integers(1, k + 1, n - k)])
        rng.shuffle(assignments)
        axis = np.sort(rng.uniform(0.0, 100.0, n))
        axis_end = 100.0
        base = onset_cvi(make_partition(assignments, k), axis,
                         axis_end=axis_end).value

        perm = rng.permutation(k) + 1
        relabeled = perm[assignments - 1]
        assert onset_cvi(make_partition(relabeled, k), axis,
                         axis_end=axis_end).value == pytest.approx(base, abs=1e-12)

        scaled = onset_cvi(make_partition(assignments, k), axis * scale + shift,
                           axis_end=axis_end * scale + shift).value
        assert scaled == pytest.approx(base, abs=1e-9)

    def test_k1_without_prior_rejected(self):
        p = Partition(assignments=np.array([1, 1]), k=1,
                      subset=FeatureSubset((0,)), objective=0.0,
                      params=ClusterParams(centers=np.zeros((1, 1))))
        with pytest.raises(ValueError, match="prior"):
            onset_cvi(p, np.array([0.0, 1.0]))


class TestShapeIndices:
    def test_silhouette_matches_sklearn(self, blob_xy):
        x, labels = blob_xy
        p = make_partition(labels + 1, 4, subset=(0, 1))
        ours = silhouette(x, p).value
        assert ours == pytest.approx(silhouette_score(x, labels), abs=1e-9)

    def test_silhouette_random_labels_match_sklearn(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = rng.normal(size=(60, 3))
            k = int(rng.integers(2, 6))
            labels = np.concatenate([np.arange(k), rng.integers(0, k, 60 - k)])
            p = make_partition(labels + 1, k, subset=(0, 1, 2))
            assert silhouette(x, p).value == pytest.approx(
                silhouette_score(x, labels), abs=1e-8)

    def test_silhouette_many_matches_per_k(self, blob_xy):
        x, labels = blob_xy
        rng = np.random.default_rng(5)
        labelings = {4: labels}
        for k in (2, 3, 6):
            labelings[k] = np.concatenate(
                [np.arange(k), rng.integers(0, k, len(x) - k)])
        dist = pairwise_distances(x)
        many = silhouette_many(dist, labelings)
        for k, l in labelings.items():
            assert many[k] == pytest.approx(
                silhouette_from_distances(dist, l, k), abs=1e-12)

    def test_singleton_cluster_scores_zero(self):
        x = np.array([[0.0], [0.1], [5.0]])
        labels = np.array([0, 0, 1])
        dist = pairwise_distances(x)
        ours = silhouette_from_distances(dist, labels, 2)
        assert ours == pytest.approx(silhouette_score(x, labels), abs=1e-12)

    def test_davies_bouldin_matches_sklearn(self, blob_xy):
        x, labels = blob_xy
        ours = davies_bouldin_value(x, labels, 4)
        assert ours == pytest.approx(davies_bouldin_score(x, labels), abs=1e-9)

    def test_davies_bouldin_coincident_centroids_infinite(self):
        # mirror-image clusters share a centroid
        x = np.array([[-1.0], [1.0], [-1.0], [1.0]])
        assert davies_bouldin_value(x, np.array([0, 0, 1, 1]), 2) == math.inf

    def test_calinski_harabasz_matches_sklearn(self, blob_xy):
        x, labels = blob_xy
        ours = calinski_harabasz_value(x, labels, 4)
        assert ours == pytest.approx(calinski_harabasz_score(x, labels), rel=1e-9)

    def test_calinski_harabasz_zero_within_scatter_infinite(self):
        x = np.array([[0.0], [0.0], [5.0], [5.0]])
        assert calinski_harabasz_value(x, np.array([0, 0, 1, 1]), 2) == math.inf

    def test_directions_recorded(self, blob_xy):
        x, labels = blob_xy
        p = make_partition(labels + 1, 4, subset=(0, 1))
        assert silhouette(x, p).direction == "maximize"
        assert davies_bouldin(x, p).direction == "minimize"
        assert calinski_harabasz(x, p).direction == "maximize"

    def test_pairwise_distances_chunking(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(50, 3))
        expect = np.linalg.norm(x[:, None] - x[None, :], axis=2)
        # the dot-product expansion loses ~1e-8 to cancellation
        np.testing.assert_allclose(pairwise_distances(x, chunk=7), expect,
                                   atol=1e-6)


def rand_index_pairs(a, b):
    """Exhaustive pair-enumeration oracle."""
    n = len(a)
    agree = 0
    for i, j in combinations(range(n), 2):
        agree += (a[i] == a[j]) == (b[i] == b[j])
    return agree / (n * (n - 1) / 2)


class TestRandIndex:
    def test_matches_pair_enumeration_exhaustively(self):
        # every pair of label vectors over {0,1,2} with N <= 8 would be 3^16
        # vectors; sample the full cross-product for N <= 5 and random pairs
        # at N in 6..8
        from itertools import product

        for n in (2, 3, 4, 5):
            vecs = list(product(range(2), repeat=n))
            for a in vecs:
                for b in vecs:
                    assert rand_index(a, b) == pytest.approx(rand_index_pairs(a, b))
        rng = np.random.default_rng(0)
        for n in (6, 7, 8):
            for _ in range(200):
                a = rng.integers(0, 3, n)
                b = rng.integers(0, 4, n)
                assert rand_index(a, b) == pytest.approx(rand_index_pairs(a, b))

    def test_identical_labelings_score_one(self):
        assert rand_index([1, 1, 2, 3], [5, 5, 7, 9]) == 1.0

    def test_short_input_rejected(self):
        with pytest.raises(ValueError):
            rand_index([1], [1])

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(2, 30))
    def test_symmetric_and_bounded(self, seed, n):
        rng = np.random.default_rng(seed)
        a = rng.integers(0, 4, n)
        b = rng.integers(0, 4, n)
        ri = rand_index(a, b)
        assert 0.0 <= ri <= 1.0
        assert ri == rand_index(b, a)


class TestCviScore:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            CviScore(value=0.0, kind="mystery", k=2)

    def test_to_record(self):
        s = CviScore(value=0.5, kind="silhouette", k=3, subset=FeatureSubset((1, 4)))
        rec = s.to_record()
        assert rec == {"kind": "silhouette", "k": 3, "subset": [1, 4],
                       "value": 0.5, "direction": "maximize"}
