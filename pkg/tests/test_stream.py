import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onsetcvi.stream import OnsetTracker, StreamError
from onsetcvi.validity import entropy, onset_distribution


class TestOnsetTracker:
    def test_first_occurrences_only(self):
        tr = OnsetTracker(t_end=10.0)
        assert tr.observe(3, 0.5) is True
        assert tr.observe(3, 1.0) is False
        assert tr.observe(1, 2.0) is True
        assert tr.onsets == ((3, 0.5), (1, 2.0))
        assert tr.k_so_far == 2
        assert tr.events_seen == 3

    def test_quality_none_until_two_clusters(self):
        tr = OnsetTracker(t_end=10.0)
        assert tr.current_quality() is None
        tr.observe(1, 0.0)
        assert tr.current_quality() is None
        tr.observe(2, 5.0)
        assert tr.current_quality() == pytest.approx(1.0)

    def test_quality_matches_batch_criterion(self):
        tr = OnsetTracker(t_end=127.0)
        for cid, t in ((1, 27.0), (1, 40.0), (2, 57.0), (3, 82.0)):
            tr.observe(cid, t)
        dist = onset_distribution([27.0, 57.0, 82.0], 127.0)
        expect = entropy(dist.deltas) / np.log2(3)
        assert tr.current_quality() == pytest.approx(expect, abs=1e-12)

    def test_out_of_order_event_rejected(self):
        tr = OnsetTracker(t_end=10.0)
        tr.observe(1, 5.0)
        with pytest.raises(StreamError, match="precedes"):
            tr.observe(2, 4.0)

    def test_event_beyond_horizon_rejected(self):
        tr = OnsetTracker(t_end=10.0)
        with pytest.raises(StreamError, match="beyond"):
            tr.observe(1, 10.5)

    def test_ties_in_time_allowed(self):
        tr = OnsetTracker(t_end=10.0)
        tr.observe(1, 3.0)
        assert tr.observe(2, 3.0) is True

    @pytest.mark.parametrize("t_end", [0.0, -1.0, float("inf"), float("nan")])
    def test_bad_horizon_rejected(self, t_end):
        with pytest.raises(ValueError):
            OnsetTracker(t_end)

    def test_snapshot(self):
        tr = OnsetTracker(t_end=10.0)
        tr.observe(1, 0.0)
        tr.observe(2, 4.0)
        snap = tr.snapshot()
        assert snap == {"onsets": ((1, 0.0), (2, 4.0)), "k_so_far": 2,
                        "events_seen": 2, "quality": tr.current_quality()}

    @settings(max_examples=500, deadline=None)
    @given(seed=st.integers(0, 100_000), k=st.integers(2, 6),
           n=st.integers(2, 40))
    def test_replay_equals_batch(self, seed, k, n):
        # the incremental tracker over a full event stream must reproduce the
        # batch onset criterion of the final partition
        rng = np.random.default_rng(seed)
        n = max(n, k)
        assignments = np.concatenate([np.arange(1, k + 1),
                                      rng.integers(1, k + 1, n - k)])
        rng.shuffle(assignments)
        axis = np.sort(rng.uniform(0.0, 99.0, n))
        t_end = 100.0

        tr = OnsetTracker(t_end=t_end)
        for cid, t in zip(assignments, axis):
            tr.observe(int(cid), float(t))

        onsets = [axis[np.nonzero(assignments == c)[0][0]]
                  for c in range(1, k + 1)]
        dist = onset_distribution(onsets, t_end)
        expect = entropy(dist.deltas) / np.log2(k)
        assert tr.current_quality() == pytest.approx(expect, abs=1e-12)
