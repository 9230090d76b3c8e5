"""Online onset tracking.

Given a known test horizon, the tracker consumes (cluster id, axis value)
events as an upstream assigner produces them, records the first occurrence of
each cluster, and exposes the running normalized-entropy criterion. The
quality value only changes when a new cluster appears.
"""

from __future__ import annotations

import math

import numpy as np

from .validity import onset_distribution, entropy

__all__ = ["OnsetTracker", "StreamError"]


class StreamError(RuntimeError):
    """Out-of-order event or event beyond the declared horizon."""


class OnsetTracker:
    """Single-writer incremental onset list with a running quality score.

    The horizon t_end (total test duration, maximum cycle count, ...) is
    mandatory: the criterion's last gap closes against it. An unknown-horizon
    mode is deliberately not offered.
    """

    def __init__(self, t_end: float):
        t_end = float(t_end)
        if not math.isfinite(t_end) or t_end <= 0:
            raise ValueError(f"t_end must be positive and finite, got {t_end}")
        self.t_end = t_end
        self._onsets: list[tuple[int, float]] = []  # (cluster id, first t)
        self._seen: set[int] = set()
        self._last_t: float | None = None
        self.events_seen = 0

    @property
    def k_so_far(self) -> int:
        return len(self._onsets)

    @property
    def onsets(self) -> tuple:
        return tuple(self._onsets)

    def observe(self, cluster_id: int, t: float) -> bool:
        """Feed one event; returns True when it opened a new cluster."""
        t = float(t)
        if self._last_t is not None and t < self._last_t:
            raise StreamError(f"event at t={t} precedes previous t={self._last_t}")
        if t > self.t_end:
            raise StreamError(f"event at t={t} beyond horizon t_end={self.t_end}")
        self._last_t = t
        self.events_seen += 1
        cluster_id = int(cluster_id)
        if cluster_id in self._seen:
            return False
        self._seen.add(cluster_id)
        self._onsets.append((cluster_id, t))
        return True

    def current_quality(self) -> float | None:
        """Running normalized onset entropy in [0, 1].

        Returns None (not ready) while fewer than two clusters have appeared;
        this is a state, not an error.
        """
        k = self.k_so_far
        if k < 2:
            return None
        times = np.array([t for _, t in self._onsets])
        dist = onset_distribution(times, self.t_end)
        return float(entropy(dist.deltas) / math.log2(k))

    def snapshot(self) -> dict:
        """Immutable view safe to hand to concurrent readers."""
        return {
            "onsets": self.onsets,
            "k_so_far": self.k_so_far,
            "events_seen": self.events_seen,
            "quality": self.current_quality(),
        }
