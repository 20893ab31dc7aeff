"""Training-count estimator over discretized state-action boxes.

Each dimension of the normalized state vector is cut into 10 bins of width
0.1 * (max - min); the bin tuple plus the action index keys a counter. Only
occupied boxes are stored (the full grid is astronomically large and sparse),
so the index is a hash map from packed keys to counts. Counts measure how
often a box appeared in training batches, which is not the number of stored
transitions: one stored experience sampled in k batches contributes k.
"""

from __future__ import annotations

import numpy as np

N_BINS = 10


def discretize(s: np.ndarray, a: int, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    """Per-dimension bin indices plus the action index, clamped into range."""
    s = np.asarray(s, dtype=float)
    width = (hi - lo) / N_BINS
    bins = np.floor((s - lo) / width).astype(np.int16)
    np.clip(bins, 0, N_BINS - 1, out=bins)
    return np.append(bins, np.int16(a))


class CountIndex:
    def __init__(self, lo: float = -1.0, hi: float = 1.0):
        self.lo = lo
        self.hi = hi
        self._counts: dict[bytes, int] = {}

    def __len__(self) -> int:
        return len(self._counts)

    @property
    def total(self) -> int:
        return sum(self._counts.values())

    def _key(self, s: np.ndarray, a: int) -> bytes:
        return discretize(s, a, self.lo, self.hi).tobytes()

    def increment(self, s: np.ndarray, a: int) -> None:
        key = self._key(s, a)
        self._counts[key] = self._counts.get(key, 0) + 1

    def increment_batch(self, states: np.ndarray, actions: np.ndarray) -> None:
        for s, a in zip(states, actions):
            self.increment(s, int(a))

    def query(self, s: np.ndarray, a: int) -> int:
        return self._counts.get(self._key(s, a), 0)

    def extremes(self, k: int) -> tuple[list[tuple[list[int], int]], list[tuple[list[int], int]]]:
        """(k most-visited, k least-visited) occupied keys as (bins, count)."""
        def decode(key: bytes) -> list[int]:
            return np.frombuffer(key, dtype=np.int16).tolist()

        ranked = sorted(self._counts.items(), key=lambda kv: (-kv[1], kv[0]))
        top = [(decode(key), count) for key, count in ranked[:k]]
        bottom = [(decode(key), count) for key, count in ranked[::-1][:k]]
        return top, bottom

    # -- checkpoint support ---------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        if not self._counts:
            return {"keys": np.zeros((0, 0), dtype=np.int16),
                    "values": np.zeros(0, dtype=np.int64)}
        keys = np.vstack([np.frombuffer(key, dtype=np.int16)
                          for key in self._counts])
        values = np.fromiter(self._counts.values(), dtype=np.int64,
                             count=len(self._counts))
        return {"keys": keys, "values": values}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self._counts = {}
        for row, value in zip(arrays["keys"], arrays["values"]):
            self._counts[np.ascontiguousarray(row, dtype=np.int16).tobytes()] = int(value)
