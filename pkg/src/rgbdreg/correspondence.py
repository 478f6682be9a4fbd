"""Feature-space matching between two point clouds.

Matching runs in both directions (P queried against Q and Q against P),
weighs each match by the two-nearest-neighbor distance ratio, and keeps
the top k/2 per direction. Distances are cosine distances on the unit
feature vectors, ``D = 1 - <a, b>``, floored at 0 against rounding.

All tie rules are fixed so results are reproducible: nearest-neighbor
ties go to the lower point index, selection-boundary ties to the lower
source index within a direction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .descriptor import FeaturePointCloud
from .errors import ConfigError, InsufficientPointsError, NoCorrespondencesError

logger = logging.getLogger(__name__)

DIRECTION_P_TO_Q = 0
DIRECTION_Q_TO_P = 1
_DIRECTION_LABELS = {DIRECTION_P_TO_Q: "p2q", DIRECTION_Q_TO_P: "q2p"}

RATIO_EPS = 1e-12
_QUERY_CHUNK = 2048


@dataclass(frozen=True)
class CorrespondenceSet:
    """Matched point pairs with confidence weights.

    ``p_positions`` are points of the first cloud (P), ``q_positions``
    of the second (Q), regardless of which matching direction produced
    the entry; ``direction`` records the provenance. Weights lie in
    [0, 1] and are consumed as-is by the fitting stage.
    """

    p_positions: np.ndarray  # (n, 3)
    q_positions: np.ndarray  # (n, 3)
    weights: np.ndarray  # (n,)
    direction: np.ndarray  # (n,) int8, DIRECTION_* constants
    p_indices: np.ndarray  # (n,) int64, point index in cloud P
    q_indices: np.ndarray  # (n,) int64, point index in cloud Q
    shortfall: tuple[int, int] = (0, 0)  # unmet quota per direction

    def __post_init__(self):
        n = self.weights.shape[0]
        if self.p_positions.shape != (n, 3) or self.q_positions.shape != (n, 3):
            raise ConfigError("correspondence arrays disagree on length")
        if n and (self.weights.min() < 0.0 or self.weights.max() > 1.0):
            raise ConfigError("correspondence weights must lie in [0, 1]")

    def __len__(self) -> int:
        return self.weights.shape[0]

    def take(self, indices: np.ndarray) -> "CorrespondenceSet":
        """Entry subset, preserving order of ``indices``."""
        idx = np.asarray(indices)
        return replace(
            self,
            p_positions=self.p_positions[idx],
            q_positions=self.q_positions[idx],
            weights=self.weights[idx],
            direction=self.direction[idx],
            p_indices=self.p_indices[idx],
            q_indices=self.q_indices[idx],
            shortfall=(0, 0),
        )

    def with_weights(self, weights: np.ndarray) -> "CorrespondenceSet":
        return replace(self, weights=np.asarray(weights, dtype=np.float64))


def two_nearest(
    query_features: np.ndarray, target_cloud: FeaturePointCloud
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Two nearest valid targets per query, by cosine distance.

    Returns ``(index1, dist1, index2, dist2)`` with ``dist1 <= dist2``;
    indices refer to points of ``target_cloud``. Ties resolve to the
    lowest point index. Equivalent to exhaustive search by construction.
    """
    target_idx = target_cloud.valid_indices
    if target_idx.size < 2:
        raise InsufficientPointsError(
            f"need at least 2 valid target points, have {target_idx.size}"
        )
    targets = target_cloud.features[target_idx].astype(np.float64)
    queries = np.asarray(query_features, dtype=np.float64)
    n = queries.shape[0]

    best_i = np.empty(n, dtype=np.int64)
    best_d = np.empty(n, dtype=np.float64)
    second_i = np.empty(n, dtype=np.int64)
    second_d = np.empty(n, dtype=np.float64)
    rows = np.arange(min(_QUERY_CHUNK, n))
    for start in range(0, n, _QUERY_CHUNK):
        stop = min(start + _QUERY_CHUNK, n)
        dist = np.maximum(1.0 - queries[start:stop] @ targets.T, 0.0)
        r = rows[: stop - start]
        d1 = dist.min(axis=1)
        i1 = np.argmax(dist == d1[:, None], axis=1)
        dist[r, i1] = np.inf
        d2 = dist.min(axis=1)
        i2 = np.argmax(dist == d2[:, None], axis=1)
        best_i[start:stop] = target_idx[i1]
        best_d[start:stop] = d1
        second_i[start:stop] = target_idx[i2]
        second_d[start:stop] = d2
    return best_i, best_d, second_i, second_d


def ratio_weight(dist1, dist2):
    """Weight a match by one minus the nearest/second-nearest distance ratio.

    Fully ambiguous matches (dist1 == dist2) get weight 0, perfectly
    unique ones (dist1 == 0) weight 1. A vanishing second distance
    (below 1e-12) also yields 0: the match carries no evidence.
    """
    d1 = np.asarray(dist1, dtype=np.float64)
    d2 = np.asarray(dist2, dtype=np.float64)
    if (d1 < 0).any() or (d1 > d2).any():
        raise ConfigError("ratio_weight requires 0 <= dist1 <= dist2")
    safe = np.where(d2 < RATIO_EPS, 1.0, d2)
    w = np.where(d2 < RATIO_EPS, 0.0, 1.0 - d1 / safe)
    return w if w.ndim else float(w)


def distance_weight(dist1):
    """Rank matches by feature distance alone (the no-ratio-test variant)."""
    return np.clip(1.0 - np.asarray(dist1, dtype=np.float64), 0.0, 1.0)


def _directional_candidates(
    source: FeaturePointCloud, target: FeaturePointCloud, weighting: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Match every valid source point; returns (source_idx, target_idx, weights)."""
    source_idx = source.valid_indices
    if source_idx.size == 0:
        return source_idx, source_idx.copy(), np.empty(0)
    i1, d1, _, d2 = two_nearest(source.features[source_idx], target)
    if weighting == "ratio":
        weights = ratio_weight(d1, d2)
    elif weighting == "distance":
        weights = distance_weight(d1)
    else:
        raise ConfigError(f"unknown weighting {weighting!r}")
    return source_idx, i1, np.asarray(weights)


def _top_half(source_idx, weights, half):
    order = np.lexsort((source_idx, -weights))
    return order[:half]


def extract_correspondences(
    cloud_p: FeaturePointCloud,
    cloud_q: FeaturePointCloud,
    k: int = 400,
    weighting: str = "ratio",
) -> CorrespondenceSet:
    """Top-k correspondences, half from each matching direction.

    Each direction contributes its k/2 highest-weight matches; a
    direction short on candidates contributes everything it has and the
    shortfall is recorded. Entries found by both directions are kept as
    duplicates (acting as a natural double weight downstream).
    """
    if k < 2 or k % 2:
        raise ConfigError(f"k must be a positive even number, got {k}")
    for name, cloud in (("P", cloud_p), ("Q", cloud_q)):
        if cloud.num_valid < 2:
            raise InsufficientPointsError(
                f"cloud {name} has {cloud.num_valid} valid points, need at least 2"
            )
    half = k // 2

    pq_src, pq_tgt, pq_w = _directional_candidates(cloud_p, cloud_q, weighting)
    qp_src, qp_tgt, qp_w = _directional_candidates(cloud_q, cloud_p, weighting)
    if pq_src.size == 0 and qp_src.size == 0:
        raise NoCorrespondencesError("no correspondence candidates in either direction")

    pq_pick = _top_half(pq_src, pq_w, half)
    qp_pick = _top_half(qp_src, qp_w, half)
    shortfall = (half - pq_pick.size, half - qp_pick.size)
    if any(shortfall):
        logger.warning(
            "correspondence shortfall: %d missing P->Q, %d missing Q->P", *shortfall
        )

    p_indices = np.concatenate([pq_src[pq_pick], qp_tgt[qp_pick]])
    q_indices = np.concatenate([pq_tgt[pq_pick], qp_src[qp_pick]])
    weights = np.concatenate([pq_w[pq_pick], qp_w[qp_pick]])
    direction = np.concatenate(
        [
            np.full(pq_pick.size, DIRECTION_P_TO_Q, dtype=np.int8),
            np.full(qp_pick.size, DIRECTION_Q_TO_P, dtype=np.int8),
        ]
    )
    return CorrespondenceSet(
        p_positions=cloud_p.positions[p_indices],
        q_positions=cloud_q.positions[q_indices],
        weights=weights,
        direction=direction,
        p_indices=p_indices,
        q_indices=q_indices,
        shortfall=shortfall,
    )


def dump_correspondences(matches: CorrespondenceSet, path: Path) -> None:
    """Write the debug text dump: one ``px py pz qx qy qz w dir`` line per entry."""
    lines = []
    for p, q, w, d in zip(
        matches.p_positions, matches.q_positions, matches.weights, matches.direction
    ):
        coords = " ".join(repr(float(x)) for x in (*p, *q))
        lines.append(f"{coords} {float(w)!r} {_DIRECTION_LABELS[int(d)]}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
