"""Feature vectors for the three segmentations.

RFM per customer, category-spend ratios per customer (PPS), basket vectors
with a quantile-clipped value coordinate, and customer vectors of basket
archetype ratios.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .txmodel import AnalysisWindow, ValidationError

MIN_BASKETS_FOR_Q95 = 20


class FeatureError(Exception):
    pass


@dataclass
class FeatureMatrix:
    """Dense feature rows keyed by entity id, sorted by id."""

    ids: list
    X: np.ndarray  # shape (n, d)
    schema: list  # column names, length d

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2 or self.X.shape != (len(self.ids), len(self.schema)):
            raise FeatureError(
                f"shape {self.X.shape} inconsistent with "
                f"{len(self.ids)} ids x {len(self.schema)} features"
            )

    @classmethod
    def from_mapping(cls, mapping, schema):
        ids = sorted(mapping)
        X = np.array([mapping[i] for i in ids], dtype=float)
        if not ids:
            X = X.reshape(0, len(schema))
        return cls(ids=ids, X=X, schema=list(schema))

    def row(self, entity_id):
        return self.X[self.ids.index(entity_id)]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["entity_id"] + list(self.schema))
            for i, eid in enumerate(self.ids):
                writer.writerow([eid] + [repr(v) for v in self.X[i]])


@dataclass(frozen=True)
class QuantileSpec:
    q95: float

    def __post_init__(self):
        if not self.q95 > 0:
            raise FeatureError(f"q95 must be positive, got {self.q95}")


def rfm_features(histories, window: AnalysisWindow) -> FeatureMatrix:
    """Recency (days since last purchase), frequency and spend per day."""
    rows = {}
    for cid, history in histories.items():
        recency = min(
            (window.end - b.timestamp.date()).days for b in history.baskets
        )
        n = len(history.baskets)
        rows[cid] = [
            float(recency),
            n / window.length_days,
            history.value_cents / 100.0 / window.length_days,
        ]
    return FeatureMatrix.from_mapping(
        rows, ["recency_days", "frequency", "monetary"]
    )


def pps_features(histories, category_ids) -> FeatureMatrix:
    """Per-customer spend share in each category; rows sum to 1."""
    cat_index = {c: i for i, c in enumerate(category_ids)}
    rows = {}
    for cid, history in histories.items():
        spend = np.zeros(len(category_ids))
        for basket in history.baskets:
            for line in basket.lines:
                spend[cat_index[line.category_id]] += line.value_cents
        total = spend.sum()
        if total <= 0:
            raise ValidationError(f"customer {cid!r} has zero total spend")
        rows[cid] = spend / total
    return FeatureMatrix.from_mapping(
        rows, [f"cat:{c}" for c in category_ids]
    )


def compute_q95(baskets) -> QuantileSpec:
    """95% sample quantile (linear interpolation) of basket values."""
    if len(baskets) < MIN_BASKETS_FOR_Q95:
        raise FeatureError(
            f"need at least {MIN_BASKETS_FOR_Q95} baskets for the 95% "
            f"quantile, got {len(baskets)}"
        )
    values = np.array([b.value for b in baskets])
    return QuantileSpec(q95=float(np.quantile(values, 0.95)))


def basket_sm_features(
    baskets, category_ids, q: QuantileSpec, value_weight: float = 1.0
) -> FeatureMatrix:
    """Category-ratio simplex coordinates plus the clipped value coordinate.

    The value coordinate is min(value / q95, 1) scaled by ``value_weight``
    (default 1.0: structure and value enter with similar weight).
    """
    cat_index = {c: i for i, c in enumerate(category_ids)}
    rows = {}
    for basket in baskets:
        spend = np.zeros(len(category_ids))
        for line in basket.lines:
            spend[cat_index[line.category_id]] += line.value_cents
        total = spend.sum()
        ratios = spend / total
        value_coord = min(basket.value / q.q95, 1.0)
        rows[basket.basket_id] = np.append(ratios, value_weight * value_coord)
    return FeatureMatrix.from_mapping(
        rows, [f"cat:{c}" for c in category_ids] + ["value"]
    )


def customer_sm_features(histories, basket_assignments, k_b) -> FeatureMatrix:
    """Per-customer ratios of basket archetypes; rows sum to 1."""
    rows = {}
    for cid, history in histories.items():
        counts = np.zeros(k_b)
        for basket in history.baskets:
            if basket.basket_id not in basket_assignments:
                raise FeatureError(
                    f"basket {basket.basket_id!r} has no archetype assignment"
                )
            cluster = basket_assignments[basket.basket_id]
            if not 0 <= cluster < k_b:
                raise FeatureError(
                    f"basket {basket.basket_id!r} assigned to cluster "
                    f"{cluster}, outside [0, {k_b})"
                )
            counts[cluster] += 1
        rows[cid] = counts / counts.sum()
    return FeatureMatrix.from_mapping(
        rows, [f"archetype:{j}" for j in range(k_b)]
    )
