"""End-to-end segmentation pipelines: RFM, PPS and the two-stage SM method."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import features as feat
from .features import FeatureMatrix, QuantileSpec
from .kmeans import ClusterModel, assign, kmeans_fit
from .txmodel import Dataset, ValidationError, build_histories
from .validity import between_variance_ratio, davies_bouldin

STAGE2_SEED_OFFSET = 7919
DEFAULT_DOMINANCE_THRESHOLD = 0.30


class PipelineError(Exception):
    pass


@dataclass
class SegmentationReport:
    assignment: dict  # entity_id -> cluster index
    shares: dict  # cluster index -> fraction of entities
    centers: np.ndarray  # clusters x features
    feature_schema: list
    cluster_labels: list  # human-readable names, len = n clusters
    metrics: dict

    def write(self, out_dir, prefix):
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / f"{prefix}_assignments.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["entity_id", "cluster"])
            for eid in sorted(self.assignment):
                writer.writerow([eid, self.assignment[eid]])
        with open(out_dir / f"{prefix}_shares.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["cluster", "label", "share"])
            for c in sorted(self.shares):
                writer.writerow(
                    [c, self.cluster_labels[c], repr(self.shares[c])]
                )
        with open(out_dir / f"{prefix}_centers.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["cluster", "label"] + list(self.feature_schema))
            for c, row in enumerate(self.centers):
                writer.writerow(
                    [c, self.cluster_labels[c]] + [repr(v) for v in row]
                )
        with open(out_dir / f"{prefix}_metrics.json", "w") as f:
            json.dump(self.metrics, f, indent=2)


def _shares(assignment: dict, n_clusters: int) -> dict:
    counts = {c: 0 for c in range(n_clusters)}
    for c in assignment.values():
        counts[c] += 1
    n = len(assignment)
    return {c: counts[c] / n for c in counts}


def label_clusters(
    centers, feature_names, threshold=DEFAULT_DOMINANCE_THRESHOLD
) -> list:
    """Name each cluster after its dominant feature, or "General" if none
    exceeds the dominance threshold."""
    labels = []
    for row in centers:
        top = int(np.argmax(row))
        if row[top] > threshold:
            labels.append(f"Specialized -- {feature_names[top]}")
        else:
            labels.append("General")
    return labels


def _report_from_fit(
    matrix, model, assignment, ratio_features: bool, dominance_threshold
) -> SegmentationReport:
    metrics = {"k": model.k, "inertia": model.inertia, "seed": model.seed}
    if model.k >= 2:
        metrics["between_variance_ratio"] = between_variance_ratio(
            matrix, assignment
        )
        metrics["davies_bouldin"] = davies_bouldin(matrix, assignment)
    if ratio_features:
        labels = label_clusters(
            model.centers, matrix.schema, dominance_threshold
        )
    else:
        labels = [f"C{c + 1:02d}" for c in range(model.k)]
    return SegmentationReport(
        assignment=assignment,
        shares=_shares(assignment, model.k),
        centers=model.centers,
        feature_schema=list(matrix.schema),
        cluster_labels=labels,
        metrics=metrics,
    )


def _zscore(matrix: FeatureMatrix) -> FeatureMatrix:
    std = matrix.X.std(axis=0)
    std[std == 0] = 1.0
    return FeatureMatrix(
        ids=matrix.ids,
        X=(matrix.X - matrix.X.mean(axis=0)) / std,
        schema=matrix.schema,
    )


def load_expert_bounds(path) -> dict:
    """Expert RFM bin edges: JSON {"recency_days": [...], ...}, strictly
    increasing per dimension."""
    with open(path) as f:
        bounds = json.load(f)
    for dim in ("recency_days", "frequency", "monetary"):
        edges = bounds.get(dim, [])
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise PipelineError(
                f"bin edges for {dim} are not strictly increasing: {edges}"
            )
    return bounds


def run_rfm(
    dataset: Dataset,
    k: int | None = None,
    seed: int = 0,
    mode: str = "kmeans",
    bounds: dict | None = None,
    standardize: bool = True,
    **fit_kwargs,
) -> SegmentationReport:
    """RFM segmentation: k-means on (recency, frequency, monetary) vectors,
    or expert threshold binning."""
    histories = build_histories(dataset.baskets)
    matrix = feat.rfm_features(histories, dataset.window)
    if mode == "kmeans":
        if k is None:
            raise PipelineError("kmeans mode requires k")
        fit_matrix = _zscore(matrix) if standardize else matrix
        model, assignment = kmeans_fit(fit_matrix, k, seed=seed, **fit_kwargs)
        # Report centers in raw feature units for interpretability.
        raw_centers = np.array(
            [
                matrix.X[[assignment[e] == c for e in matrix.ids]].mean(axis=0)
                for c in range(k)
            ]
        )
        report = _report_from_fit(
            fit_matrix, model, assignment, False, DEFAULT_DOMINANCE_THRESHOLD
        )
        report.centers = raw_centers
        report.feature_schema = list(matrix.schema)
        return report
    if mode == "expert":
        if bounds is None:
            raise PipelineError("expert mode requires a bounds file")
        return _run_rfm_expert(matrix, bounds)
    raise PipelineError(f"unknown RFM mode {mode!r}")


def _run_rfm_expert(matrix: FeatureMatrix, bounds: dict) -> SegmentationReport:
    dims = ["recency_days", "frequency", "monetary"]
    edges = [np.asarray(bounds.get(d, []), dtype=float) for d in dims]
    n_bins = [len(e) + 1 for e in edges]
    bins = np.stack(
        [np.digitize(matrix.X[:, i], edges[i]) for i in range(3)], axis=1
    )
    segment = bins[:, 0] * n_bins[1] * n_bins[2] + bins[:, 1] * n_bins[2] + bins[:, 2]
    n_segments = n_bins[0] * n_bins[1] * n_bins[2]
    assignment = {eid: int(s) for eid, s in zip(matrix.ids, segment)}
    centers = np.zeros((n_segments, 3))
    for c in range(n_segments):
        mask = segment == c
        if mask.any():
            centers[c] = matrix.X[mask].mean(axis=0)
    labels = []
    for c in range(n_segments):
        r, rem = divmod(c, n_bins[1] * n_bins[2])
        fq, m = divmod(rem, n_bins[2])
        labels.append(f"rec{r}|frq{fq}|mon{m}")
    return SegmentationReport(
        assignment=assignment,
        shares=_shares(assignment, n_segments),
        centers=centers,
        feature_schema=list(matrix.schema),
        cluster_labels=labels,
        metrics={"k": n_segments, "mode": "expert"},
    )


def run_pps(
    dataset: Dataset,
    k: int,
    seed: int = 0,
    dominance_threshold: float = DEFAULT_DOMINANCE_THRESHOLD,
    **fit_kwargs,
) -> SegmentationReport:
    """PPS segmentation: k-means on per-customer category spend ratios."""
    histories = build_histories(dataset.baskets)
    matrix = feat.pps_features(histories, dataset.category_ids)
    model, assignment = kmeans_fit(matrix, k, seed=seed, **fit_kwargs)
    return _report_from_fit(
        matrix, model, assignment, True, dominance_threshold
    )


@dataclass
class SmPipelineModel:
    q95: QuantileSpec
    basket_model: ClusterModel
    customer_model: ClusterModel
    category_ids: list
    value_weight: float
    dataset_fingerprint: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "q95": self.q95.q95,
                "value_weight": self.value_weight,
                "category_ids": self.category_ids,
                "dataset_fingerprint": self.dataset_fingerprint,
                "basket_model": json.loads(self.basket_model.to_json()),
                "customer_model": json.loads(self.customer_model.to_json()),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SmPipelineModel":
        doc = json.loads(text)
        return cls(
            q95=QuantileSpec(q95=doc["q95"]),
            basket_model=ClusterModel.from_json(
                json.dumps(doc["basket_model"])
            ),
            customer_model=ClusterModel.from_json(
                json.dumps(doc["customer_model"])
            ),
            category_ids=doc["category_ids"],
            value_weight=doc["value_weight"],
            dataset_fingerprint=doc["dataset_fingerprint"],
        )


def run_sm(
    dataset: Dataset,
    k_b: int,
    k_sm: int,
    seed: int = 0,
    value_weight: float = 1.0,
    dominance_threshold: float = DEFAULT_DOMINANCE_THRESHOLD,
    **fit_kwargs,
):
    """Two-stage shopping-mission segmentation.

    Stage 1 clusters baskets on category ratios plus the q95-clipped value
    coordinate; stage 2 clusters customers on their ratios of stage-1
    basket archetypes. Returns (SmPipelineModel, basket report, customer
    report).
    """
    q = feat.compute_q95(dataset.baskets)
    basket_matrix = feat.basket_sm_features(
        dataset.baskets, dataset.category_ids, q, value_weight
    )
    basket_model, basket_assignment = kmeans_fit(
        basket_matrix, k_b, seed=seed, **fit_kwargs
    )

    histories = build_histories(dataset.baskets)
    customer_matrix = feat.customer_sm_features(
        histories, basket_assignment, k_b
    )
    row_sums = customer_matrix.X.sum(axis=1)
    assert np.allclose(row_sums, 1.0, atol=1e-9), "stage-2 rows must be unit-sum"

    n_distinct = np.unique(customer_matrix.X, axis=0).shape[0]
    if k_sm > n_distinct:
        warnings.warn(
            f"stage 2 has only {n_distinct} distinct customer vectors; "
            f"reducing k_sm from {k_sm} to {n_distinct}"
        )
        k_sm = n_distinct
    customer_model, customer_assignment = kmeans_fit(
        customer_matrix, k_sm, seed=seed + STAGE2_SEED_OFFSET, **fit_kwargs
    )

    sm_model = SmPipelineModel(
        q95=q,
        basket_model=basket_model,
        customer_model=customer_model,
        category_ids=list(dataset.category_ids),
        value_weight=value_weight,
        dataset_fingerprint=dataset.fingerprint(),
    )
    basket_report = _report_from_fit(
        basket_matrix, basket_model, basket_assignment, True,
        dominance_threshold,
    )
    customer_report = _report_from_fit(
        customer_matrix, customer_model, customer_assignment, True,
        dominance_threshold,
    )
    return sm_model, basket_report, customer_report


def score(model: SmPipelineModel, dataset: Dataset) -> dict:
    """Assign new customers to SM segments with the frozen trained model.

    q95 is reused from training, never recomputed, so the value axis is
    stable over time.
    """
    unknown = set(dataset.category_ids) - set(model.category_ids)
    if unknown:
        raise ValidationError(
            f"dataset has categories unknown to the model: {sorted(unknown)}"
        )
    # Project onto the training category axis (missing categories -> 0).
    basket_matrix = feat.basket_sm_features(
        dataset.baskets, model.category_ids, model.q95, model.value_weight
    )
    basket_assignment = assign(model.basket_model, basket_matrix)
    histories = build_histories(dataset.baskets)
    customer_matrix = feat.customer_sm_features(
        histories, basket_assignment, model.basket_model.k
    )
    return assign(model.customer_model, customer_matrix)
