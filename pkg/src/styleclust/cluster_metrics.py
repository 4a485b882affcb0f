"""Clustering quality metrics: matched accuracy, IOI, average styles.

Accuracy is computed under the optimal one-to-one matching between the
predicted clusters and the ground-truth classes (Hungarian algorithm on
the padded-square contingency table), so it is invariant to relabeling and
supports a cluster count different from the class count.

IOI is the ratio of inter-cluster to intra-cluster variation of the style
codes in cosine geometry: variation is realized as mean cosine distance
(1 - cosine similarity), intra against each sample's own cluster centroid,
inter between centroid pairs. Higher IOI means more discriminative styles.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment


def cluster_accuracy(pred: np.ndarray, gt: np.ndarray) -> float:
    """Fraction of samples matched under the best cluster-to-class bijection.

    Args:
        pred: predicted cluster indices, shape (N,).
        gt: ground-truth class indices, shape (N,).

    Returns:
        Accuracy in [0, 1].
    """
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if pred.size == 0 or pred.shape != gt.shape:
        raise ValueError("pred/gt must be equal-length, nonempty index arrays")
    side = max(int(pred.max()), int(gt.max())) + 1
    contingency = np.zeros((side, side), dtype=np.int64)
    np.add.at(contingency, (pred, gt), 1)
    rows, cols = linear_sum_assignment(contingency, maximize=True)
    return float(contingency[rows, cols].sum()) / pred.size


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def ioi(styles: np.ndarray, labels: np.ndarray) -> float:
    """Inter/intra cosine-variation ratio of style codes under ``labels``.

    Singleton clusters are excluded from the intra term (with a warning);
    a zero intra term (perfectly tight clusters) returns ``inf``.
    """
    styles = np.asarray(styles, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if styles.ndim != 2 or len(styles) != len(labels):
        raise ValueError("styles must be (N, D) aligned with labels")
    cluster_ids = np.unique(labels)
    if len(cluster_ids) < 2:
        raise ValueError("ioi needs at least two clusters")

    unit = _unit_rows(styles)
    centroids = {}
    intra_terms = []
    for cid in cluster_ids:
        members = unit[labels == cid]
        centroid = members.mean(axis=0)
        centroid = centroid / max(np.linalg.norm(centroid), 1e-12)
        centroids[cid] = centroid
        if len(members) < 2:
            warnings.warn(f"cluster {cid} is a singleton; excluded from intra term")
            continue
        intra_terms.append(1.0 - members @ centroid)
    if not intra_terms:
        raise ValueError("no cluster has two or more members")
    intra = float(np.concatenate(intra_terms).mean())

    cents = np.stack([centroids[c] for c in cluster_ids])
    sims = cents @ cents.T
    iu = np.triu_indices(len(cents), k=1)
    inter = float((1.0 - sims[iu]).mean())

    if intra <= 0.0:
        warnings.warn("degenerate clustering: zero intra-cluster variation")
        return float("inf")
    return inter / intra


def average_style(
    styles: np.ndarray, labels: np.ndarray, n_clusters: int | None = None
) -> np.ndarray:
    """Componentwise mean of the raw style codes per cluster.

    Args:
        styles: (N, D) raw (unnormalized) style codes.
        labels: (N,) cluster indices.
        n_clusters: total cluster count; defaults to ``labels.max() + 1``.

    Returns:
        (n_clusters, D) matrix of average styles, directly usable as the
        generator's style input.

    Raises:
        ValueError: if any cluster in [0, n_clusters) has no members.
    """
    styles = np.asarray(styles, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if n_clusters is None:
        n_clusters = int(labels.max()) + 1
    empty = sorted(set(range(n_clusters)) - set(labels.tolist()))
    if empty:
        raise ValueError(f"empty clusters: {empty}")
    out = np.zeros((n_clusters, styles.shape[1]))
    for cid in range(n_clusters):
        out[cid] = styles[labels == cid].mean(axis=0)
    return out


def export_embeddings(
    styles: np.ndarray,
    pred: np.ndarray,
    path: str | Path,
    true_labels: np.ndarray | None = None,
) -> None:
    """Write style codes plus labels as a tab-separated text file.

    One header row, then one row per sample: the style components, the
    predicted cluster, and (when available) the true label.
    """
    styles = np.asarray(styles)
    pred = np.asarray(pred, dtype=np.int64)
    dim = styles.shape[1]
    header = [f"s{i:03d}" for i in range(dim)] + ["pred"]
    if true_labels is not None:
        header.append("true")
    lines = ["\t".join(header)]
    for i in range(len(styles)):
        row = ["%.8g" % v for v in styles[i]] + [str(int(pred[i]))]
        if true_labels is not None:
            row.append(str(int(true_labels[i])))
        lines.append("\t".join(row))
    Path(path).write_text("\n".join(lines) + "\n")
