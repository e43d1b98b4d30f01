"""Evaluation measures for couplings: cluster mass accounting, noise leakage,
row concentration, and graph-geodesic correspondence error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .spaces import ClusteredSpace, Coupling

__all__ = [
    "ClusterMassMatrix",
    "cluster_mass_matrix",
    "correct_mass_fraction",
    "noise_mass_fraction",
    "row_variance_profile",
    "build_knn_graph",
    "bounding_box_normalizer",
    "GeodesicErrorCDF",
    "geodesic_error_cdf",
]


def _plan(mu):
    return mu.plan if isinstance(mu, Coupling) else np.asarray(mu, dtype=np.float64)


@dataclass(frozen=True)
class ClusterMassMatrix:
    """Coupling mass aggregated to cluster level; entry (i, j) is the total
    mass flowing from source cluster i to target cluster j."""

    values: np.ndarray


def cluster_mass_matrix(mu, source: ClusteredSpace, target: ClusteredSpace) -> ClusterMassMatrix:
    """Aggregate a plan into a k_source x k_target block-mass matrix."""
    plan = _plan(mu)
    if plan.shape != (source.n_points, target.n_points):
        raise ValueError(f"plan shape {plan.shape} does not match the spaces")
    src_off = np.concatenate([[0], np.cumsum([c.size for c in source.clusters])])[:-1]
    tgt_off = np.concatenate([[0], np.cumsum([c.size for c in target.clusters])])[:-1]
    rows = np.add.reduceat(plan, src_off, axis=0)
    values = np.add.reduceat(rows, tgt_off, axis=1)
    total = values.sum()
    if total > 1.0 + 1e-10:
        raise ValueError(f"aggregated mass {total!r} exceeds 1")
    row_gap = np.abs(values.sum(axis=1) - source.cluster_masses).max()
    if row_gap > 1e-8:
        raise ValueError(f"row sums deviate from source cluster masses by {row_gap:.3e}")
    return ClusterMassMatrix(values=values)


def correct_mass_fraction(mu, target: ClusteredSpace, ground_truth) -> float:
    """Mass landing in each source point's ground-truth target cluster.

    ``ground_truth`` assigns every source point the target cluster it
    should map into, by integer index or by cluster label.
    """
    plan = _plan(mu)
    if plan.shape[1] != target.n_points:
        raise ValueError("plan width does not match the target space")
    labels = [c.label for c in target.clusters]
    ground_truth = list(ground_truth)
    if len(ground_truth) != plan.shape[0]:
        raise ValueError("ground truth must label every source point")
    idx = np.empty(plan.shape[0], dtype=np.int64)
    for i, g in enumerate(ground_truth):
        if g is None:
            raise ValueError(f"source point {i} is unlabeled")
        if isinstance(g, (int, np.integer)):
            j = int(g)
            if not 0 <= j < target.n_clusters:
                raise ValueError(f"source point {i}: target cluster index {j} out of range")
        else:
            if str(g) not in labels:
                raise ValueError(f"source point {i}: unknown target cluster label {g!r}")
            j = labels.index(str(g))
        idx[i] = j
    tgt_off = np.concatenate([[0], np.cumsum([c.size for c in target.clusters])])[:-1]
    per_cluster = np.add.reduceat(plan, tgt_off, axis=1)
    return float(per_cluster[np.arange(plan.shape[0]), idx].sum())


def noise_mass_fraction(mu, noise_mask, row_mask=None) -> float:
    """Fraction of (selected rows') mass landing on masked target points.

    ``row_mask`` restricts the accounting to the rows of interest, e.g. the
    non-dummy cluster of a wrapped partial query; by default all rows count.
    """
    plan = _plan(mu)
    noise_mask = np.asarray(noise_mask, dtype=bool)
    if noise_mask.shape != (plan.shape[1],):
        raise ValueError(f"noise mask length {noise_mask.shape} does not match plan width")
    rows = plan if row_mask is None else plan[np.asarray(row_mask, dtype=bool)]
    denom = rows.sum()
    if denom <= 0:
        return 0.0
    return float(rows[:, noise_mask].sum() / denom)


def row_variance_profile(mu):
    """Per-source-point spread of the conditional transport distribution.

    Each row is normalized to sum 1 and its population variance taken;
    zero-mass rows yield the sentinel 0.  Returns (variances, mean).
    """
    plan = _plan(mu)
    sums = plan.sum(axis=1)
    variances = np.zeros(plan.shape[0])
    alive = sums > 0
    if np.any(alive):
        cond = plan[alive] / sums[alive, None]
        variances[alive] = cond.var(axis=1)
    return variances, float(variances.mean())


def build_knn_graph(points, k=8) -> csr_matrix:
    """Symmetric k-nearest-neighbor graph with Euclidean edge weights."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n < 2:
        raise ValueError("need at least two points for a neighbor graph")
    k = min(k, n - 1)
    dist, nbr = cKDTree(pts).query(pts, k=k + 1)
    rows = np.repeat(np.arange(n), k)
    cols = nbr[:, 1:].ravel()
    vals = dist[:, 1:].ravel()
    # keep coincident-point edges: explicit zeros are dropped by csgraph
    vals = np.maximum(vals, 1e-300)
    graph = csr_matrix((vals, (rows, cols)), shape=(n, n))
    return graph.maximum(graph.T)


def bounding_box_normalizer(points) -> float:
    """Square root of the bounding-box area, a mesh-area stand-in.

    For 3D clouds the two largest extents approximate the surface patch.
    """
    pts = np.asarray(points, dtype=np.float64)
    extents = np.sort(pts.max(axis=0) - pts.min(axis=0))[::-1]
    area = float(extents[0] * extents[1]) if extents.shape[0] >= 2 else float(extents[0] ** 2)
    return float(np.sqrt(area)) if area > 0 else 1.0


@dataclass(frozen=True)
class GeodesicErrorCDF:
    """Cumulative distribution of normalized geodesic correspondence errors.

    ``thresholds`` are the sorted distinct finite errors, ``fractions`` the
    fraction of all evaluated points at or below each; points whose
    predicted and true targets are graph-disconnected are excluded from
    the curve and counted in ``infinite_fraction``.
    """

    errors: np.ndarray
    thresholds: np.ndarray
    fractions: np.ndarray

    @property
    def infinite_fraction(self) -> float:
        return float(np.mean(~np.isfinite(self.errors)))

    def fraction_at(self, threshold) -> float:
        """Fraction of points with finite error at or below the threshold."""
        return float(np.mean(np.isfinite(self.errors) & (self.errors <= threshold)))

    def pairs(self):
        return list(zip(self.thresholds.tolist(), self.fractions.tolist()))


def geodesic_error_cdf(coupling, target_graph, ground_truth, normalizer) -> GeodesicErrorCDF:
    """Geodesic distance between predicted and true targets, as a CDF.

    Predictions harden each plan row to its argmax column (ties to the
    lowest index); errors are shortest-path distances on the target graph
    divided by ``normalizer``.
    """
    plan = _plan(coupling)
    gt = np.asarray(ground_truth, dtype=np.int64)
    if gt.shape != (plan.shape[0],):
        raise ValueError("ground truth must give one target index per source point")
    if normalizer <= 0:
        raise ValueError("normalizer must be positive")
    predicted = np.argmax(plan, axis=1)
    uniq, inverse = np.unique(predicted, return_inverse=True)
    dist = dijkstra(target_graph, directed=False, indices=uniq)
    errors = dist[inverse, gt] / normalizer
    finite = errors[np.isfinite(errors)]
    thresholds = np.unique(finite)
    fractions = np.array([np.mean(errors <= t) for t in thresholds])
    return GeodesicErrorCDF(errors=errors, thresholds=thresholds, fractions=fractions)
