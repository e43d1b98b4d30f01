"""Rigid alignment from soft couplings: weighted Procrustes and quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spaces import ClusteredSpace, Coupling

__all__ = [
    "RigidTransform",
    "weighted_procrustes",
    "align_clusters",
    "rotational_error",
    "rmsd",
    "transforms_to_jsonable",
    "transform_from_jsonable",
]


@dataclass(frozen=True)
class RigidTransform:
    """A proper rotation plus translation in 2 or 3 dimensions.

    ``flag`` is None for a clean estimate; degenerate or unmatched inputs
    produce an identity rotation with the reason recorded here.
    """

    rotation: np.ndarray
    translation: np.ndarray
    flag: str | None = None

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        d = r.shape[0]
        if r.shape != (d, d) or d not in (2, 3) or t.shape != (d,):
            raise ValueError(f"bad transform shapes: rotation {r.shape}, translation {t.shape}")
        if np.max(np.abs(r.T @ r - np.eye(d))) > 1e-9:
            raise ValueError("rotation is not orthogonal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation determinant must be +1 (improper rotations rejected)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def dim(self) -> int:
        return self.rotation.shape[0]

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    @classmethod
    def identity(cls, dim, flag=None) -> "RigidTransform":
        return cls(rotation=np.eye(dim), translation=np.zeros(dim), flag=flag)


def weighted_procrustes(source_points, target_points, weights) -> RigidTransform:
    """Best proper rotation and translation under soft pair weights.

    Minimizes the weight-weighted sum of squared residuals between moved
    source points and target points via weighted centroids and an SVD of
    the weighted cross-covariance, with the determinant sign corrected so
    the result is always a rotation, never a reflection.

    Parameters
    ----------
    source_points : ndarray, shape (n_s, d)
    target_points : ndarray, shape (n_t, d)
    weights : ndarray, shape (n_s, n_t)
        Nonnegative pair weights, e.g. a slice of a transport plan.

    Returns
    -------
    RigidTransform
        Flagged with ``"degenerate"`` (identity rotation, centroid shift)
        when the weighted covariance has rank below d - 1.
    """
    src = np.asarray(source_points, dtype=np.float64)
    tgt = np.asarray(target_points, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if src.ndim != 2 or tgt.ndim != 2 or src.shape[1] != tgt.shape[1]:
        raise ValueError("point arrays must be (n, d) with matching d")
    d = src.shape[1]
    if d not in (2, 3):
        raise ValueError(f"only 2- or 3-dimensional points are supported, got d={d}")
    if w.shape != (src.shape[0], tgt.shape[0]):
        raise ValueError(f"weights shape {w.shape} does not match point counts")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("total weight must be positive")

    w_src = w.sum(axis=1)
    w_tgt = w.sum(axis=0)
    c_src = w_src @ src / total
    c_tgt = w_tgt @ tgt / total
    cov = (src - c_src).T @ (w @ (tgt - c_tgt))

    u, sing, vt = np.linalg.svd(cov)
    if sing[d - 2] <= max(sing[0], 1.0) * 1e-12:
        return RigidTransform(
            rotation=np.eye(d), translation=c_tgt - c_src, flag="degenerate"
        )
    sign = np.sign(np.linalg.det(vt.T @ u.T))
    corr = np.ones(d)
    corr[-1] = sign
    rotation = vt.T @ np.diag(corr) @ u.T
    return RigidTransform(rotation=rotation, translation=c_tgt - rotation @ c_src)


def align_clusters(coupling, source: ClusteredSpace, target: ClusteredSpace,
                   harden=False, min_mass=1e-6) -> list[RigidTransform]:
    """One rigid transform per source cluster, fitted from its plan rows.

    Each cluster's rows of the plan weight its points against all target
    points.  With ``harden`` the soft row is collapsed onto its argmax
    column first (ties to the lowest index), carrying the row's mass.
    Clusters whose rows carry less than ``min_mass`` total mass are
    returned as flagged identity transforms (unmatched fragments).
    ``coupling`` may be a Coupling or a bare plan matrix.
    """
    if not (source.has_points and target.has_points):
        raise ValueError("alignment requires retained coordinates on both spaces")
    plan = coupling.plan if isinstance(coupling, Coupling) else np.asarray(coupling, dtype=np.float64)
    tgt_pts = target.all_points()
    if plan.shape != (source.n_points, target.n_points):
        raise ValueError("coupling shape does not match the spaces")

    transforms = []
    start = 0
    for cluster in source.clusters:
        stop = start + cluster.size
        rows = plan[start:stop]
        mass = rows.sum()
        if mass < min_mass:
            transforms.append(RigidTransform.identity(tgt_pts.shape[1], flag="unmatched"))
            start = stop
            continue
        if harden:
            hard = np.zeros_like(rows)
            idx = np.argmax(rows, axis=1)
            hard[np.arange(rows.shape[0]), idx] = rows.sum(axis=1)
            rows = hard
        transforms.append(weighted_procrustes(cluster.points, tgt_pts, rows))
        start = stop
    return transforms


def rotational_error(a: RigidTransform, b: RigidTransform) -> float:
    """Angle, in degrees within [0, 180], between two rotations."""
    if a.dim != b.dim:
        raise ValueError("transforms have different dimensions")
    rel = a.rotation @ b.rotation.T
    if a.dim == 3:
        cos = (np.trace(rel) - 1.0) / 2.0
    else:
        cos = np.trace(rel) / 2.0
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def rmsd(points_a, points_b) -> float:
    """Root-mean-square deviation of two index-paired point sets."""
    pa = np.asarray(points_a, dtype=np.float64)
    pb = np.asarray(points_b, dtype=np.float64)
    if pa.shape != pb.shape:
        raise ValueError(f"point sets differ in shape: {pa.shape} vs {pb.shape}")
    return float(np.sqrt(np.mean(np.sum((pa - pb) ** 2, axis=1))))


def transforms_to_jsonable(transforms, labels=None) -> list[dict]:
    """Serialize transforms as rotation (row-major), translation and cluster label."""
    out = []
    for i, tr in enumerate(transforms):
        entry = {
            "rotation": [list(map(float, row)) for row in tr.rotation],
            "translation": [float(x) for x in tr.translation],
            "cluster": str(labels[i]) if labels is not None else str(i),
        }
        if tr.flag is not None:
            entry["flag"] = tr.flag
        out.append(entry)
    return out


def transform_from_jsonable(entry) -> RigidTransform:
    return RigidTransform(
        rotation=np.asarray(entry["rotation"], dtype=np.float64),
        translation=np.asarray(entry["translation"], dtype=np.float64),
        flag=entry.get("flag"),
    )
