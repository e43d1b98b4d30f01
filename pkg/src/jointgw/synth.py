"""Synthetic matching instances: noisy spirals, split shapes, rigid fragments,
and empirical resampling of a reference space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .align import RigidTransform
from .spaces import Cluster, ClusteredSpace, build_clustered_space, euclidean_distance_matrix

__all__ = [
    "SpiralSpec",
    "RigidGroundTruth",
    "gen_spiral_pair",
    "gen_dummy_cluster_wrap",
    "gen_split_shape",
    "gen_shape_trio",
    "gen_rigid_fragments",
    "sample_empirical",
]


@dataclass(frozen=True)
class SpiralSpec:
    """Parameters of the noisy-spiral partial matching instance.

    The curve is r = growth * theta over ``spiral_turns`` full turns,
    sampled uniformly by arc length; noise points are isotropic Gaussians
    of scale ``noise_sigma``.  The default growth keeps the curve's bulk
    well outside the noise blob: when the innermost turn sinks into the
    blob, mixing part of the arm into the noise is genuinely cheaper than
    the clean matching and no solver can reach a small leak.
    """

    n_spiral: int = 200
    n_noise: int = 100
    noise_sigma: float = 1.0
    spiral_turns: float = 2.0
    jitter_sigma: float = 0.05
    seed: int = 0
    growth: float = 1.5

    def validate(self):
        if self.n_spiral < 0 or self.n_noise < 0:
            raise ValueError("point counts must be nonnegative")
        if self.n_spiral + self.n_noise < 1:
            raise ValueError("at least one nonempty component is required")
        if self.noise_sigma <= 0 or self.spiral_turns <= 0 or self.growth <= 0:
            raise ValueError("noise_sigma, spiral_turns and growth must be positive")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be nonnegative")
        return self


def _spiral_points(rng, n, spec):
    theta_max = 2.0 * np.pi * spec.spiral_turns
    # uniform arc-length sampling: invert the cumulative speed numerically
    grid = np.linspace(0.0, theta_max, 4096)
    speed = spec.growth * np.sqrt(1.0 + grid**2)
    arclen = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(grid))])
    theta = np.interp(rng.uniform(0.0, arclen[-1], size=n), arclen, grid)
    radius = spec.growth * theta
    pts = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    if spec.jitter_sigma > 0:
        pts = pts + rng.normal(0.0, spec.jitter_sigma, size=pts.shape)
    return pts


def gen_spiral_pair(spec: SpiralSpec):
    """Source spiral versus an independently sampled spiral plus noise.

    Returns (source, target, noise_mask): both spaces are single-cluster,
    the mask marks exactly the Gaussian noise points of the target.
    Deterministic per seed.
    """
    spec.validate()
    if spec.n_spiral < 1:
        raise ValueError("gen_spiral_pair requires at least one spiral point")
    rng = np.random.default_rng(spec.seed)
    src_pts = _spiral_points(rng, spec.n_spiral, spec)
    tgt_spiral = _spiral_points(rng, spec.n_spiral, spec)
    noise = rng.normal(0.0, spec.noise_sigma, size=(spec.n_noise, 2))
    tgt_pts = np.vstack([tgt_spiral, noise]) if spec.n_noise else tgt_spiral
    noise_mask = np.zeros(tgt_pts.shape[0], dtype=bool)
    noise_mask[spec.n_spiral:] = True
    source = build_clustered_space([src_pts])
    target = build_clustered_space([tgt_pts])
    return source, target, noise_mask


def gen_dummy_cluster_wrap(source: ClusteredSpace, retained_mass: float) -> ClusteredSpace:
    """Attach a one-point zero-distance cluster absorbing the mass deficit.

    The original single cluster keeps ``retained_mass``; a dummy singleton
    takes the remainder, so a partial query can be coupled against a full
    target without unbalancing the marginals.
    """
    if not (0.0 < retained_mass < 1.0):
        raise ValueError(f"retained_mass must lie strictly in (0, 1), got {retained_mass}")
    if source.n_clusters != 1:
        raise ValueError("gen_dummy_cluster_wrap expects a single-cluster space")
    orig = source.clusters[0]
    dummy_points = None
    if orig.points is not None:
        dummy_points = orig.points.mean(axis=0, keepdims=True)
    dummy = Cluster(
        distance=np.zeros((1, 1)),
        measure=np.ones(1),
        label="dummy",
        points=dummy_points,
    )
    return ClusteredSpace(
        clusters=(orig, dummy),
        cluster_masses=np.array([retained_mass, 1.0 - retained_mass]),
    )


def gen_split_shape(points, labels):
    """Split one point set by labels into a clustered space, and keep the whole.

    Returns (split, whole): the split space has one cluster per label in
    first-appearance order, masses proportional to group sizes; the whole
    space is a single cluster over all points in their original order.
    """
    pts = np.asarray(points, dtype=np.float64)
    labels = list(labels)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("points must be a nonempty (n, dim) array")
    if len(labels) != pts.shape[0]:
        raise ValueError("labels length must match the number of points")
    groups: dict = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    for lab, idx in groups.items():
        if len(idx) == 0:
            raise ValueError(f"empty label group {lab!r}")
    sizes = np.array([len(idx) for idx in groups.values()], dtype=np.float64)
    clusters = tuple(
        Cluster(
            distance=euclidean_distance_matrix(pts[idx]),
            measure=np.full(len(idx), 1.0 / len(idx)),
            label=str(lab),
            points=pts[idx],
        )
        for lab, idx in groups.items()
    )
    split = ClusteredSpace(clusters=clusters, cluster_masses=sizes / sizes.sum())
    whole = build_clustered_space([pts])
    return split, whole


def gen_shape_trio(n_per_cluster=40, seed=0, jitter=0.02):
    """Three side-by-side shapes with distinct geometry: bar, ring, blob.

    Returns (points, labels) for feeding :func:`gen_split_shape`.  The
    shapes sit in separate regions and have different distance structures,
    so a whole-versus-split matching has an unambiguous optimum.
    """
    if n_per_cluster < 1:
        raise ValueError("n_per_cluster must be at least 1")
    rng = np.random.default_rng(seed)
    n = n_per_cluster
    t = np.linspace(0.0, 1.0, n)
    bar = np.column_stack([np.zeros(n), 2.0 * t - 1.0])
    ang = 2.0 * np.pi * t
    ring = np.column_stack([3.0 + 0.8 * np.cos(ang), 0.8 * np.sin(ang)])
    blob = rng.uniform(-0.7, 0.7, size=(n, 2)) + np.array([6.0, 0.0])
    pts = np.vstack([bar, ring, blob])
    if jitter > 0:
        pts = pts + rng.normal(0.0, jitter, size=pts.shape)
    labels = ["bar"] * n + ["ring"] * n + ["blob"] * n
    return pts, labels


@dataclass(frozen=True)
class RigidGroundTruth:
    """Generator-side truth for a rigid assembly instance."""

    transforms: tuple[RigidTransform, ...]
    target_indices: np.ndarray  # target index of each source point, offset order


def gen_rigid_fragments(fragments, transforms, seed=0, jitter_sigma=0.0):
    """Rigid assembly instance: fragment clusters versus their moved union.

    ``fragments`` are (n_i, d) coordinate arrays in their own frames;
    ``transforms`` the proper rigid motions placing each into the assembled
    frame.  The target is the single-cluster union of the moved fragments,
    optionally with Gaussian jitter.  Ground truth keeps the transforms and
    the source-to-target index correspondence.
    """
    if len(fragments) == 0 or len(fragments) != len(transforms):
        raise ValueError("need one transform per fragment")
    trs = []
    for tr in transforms:
        if not isinstance(tr, RigidTransform):
            tr = RigidTransform(rotation=np.asarray(tr[0]), translation=np.asarray(tr[1]))
        trs.append(tr)

    rng = np.random.default_rng(seed)
    moved = []
    for pts, tr in zip(fragments, trs):
        pts = np.asarray(pts, dtype=np.float64)
        if pts.shape[1] != trs[0].dim:
            raise ValueError("fragment dimension does not match the transforms")
        moved.append(tr.apply(pts))
    tgt_pts = np.vstack(moved)
    if jitter_sigma > 0:
        tgt_pts = tgt_pts + rng.normal(0.0, jitter_sigma, size=tgt_pts.shape)

    source = build_clustered_space(list(fragments))
    target = build_clustered_space([tgt_pts])
    truth = RigidGroundTruth(
        transforms=tuple(trs),
        target_indices=np.arange(tgt_pts.shape[0]),
    )
    return source, target, truth


def sample_empirical(space: ClusteredSpace, n: int, seed=0, max_attempts=1000) -> ClusteredSpace:
    """Empirical resampling: n i.i.d. draws, cluster by mass then point by measure.

    Cluster masses are kept; each sampled cluster gets the uniform measure
    on its drawn multiset.  Draws leaving any cluster empty are rejected
    and retried with an incremented seed.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    k = space.n_clusters
    if n < k:
        raise ValueError(f"n = {n} cannot cover {k} clusters")
    for attempt in range(max_attempts):
        rng = np.random.default_rng(seed + attempt)
        picks = rng.choice(k, size=n, p=space.cluster_masses)
        counts = np.bincount(picks, minlength=k)
        if np.all(counts > 0):
            break
    else:
        raise RuntimeError(f"no draw covered all clusters after {max_attempts} attempts")

    clusters = []
    for j, cluster in enumerate(space.clusters):
        idx = rng.choice(cluster.size, size=int(counts[j]), p=cluster.measure)
        clusters.append(
            Cluster(
                distance=cluster.distance[np.ix_(idx, idx)],
                measure=np.full(len(idx), 1.0 / len(idx)),
                label=cluster.label,
                points=None if cluster.points is None else cluster.points[idx],
            )
        )
    return ClusteredSpace(clusters=tuple(clusters), cluster_masses=space.cluster_masses)
