"""Domain types for clustered metric measure spaces and their flat embeddings.

A :class:`ClusteredSpace` is a weighted collection of clusters, each cluster
carrying its own pairwise-distance matrix and probability measure.  The
:func:`embed` operation flattens such a space into a single marginal vector
plus per-cluster distance blocks; the block-diagonal distance matrix and the
block cluster-indicator are never materialized densely, they are implied by
the cluster offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, squareform, pdist

MASS_ATOL = 1e-12


@dataclass(frozen=True)
class Cluster:
    """One component of a clustered space.

    Parameters
    ----------
    distance : ndarray, shape (n, n)
        Symmetric pairwise distances with zero diagonal, nonnegative.
    measure : ndarray, shape (n,)
        Strictly positive weights summing to 1.
    label : str
        Free-form identifier, used in file I/O and reporting.
    points : ndarray of shape (n, dim), optional
        Original coordinates, kept when the cluster was built from a point
        cloud.  Required by alignment and plotting, not by the solver.
    """

    distance: np.ndarray
    measure: np.ndarray
    label: str = ""
    points: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.distance, dtype=np.float64)
        m = np.asarray(self.measure, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"cluster {self.label!r}: distance must be square, got {d.shape}")
        if m.ndim != 1 or m.shape[0] != d.shape[0]:
            raise ValueError(
                f"cluster {self.label!r}: measure length {m.shape} does not match distance {d.shape}"
            )
        object.__setattr__(self, "distance", d)
        object.__setattr__(self, "measure", m)
        if self.points is not None:
            p = np.asarray(self.points, dtype=np.float64)
            if p.ndim != 2 or p.shape[0] != d.shape[0]:
                raise ValueError(f"cluster {self.label!r}: points shape {p.shape} inconsistent")
            object.__setattr__(self, "points", p)

    @property
    def size(self) -> int:
        return self.distance.shape[0]


@dataclass(frozen=True)
class ClusteredSpace:
    """An ordered collection of clusters with positive mixing masses summing to 1."""

    clusters: tuple[Cluster, ...]
    cluster_masses: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        s = np.asarray(self.cluster_masses, dtype=np.float64)
        if s.ndim != 1 or s.shape[0] != len(self.clusters):
            raise ValueError("cluster_masses length must equal the number of clusters")
        object.__setattr__(self, "cluster_masses", s)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def n_points(self) -> int:
        return sum(c.size for c in self.clusters)

    @property
    def has_points(self) -> bool:
        return all(c.points is not None for c in self.clusters)

    def all_points(self) -> np.ndarray:
        """Stack retained coordinates of all clusters, in offset order."""
        if not self.has_points:
            raise ValueError("space does not retain coordinates")
        return np.vstack([c.points for c in self.clusters])

    def point_cluster_index(self) -> np.ndarray:
        """Cluster index of each point in offset order."""
        return np.repeat(np.arange(self.n_clusters), [c.size for c in self.clusters])


@dataclass(frozen=True)
class Embedding:
    """Flattened view of a clustered space.

    ``marginal[x]`` is the product of the owning cluster's mass and the
    point's within-cluster measure; ``offsets`` are the cumulative cluster
    sizes (length k + 1) and ``blocks`` are the per-cluster distance
    matrices.  The implied block-diagonal distance matrix and the block
    indicator are recovered from ``offsets`` alone, so the masking identity
    "distance times indicator equals distance" holds by construction.
    """

    marginal: np.ndarray
    offsets: np.ndarray
    blocks: tuple[np.ndarray, ...]
    labels: tuple[str, ...] = field(default=())

    @property
    def n_points(self) -> int:
        return self.marginal.shape[0]

    @property
    def n_clusters(self) -> int:
        return len(self.blocks)

    def slices(self):
        """Per-cluster index slices into the flat point order."""
        return [slice(int(a), int(b)) for a, b in zip(self.offsets[:-1], self.offsets[1:])]


@dataclass(frozen=True)
class Coupling:
    """A transport plan with its marginal constraints.

    Row sums must match ``source_marginal`` and column sums
    ``target_marginal`` within ``marginal_tol`` (L1, per side), all entries
    must be nonnegative and total mass must be 1 within 1e-10.
    """

    plan: np.ndarray
    source_marginal: np.ndarray
    target_marginal: np.ndarray
    marginal_tol: float = 1e-8

    def __post_init__(self):
        p = np.asarray(self.plan, dtype=np.float64)
        a = np.asarray(self.source_marginal, dtype=np.float64)
        b = np.asarray(self.target_marginal, dtype=np.float64)
        object.__setattr__(self, "plan", p)
        object.__setattr__(self, "source_marginal", a)
        object.__setattr__(self, "target_marginal", b)
        if p.shape != (a.shape[0], b.shape[0]):
            raise ValueError(f"plan shape {p.shape} does not match marginals ({a.shape[0]}, {b.shape[0]})")
        if np.any(p < 0):
            raise ValueError("coupling entries must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"coupling total mass {p.sum()!r} is not 1 within 1e-10")
        viol = self.marginal_violation()
        if viol > self.marginal_tol:
            raise ValueError(f"coupling violates marginals: L1 violation {viol:.3e} > {self.marginal_tol:.3e}")

    def marginal_violation(self) -> float:
        """Total L1 deviation of row and column sums from the marginals."""
        row = np.abs(self.plan.sum(axis=1) - self.source_marginal).sum()
        col = np.abs(self.plan.sum(axis=0) - self.target_marginal).sum()
        return float(row + col)

    @property
    def shape(self):
        return self.plan.shape


def _check_points(points, where):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError(f"{where}: expected a nonempty (n, dim) array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{where}: coordinates must be finite")
    return pts


def euclidean_distance_matrix(points) -> np.ndarray:
    """Pairwise Euclidean distances with an exactly zero, exactly symmetric result."""
    pts = np.asarray(points, dtype=np.float64)
    d = squareform(pdist(pts)) if pts.shape[0] > 1 else np.zeros((pts.shape[0],) * 2)
    return d


def build_clustered_space(point_clusters, masses=None, renormalize=False) -> ClusteredSpace:
    """Build a clustered space from raw point clouds.

    Parameters
    ----------
    point_clusters : sequence
        Each element is either an (n_i, dim) array of coordinates, or a pair
        ``(points, weights)`` where ``weights`` is a positive length-n_i
        vector (``None`` for uniform).  The coordinate dimension must agree
        across clusters.
    masses : sequence of float, optional
        Cluster masses.  Defaults to cluster sizes over the total point
        count.  Must sum to 1 within 1e-12 unless ``renormalize`` is set.
    renormalize : bool
        Rescale measures and masses whose sums are off by more than the
        construction tolerance instead of rejecting them.

    Returns
    -------
    ClusteredSpace with Euclidean distance matrices and retained coordinates.
    """
    if len(point_clusters) == 0:
        raise ValueError("at least one cluster is required")
    parsed = []
    for idx, entry in enumerate(point_clusters):
        if isinstance(entry, tuple) and len(entry) == 2:
            points, weights = entry
        else:
            points, weights = entry, None
        pts = _check_points(points, f"cluster {idx}")
        if weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (pts.shape[0],):
                raise ValueError(f"cluster {idx}: weights shape {w.shape} does not match {pts.shape[0]} points")
            if np.any(w <= 0):
                raise ValueError(f"cluster {idx}: weights must be strictly positive")
            total = w.sum()
            if abs(total - 1.0) > MASS_ATOL:
                if not renormalize:
                    raise ValueError(
                        f"cluster {idx}: weights sum to {total!r}; pass renormalize=True to rescale"
                    )
                w = w / total
        parsed.append((pts, w))

    dims = {pts.shape[1] for pts, _ in parsed}
    if len(dims) != 1:
        raise ValueError(f"coordinate dimension must be uniform across clusters, got {sorted(dims)}")

    sizes = np.array([pts.shape[0] for pts, _ in parsed], dtype=np.float64)
    if masses is None:
        s = sizes / sizes.sum()
    else:
        s = np.asarray(masses, dtype=np.float64)
        if s.shape != (len(parsed),):
            raise ValueError("masses length must equal the number of clusters")
        if np.any(s <= 0):
            raise ValueError("cluster masses must be strictly positive")
        if abs(s.sum() - 1.0) > MASS_ATOL:
            if not renormalize:
                raise ValueError(f"cluster masses sum to {s.sum()!r}; pass renormalize=True to rescale")
            s = s / s.sum()

    clusters = tuple(
        Cluster(distance=euclidean_distance_matrix(pts), measure=w, label=str(i), points=pts)
        for i, (pts, w) in enumerate(parsed)
    )
    return ClusteredSpace(clusters=clusters, cluster_masses=s)


def space_from_distance_matrices(matrices, measures=None, masses=None) -> ClusteredSpace:
    """Build a clustered space directly from precomputed distance matrices."""
    if len(matrices) == 0:
        raise ValueError("at least one cluster is required")
    clusters = []
    for i, d in enumerate(matrices):
        d = np.asarray(d, dtype=np.float64)
        m = None if measures is None else measures[i]
        if m is None:
            m = np.full(d.shape[0], 1.0 / d.shape[0])
        clusters.append(Cluster(distance=d, measure=np.asarray(m, dtype=np.float64), label=str(i)))
    sizes = np.array([c.size for c in clusters], dtype=np.float64)
    s = sizes / sizes.sum() if masses is None else np.asarray(masses, dtype=np.float64)
    space = ClusteredSpace(clusters=tuple(clusters), cluster_masses=s)
    problems = validate(space)
    if problems:
        raise ValueError("invalid space: " + "; ".join(problems))
    return space


def validate(space: ClusteredSpace) -> list[str]:
    """Check every type invariant, returning one message per violation.

    An empty list means the space is valid.  Triangle inequality is not
    checked; asymmetric distance matrices are rejected.
    """
    problems = []
    if space.n_clusters < 1:
        problems.append("space has no clusters")
    s = space.cluster_masses
    if np.any(s <= 0):
        bad = int(np.argmin(s))
        problems.append(f"cluster mass nonpositive at cluster {bad}")
    if abs(s.sum() - 1.0) > MASS_ATOL:
        problems.append(f"mass normalization: cluster masses sum to {s.sum()!r}")
    for i, c in enumerate(space.clusters):
        d, m = c.distance, c.measure
        if d.shape[0] == 0:
            problems.append(f"cluster {i} is empty")
            continue
        if np.any(d < 0):
            a, b = np.argwhere(d < 0)[0]
            problems.append(f"nonnegativity violated at ({i}, {a}, {b})")
        if np.any(np.diag(d) != 0):
            a = int(np.argmax(np.diag(d) != 0))
            problems.append(f"nonzero diagonal at ({i}, {a})")
        if not np.array_equal(d, d.T):
            a, b = np.argwhere(d != d.T)[0]
            problems.append(f"asymmetry at ({i}, {a}, {b})")
        if not np.all(np.isfinite(d)):
            problems.append(f"non-finite distance in cluster {i}")
        if np.any(m <= 0):
            a = int(np.argmax(m <= 0))
            problems.append(f"measure nonpositive at ({i}, {a})")
        if abs(m.sum() - 1.0) > MASS_ATOL:
            problems.append(f"mass normalization: cluster {i} measure sums to {m.sum()!r}")
    return problems


def require_valid(space: ClusteredSpace, name="space"):
    problems = validate(space)
    if problems:
        raise ValueError(f"invalid {name}: " + "; ".join(problems))


def embed(space: ClusteredSpace) -> Embedding:
    """Flatten a clustered space into marginal vector, offsets and distance blocks.

    The marginal entry of point j of cluster i is the cluster mass times the
    within-cluster measure entry; offsets are cumulative cluster sizes.
    """
    require_valid(space)
    sizes = [c.size for c in space.clusters]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    marginal = np.concatenate(
        [s * c.measure for s, c in zip(space.cluster_masses, space.clusters)]
    )
    return Embedding(
        marginal=marginal,
        offsets=offsets,
        blocks=tuple(c.distance for c in space.clusters),
        labels=tuple(c.label for c in space.clusters),
    )


def as_clustered_space(obj) -> ClusteredSpace:
    """Coerce arrays into a ClusteredSpace; passes ClusteredSpace through.

    Accepted forms: a ClusteredSpace; an (n, dim) coordinate array, which
    becomes a single uniform cluster; a square symmetric zero-diagonal
    matrix, which is taken as a precomputed distance matrix; or a sequence
    of coordinate arrays, one cluster each with size-proportional masses.
    """
    if isinstance(obj, ClusteredSpace):
        return obj
    if isinstance(obj, np.ndarray) and obj.ndim == 2:
        if _looks_like_distance_matrix(obj):
            return space_from_distance_matrices([obj])
        return build_clustered_space([obj])
    if isinstance(obj, (list, tuple)):
        return build_clustered_space(list(obj))
    raise TypeError(f"cannot interpret {type(obj).__name__} as a clustered space")


def _looks_like_distance_matrix(arr) -> bool:
    a = np.asarray(arr, dtype=np.float64)
    return (
        a.shape[0] == a.shape[1]
        and a.shape[0] > 1
        and np.array_equal(a, a.T)
        and not np.any(np.diag(a))
        and np.all(a >= 0)
    )


def pairwise_cross_distances(points_a, points_b) -> np.ndarray:
    return cdist(np.asarray(points_a, dtype=np.float64), np.asarray(points_b, dtype=np.float64))
