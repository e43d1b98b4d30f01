"""File formats: point-cloud CSV, coupling CSV, config/report JSON, SVG figures.

All interchange is text-based and deterministic: floats are written with 17
significant digits so values round-trip exactly, coupling rows are sorted,
and cluster order follows first appearance in the file.
"""

from __future__ import annotations

import csv
import json
from dataclasses import fields
from pathlib import Path

import numpy as np

from .solver import SolverConfig, SolveReport
from .spaces import Cluster, ClusteredSpace, Coupling, euclidean_distance_matrix

__all__ = [
    "SchemaError",
    "read_point_cloud",
    "write_point_cloud",
    "write_coupling",
    "read_coupling",
    "read_config",
    "write_config",
    "write_report",
    "read_report",
    "write_svg_scatter",
]


class SchemaError(ValueError):
    """A config or report file violates its schema; the message names the key."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def read_point_cloud(path) -> ClusteredSpace:
    """Read a labeled point cloud CSV into a clustered space.

    The header must be ``x,y[,z],cluster[,weight]``.  Rows are grouped by
    cluster label in first-appearance order; weights are normalized per
    cluster and cluster masses are proportional to each cluster's total raw
    weight.  A sidecar file ``<path>.masses.json`` holding
    ``{"masses": [...]}`` overrides the masses (one entry per cluster, in
    file order).
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[:2] == ["x", "y"] and header[2:3] == ["z"]:
            dim = 3
        elif header[:2] == ["x", "y"]:
            dim = 2
        else:
            raise ValueError(f"{path}: header must start with x,y[,z], got {header}")
        rest = header[dim:]
        if rest not in (["cluster"], ["cluster", "weight"]):
            raise ValueError(f"{path}: header must be x,y[,z],cluster[,weight], got {header}")
        has_weight = rest == ["cluster", "weight"]
        n_fields = dim + 1 + has_weight

        groups: dict[str, dict] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_fields:
                raise ValueError(f"{path}:{lineno}: expected {n_fields} fields, got {len(row)}")
            try:
                coords = [float(v) for v in row[:dim]]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed coordinate") from None
            label = row[dim].strip()
            if not label:
                raise ValueError(f"{path}:{lineno}: empty cluster label")
            weight = 1.0
            if has_weight:
                try:
                    weight = float(row[dim + 1])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: malformed weight") from None
                if weight <= 0:
                    raise ValueError(f"{path}:{lineno}: nonpositive weight {weight}")
            g = groups.setdefault(label, {"points": [], "weights": []})
            g["points"].append(coords)
            g["weights"].append(weight)

    if not groups:
        raise ValueError(f"{path}: no data rows")

    labels = list(groups)
    totals = np.array([sum(groups[lab]["weights"]) for lab in labels])
    masses = totals / totals.sum()

    sidecar = Path(str(path) + ".masses.json")
    if sidecar.exists():
        with open(sidecar) as fh:
            data = json.load(fh)
        override = np.asarray(data["masses"], dtype=np.float64)
        if override.shape != (len(labels),):
            raise ValueError(f"{sidecar}: expected {len(labels)} masses, got {override.shape}")
        masses = override

    clusters = []
    for lab in labels:
        pts = np.asarray(groups[lab]["points"], dtype=np.float64)
        w = np.asarray(groups[lab]["weights"], dtype=np.float64)
        clusters.append(
            Cluster(
                distance=euclidean_distance_matrix(pts),
                measure=w / w.sum(),
                label=lab,
                points=pts,
            )
        )
    return ClusteredSpace(clusters=tuple(clusters), cluster_masses=masses)


def write_point_cloud(path, space: ClusteredSpace):
    """Write a space with retained coordinates to the point-cloud CSV format."""
    if not space.has_points:
        raise ValueError("space does not retain coordinates")
    dim = space.clusters[0].points.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z"][:dim] + ["cluster", "weight"])
        for cluster, mass in zip(space.clusters, space.cluster_masses):
            # raw weight = mass * measure, so grouping reproduces both
            for p, m in zip(cluster.points, cluster.measure):
                writer.writerow([_fmt(v) for v in p] + [cluster.label, _fmt(mass * m)])


def write_coupling(path, mu, threshold=1e-12):
    """Write plan entries above ``threshold`` as sorted sparse CSV rows."""
    plan = mu.plan if isinstance(mu, Coupling) else np.asarray(mu, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_index", "target_index", "mass"])
        rows, cols = np.nonzero(plan > threshold)
        for r, c in zip(rows, cols):
            writer.writerow([int(r), int(c), _fmt(plan[r, c])])


def read_coupling(path, n_source, n_target) -> np.ndarray:
    """Read a coupling CSV back into a dense zero-filled matrix."""
    plan = np.zeros((n_source, n_target))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["source_index", "target_index", "mass"]:
            raise ValueError(f"{path}: unexpected coupling header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                r, c, m = int(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: malformed coupling row") from None
            if not (0 <= r < n_source and 0 <= c < n_target):
                raise ValueError(f"{path}:{lineno}: index ({r}, {c}) out of bounds")
            plan[r, c] = m
    return plan


_CONFIG_FIELDS = {f.name: f for f in fields(SolverConfig)}
_REPORT_FIELDS = {f.name: f for f in fields(SolveReport)}
_CONFIG_TYPES = {
    "epsilon": float,
    "eta": float,
    "max_outer_iters": int,
    "sinkhorn_max_iters": int,
    "sinkhorn_tol": float,
    "outer_tol": float,
    "log_domain": bool,
    "seed": int,
    "normalize_distances": bool,
    "init_perturbation": float,
    "paper_literal_signs": bool,
    "anneal_from": float,
}


def read_config(path) -> SolverConfig:
    """Read a solver config JSON; unknown keys or bad values raise SchemaError."""
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: config must be a JSON object")
    unknown = set(data) - set(_CONFIG_FIELDS)
    if unknown:
        raise SchemaError(f"unknown config key {sorted(unknown)[0]!r}")
    kwargs = {}
    for name, value in data.items():
        if name in ("outer_tol", "anneal_from") and value is None:
            kwargs[name] = None
            continue
        kind = _CONFIG_TYPES[name]
        if kind is bool:
            if not isinstance(value, bool):
                raise SchemaError(f"config key {name!r} must be a boolean")
            kwargs[name] = value
        elif kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise SchemaError(f"config key {name!r} must be an integer")
            kwargs[name] = value
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SchemaError(f"config key {name!r} must be a number")
            kwargs[name] = float(value)
    config = SolverConfig(**kwargs)
    try:
        config.validate()
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
    return config


def write_config(path, config: SolverConfig):
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")


def write_report(path, report: SolveReport):
    """Write a solve report as JSON with the fields exactly as typed."""
    payload = {
        "objective": float(report.objective),
        "outer_iters_used": int(report.outer_iters_used),
        "converged": bool(report.converged),
        "objective_trace": [float(x) for x in report.objective_trace],
        "marginal_violation": float(report.marginal_violation),
        "wall_time_ms": int(report.wall_time_ms),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_report(path) -> SolveReport:
    with open(path) as fh:
        data = json.load(fh)
    unknown = set(data) - set(_REPORT_FIELDS)
    if unknown:
        raise SchemaError(f"unknown report key {sorted(unknown)[0]!r}")
    missing = set(_REPORT_FIELDS) - set(data)
    if missing:
        raise SchemaError(f"missing report key {sorted(missing)[0]!r}")
    return SolveReport(
        objective=float(data["objective"]),
        outer_iters_used=int(data["outer_iters_used"]),
        converged=bool(data["converged"]),
        objective_trace=[float(x) for x in data["objective_trace"]],
        marginal_violation=float(data["marginal_violation"]),
        wall_time_ms=int(data["wall_time_ms"]),
    )


def _project(points, axis):
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[1] == 2:
        return pts
    if pts.shape[1] == 3:
        keep = [i for i in range(3) if i != axis]
        return pts[:, keep]
    raise ValueError(f"cannot plot {pts.shape[1]}-dimensional points")


def write_svg_scatter(path, source_points, target_points, mu=None,
                      top_edges_per_point=1, project_axis=2,
                      width=640, height=480, margin=24.0):
    """Render two point clouds and the strongest coupling edges as SVG.

    3D input is orthographically projected by dropping ``project_axis``.
    Each source point contributes its ``top_edges_per_point`` heaviest plan
    entries as lines whose opacity is proportional to mass.
    """
    src = _project(source_points, project_axis)
    tgt = _project(target_points, project_axis)
    both = np.vstack([src, tgt])
    lo = both.min(axis=0)
    span = both.max(axis=0) - lo
    span[span == 0] = 1.0
    scale = min((width - 2 * margin) / span[0], (height - 2 * margin) / span[1])

    def to_px(p):
        x = margin + (p[0] - lo[0]) * scale
        y = height - margin - (p[1] - lo[1]) * scale
        return x, y

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    ]
    if mu is not None:
        plan = mu.plan if isinstance(mu, Coupling) else np.asarray(mu, dtype=np.float64)
        if plan.shape != (src.shape[0], tgt.shape[0]):
            raise ValueError(f"plan shape {plan.shape} does not match point counts")
        top = max(float(plan.max()), 0.0)
        if top > 0:
            k = max(int(top_edges_per_point), 0)
            for i in range(plan.shape[0]):
                order = np.argsort(-plan[i], kind="stable")[:k]
                for j in order:
                    mass = plan[i, j]
                    if mass <= 0:
                        continue
                    x1, y1 = to_px(src[i])
                    x2, y2 = to_px(tgt[j])
                    parts.append(
                        f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                        f'stroke="#555555" stroke-opacity="{mass / top:.4f}" stroke-width="1"/>'
                    )
    for p in src:
        x, y = to_px(p)
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="#1f77b4"/>')
    for p in tgt:
        x, y = to_px(p)
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="#d62728"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
