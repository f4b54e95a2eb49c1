"""Readers and writers for sample files, grid JSON, plans, potentials and fitted pairs.

Formats
-------
samples   CSV ``x0,...,x{d-1}[,weight]``; without a weight column the mass comes
          from a sidecar JSON ``{"mass": M, "dim": d}`` and every atom gets ``M/n``.
grid      JSON ``{"dim", "resolution", "mass", "density"}``, density row-major
          with axis 0 slowest.
plan      CSV ``i,j,gamma`` (entries > 1e-15) plus JSON sidecar
          ``{"primal", "dual", "eps_final", "row_mass", "col_mass"}``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .measures import DiscreteMeasure, GridMeasure, MassEstimate, MassSource

PLAN_EXPORT_THRESHOLD = 1e-15


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def _read_table(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return header, data.reshape(-1, len(header))


def read_points(path):
    """Point coordinates from a CSV with ``x0..`` columns (other columns ignored)."""
    header, data = _read_table(path)
    cols = [k for k, h in enumerate(header) if h.startswith("x")]
    if not cols:
        raise ValueError(f"{path}: no coordinate columns x0, x1, ...")
    return data[:, cols]


def read_measure(path, mass=None):
    """Load a :class:`DiscreteMeasure` from a sample CSV.

    The ``weight`` column wins when present; otherwise ``mass`` (or the
    sidecar JSON's ``mass``) is split evenly across atoms.
    """
    header, data = _read_table(path)
    coords = [k for k, h in enumerate(header) if h.startswith("x")]
    points = data[:, coords]
    if "weight" in header:
        return DiscreteMeasure(points, data[:, header.index("weight")])
    if mass is None:
        side = sidecar_path(path)
        if not side.exists():
            raise ValueError(f"{path}: no weight column and no mass given (looked for {side})")
        meta = json.loads(side.read_text())
        if int(meta.get("dim", points.shape[1])) != points.shape[1]:
            raise ValueError(f"{side}: dim does not match the sample columns")
        mass = meta["mass"]
    n = points.shape[0]
    return DiscreteMeasure(points, np.full(n, float(mass) / n))


def write_points(path, points, weights=None, mass=None):
    points = np.atleast_2d(points)
    d = points.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{r}" for r in range(d)] + (["weight"] if weights is not None else []))
        for k, p in enumerate(points):
            w.writerow([repr(float(v)) for v in p] + (
                [repr(float(weights[k]))] if weights is not None else []))
    if mass is not None:
        sidecar_path(path).write_text(json.dumps({"mass": float(mass), "dim": d}))


def mass_estimate_from_sidecar(path):
    meta = json.loads(sidecar_path(path).read_text())
    return MassEstimate(meta["mass"], MassSource.EXTERNAL)


def grid_to_dict(grid):
    return {"dim": grid.dim, "resolution": grid.resolution, "mass": grid.mass,
            "density": [float(v) for v in grid.density]}


def write_grid(path, grid):
    Path(path).write_text(json.dumps(grid_to_dict(grid)))


def read_grid(path):
    meta = json.loads(Path(path).read_text())
    return GridMeasure(int(meta["resolution"]), int(meta["dim"]),
                       np.asarray(meta["density"], dtype=float), float(meta["mass"]))


def write_plan(prefix, result):
    """``<prefix>_plan.csv`` and ``<prefix>_plan.json`` for a :class:`UOTResult`."""
    G = result.plan.gamma
    i, j = np.nonzero(G > PLAN_EXPORT_THRESHOLD)
    with open(f"{prefix}_plan.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "gamma"])
        for a, b in zip(i, j):
            w.writerow([int(a), int(b), repr(float(G[a, b]))])
    meta = {"primal": result.primal_value, "dual": result.dual_value,
            "eps_final": result.info.get("eps_final"),
            "row_mass": float(result.plan.row_marginals.sum()),
            "col_mass": float(result.plan.col_marginals.sum())}
    Path(f"{prefix}_plan.json").write_text(json.dumps(meta, indent=2))


def read_plan(prefix, shape):
    G = np.zeros(shape)
    header, data = _read_table(f"{prefix}_plan.csv")
    for a, b, g in data:
        G[int(a), int(b)] = g
    return G, json.loads(Path(f"{prefix}_plan.json").read_text())


def write_potentials(prefix, potentials):
    for name in ("phi", "psi"):
        with open(f"{prefix}_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", name])
            for k, v in enumerate(getattr(potentials, name)):
                w.writerow([k, repr(float(v))])


def write_grid_potentials(prefix, potentials):
    """``<prefix>_potentials.csv`` (``cell_index,phi,psi``) and ``<prefix>_grid.json``."""
    with open(f"{prefix}_potentials.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_index", "phi", "psi"])
        for k, (p, q) in enumerate(zip(potentials.phi, potentials.psi)):
            w.writerow([k, repr(float(p)), repr(float(q))])
    Path(f"{prefix}_grid.json").write_text(json.dumps({
        "dim": potentials.dim, "resolution": potentials.resolution,
        "target_cells": [int(k) for k in np.flatnonzero(potentials.target_mask)]}))


def write_pair_values(path, queries, values):
    """Fitted-pair CSV ``x0..,t0..,lambda,a`` with one row per query."""
    q = np.atleast_2d(queries)
    d = q.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{r}" for r in range(d)] + [f"t{r}" for r in range(d)] + ["lambda", "a"])
        for k in range(q.shape[0]):
            w.writerow([repr(float(v)) for v in q[k]]
                       + [repr(float(v)) for v in values.target[k]]
                       + [repr(float(values.growth[k])), repr(float(values.active[k]))])
