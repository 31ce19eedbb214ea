"""Seed selection: strongest-attraction extrema, greedy filtering, segments.

Points of locally strongest attraction are strict 8-neighborhood extrema of
the singular-value fields.  A greedy radius filter (sort by value, keep,
discard everything within the radius, repeat) thins noisy extrema; ties are
broken lexicographically by grid index so the kept set is deterministic and
permutation-invariant.  Each kept point seeds a short straight segment
aligned with the local stretch direction.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .lcs_tracking import MaterialCurve
from .svd_analysis import SvdFields

log = logging.getLogger(__name__)

DEFAULT_SEGMENT_LENGTH = 0.1
DEFAULT_VALUE_PERCENTILE = 90.0
SEGMENT_SIDE_POINTS = 5   # points per side; segment has 2k+1 points


@dataclass(frozen=True)
class SeedPoint:
    position: np.ndarray    # (2,)
    value: float
    direction: np.ndarray   # unit (2,)
    kind: str               # "attracting" | "repelling"
    time: float
    index: tuple            # originating grid index (iy, ix)
    seed_id: int = 0


def local_maxima(field: np.ndarray, mask: np.ndarray | None = None):
    """Strict 8-neighborhood maxima of a 2-D scalar grid.

    Boundary rows/columns are excluded; a candidate adjacent to a masked
    point is discarded (strictness cannot be verified there).  Returns
    (indices (n, 2) as (iy, ix), values (n,)).
    """
    f = np.asarray(field, dtype=np.float64)
    ny, nx = f.shape
    if mask is None:
        mask = np.isfinite(f)
    else:
        mask = np.asarray(mask, dtype=bool) & np.isfinite(f)
    if ny < 3 or nx < 3:
        return np.empty((0, 2), dtype=np.int64), np.empty(0)

    c = f[1:-1, 1:-1]
    best = np.ones_like(c, dtype=bool)
    ok = mask[1:-1, 1:-1].copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            nb = f[1 + dy:ny - 1 + dy, 1 + dx:nx - 1 + dx]
            nb_ok = mask[1 + dy:ny - 1 + dy, 1 + dx:nx - 1 + dx]
            ok &= nb_ok
            with np.errstate(invalid="ignore"):
                best &= c > nb
    hits = np.flatnonzero(best & ok)
    iy, ix = np.unravel_index(hits, c.shape)
    idx = np.stack([iy + 1, ix + 1], axis=-1)
    return idx, f[idx[:, 0], idx[:, 1]]


def filter_extrema(points: np.ndarray, values: np.ndarray, radius: float,
                   period=(None, None)) -> np.ndarray:
    """Greedy radius filter; returns indices of kept points (input order).

    Sort by value descending (ties: lexicographic by grid position, which
    for grid extrema equals the index order), keep the first point, discard
    every point within `radius`, repeat.  `period` enables the wrapped
    metric per axis.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    vals = np.asarray(values, dtype=np.float64)
    n = pts.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((pts[:, 1], pts[:, 0], -vals))
    alive = np.ones(n, dtype=bool)
    kept = []
    for oi in order:
        if not alive[oi]:
            continue
        kept.append(oi)
        d = np.abs(pts - pts[oi])
        for ax in (0, 1):
            if period[ax] is not None:
                d[:, ax] = np.minimum(d[:, ax], period[ax] - d[:, ax])
        alive &= (d[:, 0] ** 2 + d[:, 1] ** 2) >= radius ** 2
    return np.asarray(kept, dtype=np.int64)


def make_seed_segments(seeds, length: float = DEFAULT_SEGMENT_LENGTH):
    """Straight (2k+1)-point polylines of total arc length `length`,
    centered on each seed and aligned with its direction."""
    if length <= 0:
        raise ValueError("length must be positive")
    k = SEGMENT_SIDE_POINTS
    s = np.linspace(-0.5, 0.5, 2 * k + 1) * length
    curves = []
    for seed in seeds:
        pts = seed.position[None, :] + s[:, None] * seed.direction[None, :]
        curves.append(MaterialCurve(points=pts, time=seed.time,
                                    seed_id=seed.seed_id, kind=seed.kind))
    return curves


def _unit(vecs: np.ndarray) -> np.ndarray:
    return vecs / np.linalg.norm(vecs, axis=-1, keepdims=True)


def select_seeds(svd: SvdFields, radius: float, incompressible: bool | None = None,
                 value_percentile: float | None = DEFAULT_VALUE_PERCENTILE,
                 period=(None, None)):
    """Seed points for attracting (at t1) and repelling (at t2) LCS.

    Incompressible flows need one extrema pass: maxima of sigma2_f are the
    strongest-attraction points at t1 (direction xi2) and their advected
    images are the strongest-backward-attraction points at t2 (direction
    theta1).  Compressible flows locate attracting seeds at minima of
    sigma1_f and repelling seeds at advected maxima of sigma2_f.

    value_percentile floors the extrema at that percentile of the field
    (None disables; the radius filter alone then decides).
    """
    if incompressible is None:
        incompressible = svd.incompressible
    grid_pts = svd.spec.points()
    usable = svd.valid & ~svd.degenerate

    def pick(field, flip):
        work = -field if flip else field
        idx, _ = local_maxima(work, mask=usable)
        if idx.shape[0] == 0:
            return idx
        if value_percentile is not None:
            floor = np.nanpercentile(work[usable], value_percentile)
            keep = work[idx[:, 0], idx[:, 1]] > floor
            idx = idx[keep]
        if idx.shape[0] == 0:
            return idx
        pos = grid_pts[idx[:, 0], idx[:, 1]]
        vals = work[idx[:, 0], idx[:, 1]]
        kept = filter_extrema(pos, vals, radius, period=period)
        return idx[kept]

    def build(idx, positions, directions, values, kind, time):
        out = []
        for sid, (iy, ix) in enumerate(idx):
            out.append(SeedPoint(position=positions[iy, ix].copy(),
                                 value=float(values[iy, ix]),
                                 direction=directions[iy, ix].copy(),
                                 kind=kind, time=time,
                                 index=(int(iy), int(ix)), seed_id=sid))
        return out

    dropped = int(np.count_nonzero(svd.valid & svd.degenerate))
    if dropped:
        log.info("seeding: %d degenerate grid points excluded", dropped)

    xi2 = _unit(svd.xi2)
    theta1 = _unit(svd.theta1)
    if incompressible:
        idx = pick(svd.sigma2f, flip=False)
        attracting = build(idx, grid_pts, xi2, svd.sigma2f, "attracting",
                           svd.t_a)
        repelling = build(idx, svd.x2, theta1, svd.sigma2b, "repelling",
                          svd.t_b)
    else:
        idx_a = pick(svd.sigma1f, flip=True)
        attracting = build(idx_a, grid_pts, xi2, svd.sigma1f, "attracting",
                           svd.t_a)
        idx_r = pick(svd.sigma2f, flip=False)
        repelling = build(idx_r, svd.x2, theta1, svd.sigma2b, "repelling",
                          svd.t_b)
    return attracting, repelling


def seeds_to_table(seeds) -> str:
    lines = ["# kind x y value dir_x dir_y"]
    for s in seeds:
        lines.append(f"{s.kind} {s.position[0]!r} {s.position[1]!r} "
                     f"{s.value!r} {s.direction[0]!r} {s.direction[1]!r}")
    return "\n".join(lines) + "\n"


def seeds_to_json(seeds) -> str:
    recs = [{"seed_id": s.seed_id, "kind": s.kind,
             "x": s.position[0], "y": s.position[1], "value": s.value,
             "dir_x": s.direction[0], "dir_y": s.direction[1],
             "time": s.time} for s in seeds]
    return json.dumps(recs, indent=1, sort_keys=True)
