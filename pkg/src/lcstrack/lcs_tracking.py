"""Numerically stable LCS reconstruction by advecting attracting segments.

A material curve is advected in substep legs.  After each leg, any gap
larger than delta_max (and any vertex turning more than max_turn_deg) is
repaired by inserting the midpoint on the PRE-leg curve and advecting it
across the leg, so inserted points are genuine trajectories rather than
late-time interpolants; at high stretch this is what keeps the polyline a
faithful material curve.  Both time directions are supported; repelling
LCS are obtained by backward advection of theta1 segments from t2, which
tracks an attracting material line and is therefore self-stabilizing.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .flow_map import DEFAULT_TOL, advect_points

log = logging.getLogger(__name__)

# curvature-only refinement stops below this fraction of delta_max, so a
# numerical kink cannot recurse forever
_MIN_SPLIT_FRACTION = 1e-3


@dataclass
class RefineParams:
    delta_max: float
    n_substeps: int = 20
    max_turn_deg: float = 20.0
    max_points: int = 100_000


@dataclass
class MaterialCurve:
    points: np.ndarray          # (n, 2), ordered
    time: float
    seed_id: int = 0
    kind: str = ""
    insertions: int = 0
    max_gap: float = 0.0
    truncated: bool = False
    advection_dir: int = 0      # -1 backward, 0 unadvected, +1 forward
    stats: dict = field(default_factory=dict)

    def arc_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0),
                                           axis=1)))


def _gaps(pts: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.diff(pts, axis=0), axis=1)


def _turn_flags(pts: np.ndarray, max_turn_deg: float) -> np.ndarray:
    """Per-segment flags: True where an adjacent vertex turns too sharply."""
    n = pts.shape[0]
    flags = np.zeros(n - 1, dtype=bool)
    if n < 3:
        return flags
    seg = np.diff(pts, axis=0)
    norm = np.linalg.norm(seg, axis=1)
    good = (norm[:-1] > 0) & (norm[1:] > 0)
    cosang = np.full(n - 2, 1.0)
    dots = np.sum(seg[:-1] * seg[1:], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosang[good] = dots[good] / (norm[:-1][good] * norm[1:][good])
    sharp = cosang < np.cos(np.radians(max_turn_deg))
    flags[:-1] |= sharp
    flags[1:] |= sharp
    return flags


def advect_curve(field_src, curve: MaterialCurve, t_from: float, t_to: float,
                 refine: RefineParams, tol: float = DEFAULT_TOL) -> MaterialCurve:
    """Advect a material curve from t_from to t_to with gap-driven insertion.

    A point that leaves the domain truncates the curve from that point on.
    Exceeding the insertion budget returns the curve flagged truncated
    instead of stalling.
    """
    pre = np.array(curve.points, dtype=np.float64)
    insertions = curve.insertions
    truncated = curve.truncated
    if t_to == t_from or pre.shape[0] == 0:
        return MaterialCurve(points=pre, time=t_to, seed_id=curve.seed_id,
                             kind=curve.kind, insertions=insertions,
                             max_gap=float(np.max(_gaps(pre), initial=0.0)),
                             truncated=truncated,
                             advection_dir=int(np.sign(t_to - t_from)))

    legs = np.linspace(t_from, t_to, refine.n_substeps + 1)
    floor = _MIN_SPLIT_FRACTION * refine.delta_max
    post = pre
    for leg_a, leg_b in zip(legs[:-1], legs[1:]):
        post, ok, _ = advect_points(field_src, pre, leg_a, leg_b, tol)
        if not ok.all():
            cut = int(np.flatnonzero(~ok)[0])
            pre, post = pre[:cut], post[:cut]
            truncated = True
            if post.shape[0] < 2:
                break
        while True:
            gaps = _gaps(post)
            split = gaps > refine.delta_max
            split |= _turn_flags(post, refine.max_turn_deg) & (gaps > floor)
            if not split.any():
                break
            if post.shape[0] + np.count_nonzero(split) > refine.max_points:
                truncated = True
                log.warning("curve %s: insertion budget exhausted at t=%g",
                            curve.seed_id, leg_b)
                break
            seg_idx = np.flatnonzero(split)
            mids = 0.5 * (pre[seg_idx] + pre[seg_idx + 1])
            adv, ok, _ = advect_points(field_src, mids, leg_a, leg_b, tol)
            if not ok.all():
                good = ok
                seg_idx, mids, adv = seg_idx[good], mids[good], adv[good]
                truncated = True
                if seg_idx.size == 0:
                    break
            pre = np.insert(pre, seg_idx + 1, mids, axis=0)
            post = np.insert(post, seg_idx + 1, adv, axis=0)
            insertions += seg_idx.size
        if truncated and post.shape[0] < 2:
            break
        pre = post
    return MaterialCurve(points=post, time=t_to, seed_id=curve.seed_id,
                         kind=curve.kind, insertions=insertions,
                         max_gap=float(np.max(_gaps(post), initial=0.0)),
                         truncated=truncated,
                         advection_dir=int(np.sign(t_to - t_from)))


def _extract(field_src, seeds, t_start, t, refine, tol, segment_length):
    from .seeding import make_seed_segments
    curves = []
    failures = 0
    for segment in make_seed_segments(seeds, length=segment_length):
        try:
            curves.append(advect_curve(field_src, segment, t_start, t,
                                       refine, tol))
        except Exception:
            failures += 1
            log.exception("seed %s: advection failed", segment.seed_id)
    if failures:
        log.warning("%d of %d seed segments failed", failures, len(seeds))
    return curves


def extract_attracting_lcs(field_src, seeds, t1: float, t: float,
                           refine: RefineParams, tol: float = DEFAULT_TOL,
                           segment_length: float = 0.1):
    """Attracting LCS at time t: xi2 seed segments advected forward t1 -> t."""
    if not (t >= min(t1, t) and t >= t1):
        raise ValueError("t must satisfy t >= t1 for attracting advection")
    return _extract(field_src, seeds, t1, t, refine, tol, segment_length)


def extract_repelling_lcs(field_src, seeds, t2: float, t: float,
                          refine: RefineParams, tol: float = DEFAULT_TOL,
                          segment_length: float = 0.1):
    """Repelling LCS at time t: theta1 seed segments advected backward t2 -> t."""
    if t > t2:
        raise ValueError("t must satisfy t <= t2 for repelling advection")
    return _extract(field_src, seeds, t2, t, refine, tol, segment_length)


def curves_to_json(curves) -> str:
    recs = [{"time": c.time, "kind": c.kind, "seed_id": c.seed_id,
             "points": c.points.tolist(), "truncated": c.truncated}
            for c in curves]
    return json.dumps(recs, sort_keys=True)


def save_curves_json(curves, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(curves_to_json(curves))


def load_curves_json(path):
    with open(path, encoding="utf-8") as fh:
        recs = json.load(fh)
    return [MaterialCurve(points=np.asarray(r["points"], dtype=np.float64),
                          time=r["time"], seed_id=r["seed_id"],
                          kind=r["kind"], truncated=r["truncated"])
            for r in recs]


def save_curves_csv(curves, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("seed_id,kind,time,idx,x,y\n")
        for c in curves:
            for i, (x, y) in enumerate(c.points):
                fh.write(f"{c.seed_id},{c.kind},{c.time!r},{i},{x!r},{y!r}\n")
