"""Direct integration of shrink/stretch line fields (the comparison method).

Singular-vector fields carry no global orientation, so each stencil corner
is sign-aligned against the incoming direction before bilinear blending;
the blended vector is renormalized and aligned once more.  This makes the
integrated curve invariant under arbitrary per-grid-point sign flips of the
input field.  Integration is fixed-step 4th-order (no adaptivity, so
comparisons against the attraction-based method are not confounded by step
heuristics), growing from the seed in both directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow_map import GridSpec
from ._interp import bilinear_scalar_grid
from .svd_analysis import SvdFields

STOP_DOMAIN = "domain exit"
STOP_DEGENERATE = "degenerate point"
STOP_MAXLEN = "max length"

DEGENERACY_RATIO = 1.0 + 1e-6


@dataclass
class LineFieldCurve:
    points: np.ndarray      # (n, 2), seed somewhere inside
    family: str             # "xi1" | "xi2" | "theta1" | "theta2"
    seed: np.ndarray
    stop_reason: str
    seed_id: int = 0

    def arc_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0),
                                           axis=1)))


class _DirectionSampler:
    def __init__(self, dir_field: np.ndarray, spec: GridSpec):
        self.fx = dir_field[..., 0]
        self.fy = dir_field[..., 1]
        self.spec = spec

    def __call__(self, p: np.ndarray, ref: np.ndarray):
        """Aligned unit direction at p, or None on degeneracy."""
        spec = self.spec
        hx, hy = spec.hx, spec.hy
        ix = int(np.clip(np.floor((p[0] - spec.x_min) / hx), 0, spec.nx - 2))
        iy = int(np.clip(np.floor((p[1] - spec.y_min) / hy), 0, spec.ny - 2))
        sx = (p[0] - spec.x_min) / hx - ix
        sy = (p[1] - spec.y_min) / hy - iy
        acc = np.zeros(2)
        for dy, wy in ((0, 1.0 - sy), (1, sy)):
            for dx, wx in ((0, 1.0 - sx), (1, sx)):
                v = np.array([self.fx[iy + dy, ix + dx],
                              self.fy[iy + dy, ix + dx]])
                if not np.all(np.isfinite(v)):
                    return None
                if v @ ref < 0.0:
                    v = -v
                acc += wy * wx * v
        norm = np.linalg.norm(acc)
        if norm < 1e-12:
            return None
        acc /= norm
        if acc @ ref < 0.0:
            acc = -acc
        return acc


def _inside(spec: GridSpec, p: np.ndarray) -> bool:
    return (spec.x_min <= p[0] <= spec.x_max
            and spec.y_min <= p[1] <= spec.y_max)


def _grow(sampler, spec, degeneracy, deg_threshold, p0, ref0, step, budget):
    pts = []
    p = p0.copy()
    ref = ref0.copy()
    length = 0.0
    while True:
        if length >= budget:
            return pts, STOP_MAXLEN
        k1 = sampler(p, ref)
        if k1 is None:
            return pts, STOP_DEGENERATE
        k2 = sampler(p + 0.5 * step * k1, k1)
        k3 = None if k2 is None else sampler(p + 0.5 * step * k2, k1)
        k4 = None if k3 is None else sampler(p + step * k3, k1)
        if k4 is None:
            return pts, STOP_DEGENERATE
        move = (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        p_new = p + move
        if not _inside(spec, p_new):
            return pts, STOP_DOMAIN
        if degeneracy is not None:
            ratio = bilinear_scalar_grid(degeneracy, spec, p_new[None])[0]
            if not np.isfinite(ratio) or ratio < deg_threshold:
                return pts, STOP_DEGENERATE
        ref = move / np.linalg.norm(move)
        length += np.linalg.norm(move)
        p = p_new
        pts.append(p.copy())


def integrate_line_field(dir_field: np.ndarray, spec: GridSpec,
                         seed: np.ndarray, step: float, max_len: float,
                         degeneracy: np.ndarray | None = None,
                         deg_threshold: float = DEGENERACY_RATIO,
                         family: str = "", seed_id: int = 0) -> LineFieldCurve:
    """Integrate a unit direction field through `seed`, growing both ways.

    max_len is the total arc-length budget (half per side).  `degeneracy`
    is an optional scalar ratio grid (e.g. sigma2/sigma1); falling below
    deg_threshold stops the curve.
    """
    seed = np.asarray(seed, dtype=np.float64)
    sampler = _DirectionSampler(np.asarray(dir_field, dtype=np.float64), spec)
    if not _inside(spec, seed):
        raise ValueError("seed outside the grid domain")
    ref0 = sampler(seed, np.array([1.0, 0.0]))
    if ref0 is None:
        raise ValueError("degenerate direction field at seed")
    if degeneracy is not None:
        ratio = bilinear_scalar_grid(degeneracy, spec, seed[None])[0]
        if not np.isfinite(ratio) or ratio < deg_threshold:
            raise ValueError("degenerate direction field at seed")
    half = max_len / 2.0
    fwd, reason_f = _grow(sampler, spec, degeneracy, deg_threshold,
                          seed, ref0, step, half)
    bwd, reason_b = _grow(sampler, spec, degeneracy, deg_threshold,
                          seed, -ref0, step, half)
    pts = np.array(list(reversed(bwd)) + [seed] + fwd)
    reasons = {reason_b, reason_f}
    for pick in (STOP_DEGENERATE, STOP_DOMAIN, STOP_MAXLEN):
        if pick in reasons:
            reason = pick
            break
    return LineFieldCurve(points=pts, family=family, seed=seed,
                          stop_reason=reason, seed_id=seed_id)


def shrink_lines_through_seeds(svd: SvdFields, seeds, step: float,
                               max_len: float):
    """xi1 integral curves (repelling-LCS candidates at t1) through seeds."""
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = svd.sigma2f / svd.sigma1f
    curves = []
    for s in seeds:
        curves.append(integrate_line_field(
            svd.xi1, svd.spec, s.position, step, max_len,
            degeneracy=ratio, family="xi1", seed_id=s.seed_id))
    return curves


def resample_arclength(points: np.ndarray, n: int) -> np.ndarray:
    """Resample a polyline at n uniformly spaced arc-length fractions."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 2:
        return np.repeat(pts, n, axis=0)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total == 0.0:
        return np.repeat(pts[:1], n, axis=0)
    targets = np.linspace(0.0, total, n)
    out = np.empty((n, 2))
    out[:, 0] = np.interp(targets, s, pts[:, 0])
    out[:, 1] = np.interp(targets, s, pts[:, 1])
    return out


def _point_segment_dist(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Min distance from each point of P to the polyline Q."""
    if Q.shape[0] == 1:
        return np.linalg.norm(P - Q[0], axis=1)
    A = Q[:-1]
    D = Q[1:] - Q[:-1]
    L2 = np.maximum(np.sum(D * D, axis=1), 1e-300)
    best = np.full(P.shape[0], np.inf)
    chunk = max(1, 2_000_000 // max(A.shape[0], 1))
    for lo in range(0, P.shape[0], chunk):
        p = P[lo:lo + chunk]
        W = p[:, None, :] - A[None, :, :]
        tpar = np.clip(np.einsum("psk,sk->ps", W, D) / L2, 0.0, 1.0)
        diff = W - tpar[..., None] * D[None, :, :]
        best[lo:lo + chunk] = np.sqrt(np.min(np.sum(diff ** 2, axis=-1),
                                             axis=1))
    return best


def hausdorff_distance(a: np.ndarray, b: np.ndarray,
                       max_points: int = 1500) -> float:
    """Symmetric point-to-polyline Hausdorff distance."""
    A = np.asarray(a, dtype=np.float64)
    B = np.asarray(b, dtype=np.float64)
    if A.shape[0] > max_points:
        A = resample_arclength(A, max_points)
    if B.shape[0] > max_points:
        B = resample_arclength(B, max_points)
    d_ab = np.max(_point_segment_dist(A, B))
    d_ba = np.max(_point_segment_dist(B, A))
    return float(max(d_ab, d_ba))


def _metric_stats(samples: np.ndarray) -> dict:
    good = samples[np.isfinite(samples)]
    if good.size == 0:
        return {"min": None, "median": None, "max": None}
    return {"min": float(np.min(good)), "median": float(np.median(good)),
            "max": float(np.max(good))}


def compare_curves(curve_a, curve_b, metric_field: np.ndarray | None = None,
                   metric_spec: GridSpec | None = None,
                   periodic=(False, False), n_samples: int = 200) -> dict:
    """Report symmetric Hausdorff distance, arc lengths and, when a scalar
    metric grid is given, its statistics sampled at uniform arc-length
    fractions along each curve."""
    A = np.asarray(getattr(curve_a, "points", curve_a), dtype=np.float64)
    B = np.asarray(getattr(curve_b, "points", curve_b), dtype=np.float64)
    report = {
        "hausdorff": hausdorff_distance(A, B),
        "arc_length_a": float(np.sum(np.linalg.norm(np.diff(A, axis=0),
                                                    axis=1))),
        "arc_length_b": float(np.sum(np.linalg.norm(np.diff(B, axis=0),
                                                    axis=1))),
    }
    if metric_field is not None:
        from ._interp import sample_scalar_grid
        sa = sample_scalar_grid(metric_field, metric_spec,
                                resample_arclength(A, n_samples), periodic)
        sb = sample_scalar_grid(metric_field, metric_spec,
                                resample_arclength(B, n_samples), periodic)
        report["metric_a"] = _metric_stats(sa)
        report["metric_b"] = _metric_stats(sb)
    return report
