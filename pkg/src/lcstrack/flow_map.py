"""Particle advection and grid flow maps with finite-differenced gradients.

Trajectories are integrated with an embedded Dormand-Prince 5(4) pair under
PI step control (default absolute/relative tolerance 1e-8).  Deformation
gradients come either from central differences of neighboring advected grid
points ("main") or from four auxiliary points offset by rho around each node
("aux").  Advected positions are never wrapped, so differences across
periodic domains stay meaningful.

Flow-map file format ("LCSFMAP1", little-endian):

    magic                  8 bytes  b"LCSFMAP1"
    nx, ny                 2 x int64
    x_min, x_max,
    y_min, y_max           4 x float64
    t_a, t_b               2 x float64
    method                 uint8  (0 none, 1 main, 2 aux)
    rho, tol               2 x float64  (rho = NaN when not applicable)
    X                      ny*nx*2 x float64
    DF                     ny*nx*4 x float64  (NaN when absent)
    mask                   ny*nx x uint8  (1 = valid)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import DomainError, GridFileError, IntegrationError
from .velocity import VelocityField

DEFAULT_TOL = 1e-8
DEFAULT_RHO_FACTOR = 1e-2   # aux offset as a fraction of the grid spacing

FMAP_MAGIC = b"LCSFMAP1"
_FMAP_HEADER = struct.Struct("<8s2q4d2dB2d")
_METHOD_CODES = {"none": 0, "main": 1, "aux": 2}
_METHOD_NAMES = {v: k for k, v in _METHOD_CODES.items()}


@dataclass(frozen=True)
class GridSpec:
    """Uniform rectangular seed grid."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 nodes per axis")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("degenerate grid bounds")

    @property
    def hx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    def points(self) -> np.ndarray:
        """All nodes as an (ny, nx, 2) array."""
        gx, gy = np.meshgrid(self.xs, self.ys)
        return np.stack([gx, gy], axis=-1)


@dataclass
class FlowMapGrid:
    spec: GridSpec
    t_a: float
    t_b: float
    X: np.ndarray                 # (ny, nx, 2) advected positions
    mask: np.ndarray              # (ny, nx) bool, True = valid
    DF: np.ndarray | None = None  # (ny, nx, 2, 2)
    method: str = "none"
    rho: float = float("nan")
    tol: float = DEFAULT_TOL

    @property
    def T(self) -> float:
        return self.t_b - self.t_a


def advect_points(field: VelocityField, points: np.ndarray, t_a: float,
                  t_b: float, tol: float = DEFAULT_TOL):
    """Advect an (n, 2) batch of points from t_a to t_b (t_b < t_a allowed).

    Returns (X, ok, t_err): advected positions, per-point success flags and,
    for failed points, the approximate failure time.
    """
    pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    n = pts.shape[0]
    out_x = np.empty(n)
    out_y = np.empty(n)
    status = np.empty(n, dtype=np.uint8)
    terr = np.empty(n)
    _kernels.advect_batch(*field.kernel_args(),
                          np.ascontiguousarray(pts[:, 0]),
                          np.ascontiguousarray(pts[:, 1]),
                          float(t_a), float(t_b), tol, tol,
                          out_x, out_y, status, terr)
    return np.stack([out_x, out_y], axis=-1), status == _kernels.OK, terr


def advect_point(field: VelocityField, x0, t_a: float, t_b: float,
                 tol: float = DEFAULT_TOL) -> np.ndarray:
    """Advect a single point; raises on domain exit or step failure."""
    X, ok, terr = advect_points(field, np.asarray(x0, dtype=np.float64)[None],
                                t_a, t_b, tol)
    if not ok[0]:
        if np.isfinite(terr[0]):
            raise DomainError(
                f"trajectory from ({x0[0]:g}, {x0[1]:g}) left the domain "
                f"near t={terr[0]:g}", exit_time=float(terr[0]))
        raise IntegrationError("integration failed (step underflow or budget)")
    return X[0]


def compute_flow_map_grid(field: VelocityField, spec: GridSpec, t_a: float,
                          t_b: float, tol: float = DEFAULT_TOL) -> FlowMapGrid:
    """Advect every grid node; per-node domain exits become masked entries."""
    pts = spec.points().reshape(-1, 2)
    X, ok, _ = advect_points(field, pts, t_a, t_b, tol)
    return FlowMapGrid(spec=spec, t_a=t_a, t_b=t_b,
                       X=X.reshape(spec.ny, spec.nx, 2),
                       mask=ok.reshape(spec.ny, spec.nx), tol=tol)


def deformation_gradient_main(fmg: FlowMapGrid) -> FlowMapGrid:
    """Gradient by finite differences of the advected positions along the
    seed grid (central in the interior, one-sided at the boundary)."""
    X = fmg.X
    ny, nx = fmg.mask.shape
    hx, hy = fmg.spec.hx, fmg.spec.hy
    DF = np.full((ny, nx, 2, 2), np.nan)

    dx = np.empty_like(X)
    dx[:, 1:-1] = (X[:, 2:] - X[:, :-2]) / (2.0 * hx)
    dx[:, 0] = (X[:, 1] - X[:, 0]) / hx
    dx[:, -1] = (X[:, -1] - X[:, -2]) / hx

    dy = np.empty_like(X)
    dy[1:-1, :] = (X[2:, :] - X[:-2, :]) / (2.0 * hy)
    dy[0, :] = (X[1, :] - X[0, :]) / hy
    dy[-1, :] = (X[-1, :] - X[-2, :]) / hy

    DF[..., 0, 0] = dx[..., 0]
    DF[..., 1, 0] = dx[..., 1]
    DF[..., 0, 1] = dy[..., 0]
    DF[..., 1, 1] = dy[..., 1]

    # a masked neighbor invalidates the stencil
    ok = fmg.mask
    okx = ok.copy()
    okx[:, 1:-1] &= ok[:, 2:] & ok[:, :-2]
    okx[:, 0] &= ok[:, 1]
    okx[:, -1] &= ok[:, -2]
    oky = ok.copy()
    oky[1:-1, :] &= ok[2:, :] & ok[:-2, :]
    oky[0, :] &= ok[1, :]
    oky[-1, :] &= ok[-2, :]
    mask = ok & okx & oky
    mask &= _orientation_ok(DF)
    DF[~mask] = np.nan
    return replace(fmg, DF=DF, mask=mask, method="main")


def _orientation_ok(DF: np.ndarray) -> np.ndarray:
    """Valid gradients are finite with positive determinant; differencing
    that straddles an unresolved fold fails this and gets masked."""
    with np.errstate(invalid="ignore"):
        det = DF[..., 0, 0] * DF[..., 1, 1] - DF[..., 0, 1] * DF[..., 1, 0]
        return np.all(np.isfinite(DF), axis=(-2, -1)) & (det > 0.0)


def deformation_gradient_at_points(field: VelocityField, centers: np.ndarray,
                                   t_a: float, t_b: float,
                                   tol: float = DEFAULT_TOL,
                                   rho: float = 1e-4):
    """Auxiliary-grid gradient at arbitrary points.

    Advects x +/- rho*e1 and x +/- rho*e2 per center; column i of DF is the
    centered difference of the advected offsets.  Each 5-point stencil is
    integrated with one shared adaptive step sequence so integration error
    is common-mode and cancels in the differences.  Returns (X, DF, ok)
    where X are the advected centers; a stencil whose member exits the
    domain is masked whole.
    """
    c = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    n = c.shape[0]
    out_x = np.empty((n, 5))
    out_y = np.empty((n, 5))
    status = np.empty(n, dtype=np.uint8)
    terr = np.empty(n)
    _kernels.advect_stencil_batch(*field.kernel_args(),
                                  np.ascontiguousarray(c[:, 0]),
                                  np.ascontiguousarray(c[:, 1]), float(rho),
                                  float(t_a), float(t_b), tol, tol,
                                  out_x, out_y, status, terr)
    ok = status == _kernels.OK
    Xc = np.stack([out_x[:, 0], out_y[:, 0]], axis=-1)
    DF = np.full((n, 2, 2), np.nan)
    DF[:, 0, 0] = (out_x[:, 1] - out_x[:, 2]) / (2.0 * rho)
    DF[:, 1, 0] = (out_y[:, 1] - out_y[:, 2]) / (2.0 * rho)
    DF[:, 0, 1] = (out_x[:, 3] - out_x[:, 4]) / (2.0 * rho)
    DF[:, 1, 1] = (out_y[:, 3] - out_y[:, 4]) / (2.0 * rho)
    ok &= _orientation_ok(DF)
    DF[~ok] = np.nan
    Xc[~ok] = np.nan
    return Xc, DF, ok


def deformation_gradient_aux(field: VelocityField, spec: GridSpec, t_a: float,
                             t_b: float, tol: float = DEFAULT_TOL,
                             rho: float | None = None) -> FlowMapGrid:
    """Flow map plus auxiliary-grid deformation gradient on a seed grid.

    rho defaults to 1e-2 * min(hx, hy).  Too-small rho amplifies integrator
    noise in the differences; too-large rho biases the gradient toward a
    secant of the flow map.
    """
    if rho is None:
        rho = DEFAULT_RHO_FACTOR * min(spec.hx, spec.hy)
    centers = spec.points().reshape(-1, 2)
    X, DF, ok = deformation_gradient_at_points(field, centers, t_a, t_b,
                                               tol=tol, rho=rho)
    return FlowMapGrid(spec=spec, t_a=t_a, t_b=t_b,
                       X=X.reshape(spec.ny, spec.nx, 2),
                       mask=ok.reshape(spec.ny, spec.nx),
                       DF=DF.reshape(spec.ny, spec.nx, 2, 2),
                       method="aux", rho=rho, tol=tol)


def save_flow_map(fmg: FlowMapGrid, path) -> None:
    spec = fmg.spec
    with open(path, "wb") as fh:
        fh.write(_FMAP_HEADER.pack(
            FMAP_MAGIC, spec.nx, spec.ny,
            spec.x_min, spec.x_max, spec.y_min, spec.y_max,
            fmg.t_a, fmg.t_b, _METHOD_CODES[fmg.method], fmg.rho, fmg.tol))
        fh.write(fmg.X.astype("<f8").tobytes())
        DF = fmg.DF if fmg.DF is not None else np.full(
            (spec.ny, spec.nx, 2, 2), np.nan)
        fh.write(DF.astype("<f8").tobytes())
        fh.write(fmg.mask.astype(np.uint8).tobytes())


def load_flow_map(path) -> FlowMapGrid:
    with open(path, "rb") as fh:
        head = fh.read(_FMAP_HEADER.size)
        if len(head) < _FMAP_HEADER.size:
            raise GridFileError(f"malformed header: file {path} truncated")
        (magic, nx, ny, x_min, x_max, y_min, y_max, t_a, t_b, method,
         rho, tol) = _FMAP_HEADER.unpack(head)
        if magic != FMAP_MAGIC:
            raise GridFileError(f"malformed header: bad magic {magic!r}")
        payload = fh.read()
    nxy = nx * ny
    expected = 8 * (2 * nxy + 4 * nxy) + nxy
    if len(payload) != expected:
        raise GridFileError(f"shape mismatch: payload {len(payload)} bytes, "
                            f"header implies {expected}")
    X = np.frombuffer(payload[:16 * nxy], dtype="<f8").reshape(ny, nx, 2).copy()
    DF = np.frombuffer(payload[16 * nxy:48 * nxy],
                       dtype="<f8").reshape(ny, nx, 2, 2).copy()
    mask = np.frombuffer(payload[48 * nxy:], dtype=np.uint8) \
        .reshape(ny, nx).astype(bool)
    method_name = _METHOD_NAMES.get(method)
    if method_name is None:
        raise GridFileError(f"malformed header: unknown method code {method}")
    if method_name == "none" and np.isnan(DF).all():
        DF_out = None
    else:
        DF_out = DF
    return FlowMapGrid(spec=GridSpec(x_min, x_max, y_min, y_max, nx, ny),
                       t_a=t_a, t_b=t_b, X=X, mask=mask, DF=DF_out,
                       method=method_name, rho=rho, tol=tol)
