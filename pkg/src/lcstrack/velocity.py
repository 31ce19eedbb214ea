"""Time-dependent 2-D velocity fields with a uniform evaluation interface.

Two variants are supported: named analytic fields (closed-form right-hand
sides, valid on all of R^2 for all t) and gridded fields sampled on a uniform
space-time grid.  Gridded evaluation is piecewise-cubic in space (local
Catmull-Rom, continuous first derivatives) and linear in time.  Queries
outside a non-periodic axis raise; periodic axes wrap.

Grid file format ("LCSGRID1", little-endian):

    magic           8 bytes  b"LCSGRID1"
    nx, ny, nt      3 x int64
    x_min, x_max,
    y_min, y_max    4 x float64
    periodic_x,
    periodic_y      2 x uint8
    times           nt x float64, strictly increasing
    u               nt*ny*nx x float64, row-major u[t][y][x]
    v               nt*ny*nx x float64, row-major v[t][y][x]

Node convention: a periodic axis has nx nodes at x_min + i*(x_max-x_min)/nx
(the x_max node is the wrapped x_min node); a non-periodic axis has nx nodes
including both endpoints.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, GridFileError

MAGIC = b"LCSGRID1"
_HEADER = struct.Struct("<8s3q4d2B")

_ANALYTIC_KINDS = {
    "zero": _kernels.KIND_ZERO,
    "duffing": _kernels.KIND_DUFFING,
    "linear_saddle": _kernels.KIND_LINEAR_SADDLE,
}

_EMPTY3 = np.empty((0, 0, 0), dtype=np.float64)
_EMPTY1 = np.empty(0, dtype=np.float64)


@dataclass(frozen=True)
class VelocityField:
    """Immutable velocity source; safe for concurrent read-only evaluation."""

    kind: str                      # "analytic" | "gridded"
    name: str = ""                 # analytic rule name
    bounds: tuple | None = None    # (x_min, x_max, y_min, y_max); None = R^2
    periodic: tuple = (False, False)
    times: np.ndarray | None = None
    u: np.ndarray | None = None    # (nt, ny, nx), unpadded samples
    v: np.ndarray | None = None
    # padded copies consumed by the compiled kernels
    _u_pad: np.ndarray = field(default=None, repr=False)
    _v_pad: np.ndarray = field(default=None, repr=False)

    @property
    def is_gridded(self) -> bool:
        return self.kind == "gridded"

    @property
    def time_window(self) -> tuple | None:
        if self.times is None or len(self.times) == 0:
            return None
        return float(self.times[0]), float(self.times[-1])

    def kernel_args(self) -> tuple:
        """Positional arguments consumed by the _kernels entry points."""
        if self.kind == "analytic":
            return (_ANALYTIC_KINDS[self.name], _EMPTY3, _EMPTY3, _EMPTY1,
                    0.0, 0.0, 0, False, 0.0, 0.0, 0, False)
        x_min, x_max, y_min, y_max = self.bounds
        nt, ny, nx = self.u.shape
        return (_kernels.KIND_GRIDDED, self._u_pad, self._v_pad,
                self.times, x_min, x_max, nx, self.periodic[0],
                y_min, y_max, ny, self.periodic[1])

    def eval(self, points: np.ndarray, t) -> np.ndarray:
        """Velocity at an (n, 2) array of points (or a single point) at time t.

        t may be a scalar or an (n,) array.  Raises DomainError for queries
        outside the declared space-time domain on a non-periodic axis.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n = pts.shape[0]
        ts = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,)).copy()
        out_u = np.empty(n)
        out_v = np.empty(n)
        out_ok = np.empty(n, dtype=np.uint8)
        _kernels.eval_batch(*self.kernel_args(),
                            np.ascontiguousarray(pts[:, 0]),
                            np.ascontiguousarray(pts[:, 1]),
                            ts, out_u, out_v, out_ok)
        if not out_ok.all():
            bad = int(np.flatnonzero(out_ok == 0)[0])
            raise DomainError(
                f"velocity query outside domain at point "
                f"({pts[bad, 0]:g}, {pts[bad, 1]:g}), t={ts[bad]:g}")
        uv = np.stack([out_u, out_v], axis=-1)
        return uv[0] if np.asarray(points).ndim == 1 else uv


def eval_velocity(vf: VelocityField, x, t) -> np.ndarray:
    """Evaluate the field at one point; thin wrapper over VelocityField.eval."""
    return vf.eval(np.asarray(x, dtype=np.float64), t)


def duffing_field() -> VelocityField:
    """Hamiltonian vector field of H = x^4/4 - 2 x^2 + y^2/2: v = (y, 4x - x^3)."""
    return VelocityField(kind="analytic", name="duffing")


def zero_field() -> VelocityField:
    return VelocityField(kind="analytic", name="zero")


def linear_saddle_field() -> VelocityField:
    """v = (x, -y); exact flow x(t) = x0 e^t, y(t) = y0 e^-t."""
    return VelocityField(kind="analytic", name="linear_saddle")


def builtin_field(name: str) -> VelocityField:
    if name not in _ANALYTIC_KINDS:
        raise ValueError(f"unknown builtin field {name!r}; "
                         f"choose from {sorted(_ANALYTIC_KINDS)}")
    return VelocityField(kind="analytic", name=name)


def _pad_axis(arr: np.ndarray, axis: int) -> np.ndarray:
    """Add one ghost node per side by quadratic extrapolation (exact on
    quadratic data, so boundary cells keep full cubic accuracy)."""
    a = np.moveaxis(arr, axis, 0)
    ghost_lo = 3.0 * a[0] - 3.0 * a[1] + a[2]
    ghost_hi = 3.0 * a[-1] - 3.0 * a[-2] + a[-3]
    out = np.concatenate([ghost_lo[None], a, ghost_hi[None]], axis=0)
    return np.moveaxis(out, 0, axis)


def _padded(arr: np.ndarray, periodic: tuple) -> np.ndarray:
    out = arr
    if not periodic[1]:
        out = _pad_axis(out, 1)   # y axis
    if not periodic[0]:
        out = _pad_axis(out, 2)   # x axis
    return np.ascontiguousarray(out)


def gridded_field(bounds, periodic, times, u, v) -> VelocityField:
    """Build a gridded field from arrays, validating the type invariants."""
    times = np.ascontiguousarray(times, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    if u.ndim != 3 or u.shape != v.shape:
        raise GridFileError("u/v shape mismatch: expected identical "
                            f"(nt, ny, nx) arrays, got {u.shape} and {v.shape}")
    if u.shape[0] != len(times):
        raise GridFileError(f"shape mismatch: {u.shape[0]} velocity slices "
                            f"for {len(times)} time stamps")
    if len(times) > 1 and not np.all(np.diff(times) > 0):
        raise GridFileError("non-monotone time axis")
    nt, ny, nx = u.shape
    min_nodes = 3 if (periodic[0] and periodic[1]) else 4
    if nx < min_nodes or ny < min_nodes:
        raise GridFileError(f"grid too small for cubic interpolation: {ny}x{nx}")
    x_min, x_max, y_min, y_max = (float(b) for b in bounds)
    if not (x_min < x_max and y_min < y_max):
        raise GridFileError("degenerate spatial bounds")
    periodic = (bool(periodic[0]), bool(periodic[1]))
    return VelocityField(kind="gridded",
                         bounds=(x_min, x_max, y_min, y_max),
                         periodic=periodic, times=times, u=u, v=v,
                         _u_pad=_padded(u, periodic),
                         _v_pad=_padded(v, periodic))


def save_gridded_field(vf: VelocityField, path) -> None:
    if not vf.is_gridded:
        raise ValueError("only gridded fields can be saved")
    nt, ny, nx = vf.u.shape
    x_min, x_max, y_min, y_max = vf.bounds
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, nx, ny, nt, x_min, x_max, y_min, y_max,
                              int(vf.periodic[0]), int(vf.periodic[1])))
        fh.write(vf.times.astype("<f8").tobytes())
        fh.write(vf.u.astype("<f8").tobytes())
        fh.write(vf.v.astype("<f8").tobytes())


def load_gridded_field(path) -> VelocityField:
    """Load a grid file, with a distinct diagnostic per malformation."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise GridFileError(f"malformed header: file {path} truncated "
                                f"({len(head)} bytes)")
        magic, nx, ny, nt, x_min, x_max, y_min, y_max, px, py = \
            _HEADER.unpack(head)
        if magic != MAGIC:
            raise GridFileError(f"malformed header: bad magic {magic!r} "
                                f"in {path}")
        if nx <= 0 or ny <= 0 or nt <= 0:
            raise GridFileError(f"malformed header: non-positive axis count "
                                f"nx={nx} ny={ny} nt={nt}")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    expected = nt + 2 * nt * ny * nx
    if payload.size != expected:
        raise GridFileError(f"shape mismatch: payload holds {payload.size} "
                            f"floats, header implies {expected}")
    times = payload[:nt].copy()
    u = payload[nt:nt + nt * ny * nx].reshape(nt, ny, nx).copy()
    v = payload[nt + nt * ny * nx:].reshape(nt, ny, nx).copy()
    return gridded_field((x_min, x_max, y_min, y_max),
                         (bool(px), bool(py)), times, u, v)
