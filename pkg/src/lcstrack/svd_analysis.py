"""Closed-form 2x2 SVD of deformation gradients and derived stretch fields.

The decomposition M = Theta Sigma Xi^T is computed non-iteratively: the
dominant right singular direction is the major principal axis of M^T M,
obtained from a single atan2, and the left vectors follow from
theta_i = M xi_i / sigma_i.  Sign convention: xi2 has nonnegative first
component (ties broken toward nonnegative second component) and
xi1 = rotate(xi2, +90 deg), so downstream line-field integration sees a
deterministic representative of each axis.

Backward singular values are constructed, not measured: the linearized
inverse flow map has sigma2_b(x2) = 1/sigma1_f(x1) and
sigma1_b(x2) = 1/sigma2_f(x1) at the advected position x2.

SVD file format ("LCSSVD01", little-endian): a fixed header (grid spec,
time pair, incompressible flag, channel count) followed by named channels,
each stored as name length / name bytes / component count / float64 data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import GridFileError
from .flow_map import (FlowMapGrid, GridSpec, deformation_gradient_at_points)

DEGENERATE_RTOL = 1e-9

SVD_MAGIC = b"LCSSVD01"
_SVD_HEADER = struct.Struct("<8s2q4d2dBq")


@dataclass
class SvdFields:
    """Per-grid-point SVD of the deformation gradient and derived fields.

    Right singular vectors xi1, xi2 live at the seed grid points x1; left
    singular vectors theta1, theta2 and the backward singular values are
    attached at the advected positions x2.
    """

    spec: GridSpec
    t_a: float
    t_b: float
    incompressible: bool
    x2: np.ndarray          # (ny, nx, 2) advected positions
    sigma1f: np.ndarray
    sigma2f: np.ndarray
    xi1: np.ndarray         # (ny, nx, 2)
    xi2: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    sigma1b: np.ndarray
    sigma2b: np.ndarray
    ftle_f: np.ndarray
    ftle_b: np.ndarray
    valid: np.ndarray       # (ny, nx) bool
    degenerate: np.ndarray  # (ny, nx) bool; singular vectors unreliable

    @property
    def T(self) -> float:
        return self.t_b - self.t_a


def _svd_arrays(M: np.ndarray):
    """Vectorized closed-form SVD of (..., 2, 2) matrices."""
    a = M[..., 0, 0]
    b = M[..., 0, 1]
    c = M[..., 1, 0]
    d = M[..., 1, 1]
    # M^T M = [[A, B], [B, C]]
    A = a * a + c * c
    B = a * b + c * d
    C = b * b + d * d
    phi = 0.5 * np.arctan2(2.0 * B, A - C)   # major principal axis angle
    xi2 = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    xi1 = np.stack([-xi2[..., 1], xi2[..., 0]], axis=-1)

    w2 = np.einsum("...ij,...j->...i", M, xi2)
    w1 = np.einsum("...ij,...j->...i", M, xi1)
    sigma2 = np.linalg.norm(w2, axis=-1)
    sigma1 = np.linalg.norm(w1, axis=-1)

    # the atan2 branch picks the larger eigenvalue; near-degenerate rounding
    # can still swap the pair, so repair while keeping the sign convention
    swap = sigma1 > sigma2
    if np.any(swap):
        xi2_new = np.where(swap[..., None], xi1, xi2)
        flip = xi2_new[..., 0] < 0
        flip |= (xi2_new[..., 0] == 0) & (xi2_new[..., 1] < 0)
        xi2_new = np.where(flip[..., None], -xi2_new, xi2_new)
        xi2 = xi2_new
        xi1 = np.stack([-xi2[..., 1], xi2[..., 0]], axis=-1)
        w2 = np.einsum("...ij,...j->...i", M, xi2)
        w1 = np.einsum("...ij,...j->...i", M, xi1)
        sigma2 = np.linalg.norm(w2, axis=-1)
        sigma1 = np.linalg.norm(w1, axis=-1)

    with np.errstate(divide="ignore", invalid="ignore"):
        theta2 = w2 / sigma2[..., None]
        theta1 = w1 / sigma1[..., None]
    return sigma2, sigma1, xi2, xi1, theta2, theta1


def svd2x2(M: np.ndarray):
    """SVD of one finite, nonsingular 2x2 matrix.

    Returns (sigma2, sigma1, xi2, xi1, theta2, theta1) such that
    M xi_i = sigma_i theta_i with sigma2 >= sigma1 > 0.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.shape != (2, 2):
        raise ValueError("expected a 2x2 matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("non-finite matrix")
    if M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0] == 0.0:
        raise ValueError("singular matrix")
    sigma2, sigma1, xi2, xi1, theta2, theta1 = _svd_arrays(M[None])
    return (float(sigma2[0]), float(sigma1[0]), xi2[0], xi1[0],
            theta2[0], theta1[0])


def ftle(sigma2: np.ndarray, T: float) -> np.ndarray:
    """Average exponential stretching rate log(sigma2)/T."""
    if T <= 0:
        raise ValueError("T must be positive")
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    if np.any(sigma2[np.isfinite(sigma2)] <= 0):
        raise ValueError("sigma2 must be positive")
    with np.errstate(invalid="ignore"):
        return np.log(sigma2) / T


def analyze(fmg: FlowMapGrid, incompressible: bool = True) -> SvdFields:
    """SVD every stored deformation gradient and fill the derived fields."""
    if fmg.DF is None:
        raise ValueError("flow map grid carries no deformation gradients")
    DF = fmg.DF
    mask = fmg.mask.copy()
    finite = np.all(np.isfinite(DF), axis=(-2, -1))
    det = DF[..., 0, 0] * DF[..., 1, 1] - DF[..., 0, 1] * DF[..., 1, 0]
    valid = mask & finite & (det != 0.0)

    work = np.where(valid[..., None, None], DF, np.eye(2))
    sigma2, sigma1, xi2, xi1, theta2, theta1 = _svd_arrays(work)

    degenerate = valid & ((sigma2 - sigma1) <= DEGENERATE_RTOL * sigma2)

    T = abs(fmg.T)
    nanify = ~valid
    for arr in (sigma2, sigma1):
        arr[nanify] = np.nan
    for arr in (xi2, xi1, theta2, theta1):
        arr[nanify] = np.nan

    sigma2b = 1.0 / sigma1
    sigma1b = 1.0 / sigma2
    return SvdFields(spec=fmg.spec, t_a=fmg.t_a, t_b=fmg.t_b,
                     incompressible=incompressible, x2=fmg.X.copy(),
                     sigma1f=sigma1, sigma2f=sigma2,
                     xi1=xi1, xi2=xi2, theta1=theta1, theta2=theta2,
                     sigma1b=sigma1b, sigma2b=sigma2b,
                     ftle_f=ftle(sigma2, T), ftle_b=ftle(sigma2b, T),
                     valid=valid, degenerate=degenerate)


def ftle_at_points(field, points: np.ndarray, t_a: float, t_b: float,
                   tol: float = 1e-8, rho: float = 1e-4):
    """Pointwise FTLE at arbitrary locations via auxiliary-grid gradients.

    Returns (ftle_values, ok).  Useful for sampling stretch rates along
    curves without committing to a grid interpolation.
    """
    _, DF, ok = deformation_gradient_at_points(field, points, t_a, t_b,
                                               tol=tol, rho=rho)
    work = np.where(ok[..., None, None], DF, np.eye(2))
    sigma2 = _svd_arrays(work)[0]
    T = abs(t_b - t_a)
    vals = np.where(ok, np.log(sigma2) / T, np.nan)
    return vals, ok


_CHANNELS = ("x2", "sigma1f", "sigma2f", "xi1", "xi2", "theta1", "theta2",
             "sigma1b", "sigma2b", "ftle_f", "ftle_b", "valid", "degenerate")


def save_svd_fields(sf: SvdFields, path) -> None:
    spec = sf.spec
    with open(path, "wb") as fh:
        fh.write(_SVD_HEADER.pack(SVD_MAGIC, spec.nx, spec.ny,
                                  spec.x_min, spec.x_max, spec.y_min,
                                  spec.y_max, sf.t_a, sf.t_b,
                                  int(sf.incompressible), len(_CHANNELS)))
        for name in _CHANNELS:
            arr = getattr(sf, name)
            data = np.asarray(arr, dtype=np.float64)
            ncomp = 1 if data.ndim == 2 else data.shape[-1]
            raw = name.encode()
            fh.write(struct.pack("<q", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<q", ncomp))
            fh.write(data.astype("<f8").tobytes())


def load_svd_fields(path) -> SvdFields:
    with open(path, "rb") as fh:
        head = fh.read(_SVD_HEADER.size)
        if len(head) < _SVD_HEADER.size:
            raise GridFileError(f"malformed header: file {path} truncated")
        (magic, nx, ny, x_min, x_max, y_min, y_max, t_a, t_b, inc,
         nchan) = _SVD_HEADER.unpack(head)
        if magic != SVD_MAGIC:
            raise GridFileError(f"malformed header: bad magic {magic!r}")
        channels = {}
        for _ in range(nchan):
            (nlen,) = struct.unpack("<q", fh.read(8))
            name = fh.read(nlen).decode()
            (ncomp,) = struct.unpack("<q", fh.read(8))
            count = ny * nx * ncomp
            data = np.frombuffer(fh.read(8 * count), dtype="<f8")
            if data.size != count:
                raise GridFileError(f"shape mismatch in channel {name!r}")
            shape = (ny, nx) if ncomp == 1 else (ny, nx, ncomp)
            channels[name] = data.reshape(shape).copy()
    missing = [c for c in _CHANNELS if c not in channels]
    if missing:
        raise GridFileError(f"missing channels: {missing}")
    return SvdFields(spec=GridSpec(x_min, x_max, y_min, y_max, nx, ny),
                     t_a=t_a, t_b=t_b, incompressible=bool(inc),
                     x2=channels["x2"],
                     sigma1f=channels["sigma1f"], sigma2f=channels["sigma2f"],
                     xi1=channels["xi1"], xi2=channels["xi2"],
                     theta1=channels["theta1"], theta2=channels["theta2"],
                     sigma1b=channels["sigma1b"], sigma2b=channels["sigma2b"],
                     ftle_f=channels["ftle_f"], ftle_b=channels["ftle_b"],
                     valid=channels["valid"].astype(bool),
                     degenerate=channels["degenerate"].astype(bool))
