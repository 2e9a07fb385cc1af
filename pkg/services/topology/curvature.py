"""
Non-Abelian Berry curvature from gauge-transported Wilson loops.

Links between neighbouring frames are unitarised overlaps U_a† U_b. A loop is transported
back to a base point, and its principal logarithm divided by the enclosed area gives the
curvature F_μν = i log W / (h_μ h_ν), a Hermitian r x r matrix per cell.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from exceptions import RefineGridError
from services.topology.frames import stencil

logger = logging.getLogger(__name__)

# Links whose smallest singular value falls below this are treated as singular
LINK_TOL = 1e-2

# Loops with an eigenphase within this distance of ±π are subdivided (or flagged)
BRANCH_MARGIN = 0.2


@dataclass
class Plaquettes:
    """Curvature (n0-1, n1-1, r, r) of a corner-based grid and its flagged cells"""
    curvature: np.ndarray
    flagged: np.ndarray

    def total_flux(self, spacings) -> np.ndarray:
        """Σ F h0 h1 over all cells, an r x r matrix"""
        area = np.broadcast_to(np.multiply(*spacings), self.curvature.shape[:2])
        return np.einsum("ij,ijkl->kl", area, self.curvature)


@dataclass
class CurvatureField:
    """Curvature components sampled on a (q, θ) grid together with the Chern form"""
    q: np.ndarray
    theta: np.ndarray
    dq: np.ndarray
    dtheta: np.ndarray
    components: Dict[Tuple[str, str], np.ndarray]
    trace: np.ndarray
    chern_form: np.ndarray
    closed: Optional[np.ndarray] = None
    metadata: Dict[str, float] = field(default_factory=dict)

    def component(self, mu: str, nu: str) -> np.ndarray:
        if (mu, nu) in self.components:
            return self.components[(mu, nu)]
        return -self.components[(nu, mu)]


def _dagger(u: np.ndarray) -> np.ndarray:
    return np.swapaxes(u.conj(), -1, -2)


def link_matrix(u_a: np.ndarray, u_b: np.ndarray, tol: float = LINK_TOL) -> np.ndarray:
    """
    Unitary part of the overlap U_a† U_b via its polar decomposition.

    Raises:
        RefineGridError: An overlap is (close to) singular.
    """
    overlap = _dagger(u_a) @ u_b
    left, sv, right = np.linalg.svd(overlap)
    smallest = float(np.min(sv)) if sv.size else 1.0
    if smallest < tol:
        where = np.unravel_index(np.argmin(sv[..., -1]), sv.shape[:-1]) if sv.ndim > 1 else ()
        raise RefineGridError(
            f"link overlap is singular (σ_min={smallest:.2e}); refine the grid",
            {"grid_index": tuple(int(i) for i in where), "sigma_min": smallest},
        )
    return left @ right


def unitary_log(w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Principal logarithm of a batch of unitary matrices.

    Returns:
        (log W, largest |eigenphase|) with shapes (..., r, r) and (...).
    """
    w = np.asarray(w, dtype=complex)
    r = w.shape[-1]
    if r == 1:
        log_w = np.log(w)
        return log_w, np.abs(log_w.imag[..., 0, 0])
    if r == 2:
        tr = w[..., 0, 0] + w[..., 1, 1]
        det = w[..., 0, 0] * w[..., 1, 1] - w[..., 0, 1] * w[..., 1, 0]
        disc = np.sqrt(tr * tr - 4 * det)
        l1 = (tr + disc) / 2
        l2 = (tr - disc) / 2
        log1, log2 = np.log(l1), np.log(l2)
        close = np.abs(l2 - l1) < 1e-9
        safe = np.where(close, 1.0, l2 - l1)
        divided = np.where(close, 1.0 / l1, (log2 - log1) / safe)
        eye = np.eye(2)
        log_w = log1[..., None, None] * eye + divided[..., None, None] * (w - l1[..., None, None] * eye)
        phase = np.maximum(np.abs(log1.imag), np.abs(log2.imag))
        return log_w, phase
    values, vectors = np.linalg.eig(w)
    logs = np.log(values)
    log_w = vectors @ (logs[..., :, None] * np.linalg.inv(vectors))
    return log_w, np.max(np.abs(logs.imag), axis=-1)


def _hermitian(f: np.ndarray) -> np.ndarray:
    return (f + _dagger(f)) / 2


def loop_holonomy(frame_fn: Callable, base: np.ndarray, center: np.ndarray, axes: Tuple[int, int],
                  h_mu: np.ndarray, h_nu: np.ndarray) -> np.ndarray:
    """
    Wilson loop around the rectangle centred at center, transported to base.

    The path is base -> c1 -> c2 -> c3 -> c4 -> c1 -> base with c1 the lower-left corner, so
    the rectangle is traversed in the positive (μ, ν) orientation.
    """
    mu, nu = axes
    lower = stencil(center, mu, -h_mu / 2)
    upper = stencil(center, mu, h_mu / 2)
    corners = [
        stencil(lower, nu, -h_nu / 2),
        stencil(upper, nu, -h_nu / 2),
        stencil(upper, nu, h_nu / 2),
        stencil(lower, nu, h_nu / 2),
    ]
    frames = frame_fn(np.stack([base] + corners))
    u0, c1, c2, c3, c4 = frames
    return (link_matrix(u0, c1) @ link_matrix(c1, c2) @ link_matrix(c2, c3)
            @ link_matrix(c3, c4) @ link_matrix(c4, c1) @ link_matrix(c1, u0))


def point_curvature(frame_fn: Callable, points: np.ndarray, axes: Tuple[int, int], steps: np.ndarray,
                    branch_margin: float = BRANCH_MARGIN) -> np.ndarray:
    """
    F_μν at every point from a loop of size steps[μ] x steps[ν] centred on it.

    Loops whose eigenphases approach ±π are split into four quadrant loops based at the
    same point; the quadrant logarithms are summed over the full area.

    Args:
        frame_fn: Map from points (..., 4) to frames (..., n, r).
        points: Base points (N, 4).
        axes: Coordinate indices (μ, ν).
        steps: Loop sizes per point and coordinate (N, 4).
        branch_margin: Distance from ±π that triggers subdivision.

    Returns:
        Hermitian curvature matrices (N, r, r).
    """
    points = np.asarray(points, dtype=float)
    steps = np.broadcast_to(np.asarray(steps, dtype=float), points.shape)
    mu, nu = axes
    h_mu, h_nu = steps[..., mu], steps[..., nu]
    area = (h_mu * h_nu)[..., None, None]

    log_w, phase = unitary_log(loop_holonomy(frame_fn, points, points, axes, h_mu, h_nu))
    flagged = phase > np.pi - branch_margin
    if np.any(flagged):
        idx = np.flatnonzero(flagged)
        base = points[idx]
        hm, hn = h_mu[idx] / 2, h_nu[idx] / 2
        total = np.zeros_like(log_w[idx])
        still = np.zeros(len(idx), dtype=bool)
        for s_mu in (-1, 1):
            for s_nu in (-1, 1):
                center = stencil(stencil(base, mu, s_mu * hm / 2), nu, s_nu * hn / 2)
                quad_log, quad_phase = unitary_log(loop_holonomy(frame_fn, base, center, axes, hm, hn))
                total += quad_log
                still |= quad_phase > np.pi - branch_margin
        log_w[idx] = total
        logger.debug(f"Subdivided {len(idx)} loops near the log branch cut")
        if np.any(still):
            logger.warning(f"{int(still.sum())} cells stay near the log branch cut after subdivision")
    return _hermitian(1j * log_w / area)


def plaquette_curvature(frames: np.ndarray, spacings=(1.0, 1.0),
                        branch_margin: float = BRANCH_MARGIN) -> Plaquettes:
    """
    Curvature of every cell of a 2D grid of frames (n0, n1, n, r), loops based at the cell's
    lower-left corner.

    Args:
        frames: Orthonormal frames on the grid corners.
        spacings: (h0, h1) as scalars or arrays broadcastable to (n0-1, n1-1).
        branch_margin: Distance from ±π beyond which a cell is flagged.
    """
    frames = np.asarray(frames, dtype=complex)
    a = frames[:-1, :-1]
    b = frames[1:, :-1]
    c = frames[1:, 1:]
    d = frames[:-1, 1:]
    w = link_matrix(a, b) @ link_matrix(b, c) @ link_matrix(c, d) @ link_matrix(d, a)
    log_w, phase = unitary_log(w)
    h0, h1 = (np.asarray(s, dtype=float) for s in spacings)
    area = np.broadcast_to(h0 * h1, w.shape[:2])[..., None, None]
    flagged = phase > np.pi - branch_margin
    if np.any(flagged):
        logger.warning(f"{int(flagged.sum())} plaquettes flagged near the log branch cut")
    return Plaquettes(curvature=_hermitian(1j * log_w / area), flagged=flagged)
