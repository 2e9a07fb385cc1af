"""
Band frames over parameter grids and the Hopf parametrisation of 4-momenta.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from exceptions import DegeneracyCrossingError, PreconditionError
from models.schemas import ModelParams
from services.gamma_model import fix_phases, valley_hamiltonian

logger = logging.getLogger(__name__)

# Index of each Hopf coordinate in a point array (..., 4)
Q, THETA, PHI, VARPHI = 0, 1, 2, 3
AXIS_NAMES = ("q", "theta", "phi", "varphi")

Filling = Union[str, Tuple[int, ...]]


@dataclass
class BandSubspace:
    """Orthonormal frames (..., 4, r) of the selected bands and their energies (..., r)"""
    frame: np.ndarray
    energy: np.ndarray
    bands: Tuple[int, ...]

    @property
    def rank(self) -> int:
        return self.frame.shape[-1]


def hopf_embed(points) -> np.ndarray:
    """(q, θ, φ, ϕ) -> (q cosθ cosφ, q cosθ sinφ, q sinθ cosϕ, q sinθ sinϕ)"""
    points = np.asarray(points, dtype=float)
    q, theta, phi, varphi = (points[..., i] for i in range(4))
    return np.stack([
        q * np.cos(theta) * np.cos(phi),
        q * np.cos(theta) * np.sin(phi),
        q * np.sin(theta) * np.cos(varphi),
        q * np.sin(theta) * np.sin(varphi),
    ], axis=-1)


def selected_bands(filling: Filling, dim: int = 4) -> Tuple[int, ...]:
    if filling == "lower":
        return tuple(range(dim // 2))
    if isinstance(filling, str):
        raise PreconditionError(f"unknown filling rule {filling!r}")
    bands = tuple(sorted(int(b) for b in filling))
    if not bands or bands[0] < 0 or bands[-1] >= dim:
        raise PreconditionError(f"band selection {bands} outside 0..{dim - 1}")
    return bands


def occupied_frame(h: np.ndarray, filling: Filling = "lower", tol_gap: float = 1e-6,
                   grid_points: Optional[np.ndarray] = None) -> BandSubspace:
    """
    Select a gapped set of bands of one or many Hermitian matrices.

    Args:
        h: Hermitian matrices (..., n, n).
        filling: "lower" for the lower half of the spectrum or explicit band indices.
        tol_gap: Minimum separation between selected and unselected energies.
        grid_points: Optional coordinates used to report where a crossing happened.

    Raises:
        DegeneracyCrossingError: A selected band touches an unselected one.
    """
    h = np.asarray(h)
    dim = h.shape[-1]
    bands = selected_bands(filling, dim)
    energies, vectors = np.linalg.eigh(h)

    others = [b for b in range(dim) if b not in bands]
    if others:
        sel = energies[..., list(bands)]
        rest = energies[..., others]
        gap = np.min(np.abs(sel[..., :, None] - rest[..., None, :]), axis=(-2, -1))
        bad = gap <= tol_gap
        if np.any(bad):
            where = tuple(int(i) for i in np.argwhere(np.atleast_1d(bad))[0])
            context = {"grid_index": where, "gap": float(np.min(gap))}
            if grid_points is not None and np.ndim(grid_points) > 1:
                context["grid_point"] = np.asarray(grid_points)[where].tolist()
            raise DegeneracyCrossingError(
                f"selected bands {bands} touch the rest of the spectrum at grid index {where}",
                context,
            )

    frame = fix_phases(vectors[..., list(bands)])
    return BandSubspace(frame=frame, energy=energies[..., list(bands)], bands=bands)


@dataclass(frozen=True)
class ValleyFrames:
    """Picklable map from Hopf points to occupied frames of one valley Hamiltonian"""
    params: ModelParams
    sign: int = 1
    filling: Filling = "lower"
    tol_gap: float = 1e-6

    def __call__(self, points: np.ndarray) -> np.ndarray:
        h = valley_hamiltonian(hopf_embed(points), self.sign, self.params)
        return occupied_frame(h, self.filling, self.tol_gap, grid_points=points).frame


def stencil(points: np.ndarray, axis: int, offset: Union[float, np.ndarray]) -> np.ndarray:
    """Copy of points displaced along one coordinate"""
    shifted = np.array(points, dtype=float, copy=True)
    shifted[..., axis] += offset
    return shifted
