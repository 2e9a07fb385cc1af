"""
3D winding number of the chiral block on a small hypersphere around a nodal point.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from exceptions import DegeneracyCrossingError, PreconditionError, WindingConvergenceError
from models.schemas import ModelParams
from services.gamma_model import bloch_jacobian, gamma_set, hamiltonian, monopole_positions

logger = logging.getLogger(__name__)

# Γ̃0 = diag(1, -1, -1, 1): rows of the chiral block live on +1, columns on -1
PLUS = [0, 3]
MINUS = [1, 2]

INTEGER_TOL = 0.05


@dataclass
class WindingResult:
    value: float
    refined: float
    winding: int
    radius: float
    resolution: Tuple[int, int, int]


def chiral_block(h: np.ndarray) -> np.ndarray:
    """Off-diagonal block Q of H in the eigenbasis of Γ̃0"""
    return np.asarray(h)[..., PLUS, :][..., :, MINUS]


def _sphere(center: np.ndarray, radius: float, resolution: Tuple[int, int, int]):
    n_theta, n_phi, n_varphi = resolution
    theta = (np.arange(n_theta) + 0.5) * (np.pi / 2) / n_theta
    phi = np.arange(n_phi) * 2 * np.pi / n_phi
    varphi = np.arange(n_varphi) * 2 * np.pi / n_varphi
    t, f, v = np.meshgrid(theta, phi, varphi, indexing="ij")
    ct, st = np.cos(t), np.sin(t)
    direction = np.stack([ct * np.cos(f), ct * np.sin(f), st * np.cos(v), st * np.sin(v)], axis=-1)
    tangents = radius * np.stack([
        np.stack([-st * np.cos(f), -st * np.sin(f), ct * np.cos(v), ct * np.sin(v)], axis=-1),
        np.stack([-ct * np.sin(f), ct * np.cos(f), np.zeros_like(t), np.zeros_like(t)], axis=-1),
        np.stack([np.zeros_like(t), np.zeros_like(t), -st * np.sin(v), st * np.cos(v)], axis=-1),
    ])
    cell = (np.pi / 2 / n_theta) * (2 * np.pi / n_phi) * (2 * np.pi / n_varphi)
    return center + radius * direction, tangents, cell


def winding_integral(p: ModelParams, sign: int, radius: float, resolution: Tuple[int, int, int]) -> float:
    """(1/24π²) ∮ tr[(Q⁻¹dQ)³] over the sphere, by midpoint quadrature"""
    center = (monopole_positions(p.lam).k_plus if sign > 0 else monopole_positions(p.lam).k_minus)
    k, tangents, cell = _sphere(center, radius, resolution)
    q = chiral_block(hamiltonian(k, p))

    det = np.abs(np.linalg.det(q))
    scale = np.max(np.abs(q))
    if np.min(det) <= 1e-10 * max(scale, 1e-300) ** 2:
        where = np.unravel_index(np.argmin(det), det.shape)
        raise DegeneracyCrossingError(
            f"chiral block is singular on the sphere of radius {radius}",
            {"sample": k[where].tolist(), "det": float(np.min(det))},
        )

    q_inv = np.linalg.inv(q)
    stack = gamma_set(p.a).stack()
    jac = bloch_jacobian(k, p)
    x = []
    for tangent in tangents:
        d_dot = np.einsum("...ij,...j->...i", jac, tangent)
        dq = chiral_block(np.einsum("...i,ijk->...jk", d_dot, stack))
        x.append(q_inv @ dq)
    x_t, x_f, x_v = x
    density = 3 * np.einsum("...ij,...ji->...", x_t, x_f @ x_v - x_v @ x_f)
    return float(np.sum(density).real * cell / (24 * np.pi ** 2))


def winding3_sphere(p: ModelParams, sign: int = 1, radius: float = 0.3,
                    resolution: Tuple[int, int, int] = (12, 16, 16)) -> WindingResult:
    """
    Winding number of the chiral block around K_sign.

    Args:
        p: Model parameters; m must vanish for the chiral block to exist.
        sign: Valley, +1 or -1.
        radius: Sphere radius in momentum units (rad).
        resolution: Cells along (θ, φ, ϕ); the doubled resolution is evaluated too.

    Raises:
        WindingConvergenceError: The two resolutions do not settle on the same integer.
    """
    if p.m != 0:
        raise PreconditionError(
            "winding number needs the chiral-symmetric model (m = 0)",
            {"module": "topo-invariants", "field": "m"},
        )
    if sign not in (1, -1):
        raise PreconditionError(f"valley sign must be +1 or -1, got {sign}")

    value = winding_integral(p, sign, radius, resolution)
    finer = tuple(2 * n for n in resolution)
    refined = winding_integral(p, sign, radius, finer)
    nearest = int(round(refined))
    if abs(refined - nearest) >= INTEGER_TOL or abs(value - nearest) >= INTEGER_TOL:
        raise WindingConvergenceError(
            f"winding did not settle: {value:.4f} then {refined:.4f}",
            {"radius": radius, "resolution": list(resolution)},
        )
    logger.info(f"Winding around valley {sign:+d} at a={p.a}: {refined:.4f} -> {nearest}")
    return WindingResult(value=value, refined=refined, winding=nearest, radius=radius, resolution=resolution)
