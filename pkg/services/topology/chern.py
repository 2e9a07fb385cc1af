"""
Second Chern numbers of the Dirac valleys in Hopf coordinates.

Two integrators are provided: a reduced one on the (q, θ) half-plane at (φ, ϕ) = (0, 0),
valid when the three curvature traces coincide (a = 0), and a full 4D one summing all three
trace products over a (q, θ, φ, ϕ) grid. Both use midpoint quadrature on cell centres with a
geometric radial grid.
"""
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, Optional

import numpy as np

from exceptions import PreconditionError, ResolutionError
from models.schemas import GridSpec, ModelParams
from services.parallel import map_points
from services.topology.curvature import CurvatureField, point_curvature
from services.topology.frames import PHI, Q, THETA, VARPHI, ValleyFrames

logger = logging.getLogger(__name__)

# Relative drift tolerated between a grid and its refinement
DRIFT_TOL = 1e-2

# (μν, ρσ) pairs of the Chern integrand, in Hopf orientation (q, θ, φ, ϕ)
TRACE_PAIRS = (
    ((Q, THETA), (PHI, VARPHI)),
    ((VARPHI, Q), (PHI, THETA)),
    ((PHI, Q), (THETA, VARPHI)),
)


@dataclass
class ChernEstimate:
    value: float
    coarse: float
    drift: float
    q_cut: float
    closed: Optional[float] = None
    grid: Dict[str, float] = field(default_factory=dict)


@dataclass
class ValleyChern:
    c2_plus: float
    c2_minus: float
    c2_valley: float


def chern_form_closed(q, theta, m: float):
    """Chern form 3 m q³ cosθ sinθ / (8π² (m² + q²)^{5/2}) of the massive a = 0 valley"""
    q = np.asarray(q, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if m == 0:
        return np.zeros(np.broadcast(q, theta).shape)
    return 3 * m * q ** 3 * np.cos(theta) * np.sin(theta) / (8 * np.pi ** 2 * (m * m + q * q) ** 2.5)


def second_chern_cutoff_closed(m: float, q_cut: float) -> float:
    """Closed-form integral of the Chern form over q ∈ [0, q_cut]"""
    if m == 0:
        return 0.0
    s = m * m + q_cut * q_cut
    return float(np.sign(m) / 2 - 0.75 * m * (1 / np.sqrt(s) - m * m / (3 * s ** 1.5)))


def extrapolate_cutoff(c_q: float, c_2q: float) -> float:
    """Remove the leading 1/q_cut tail from two cutoffs Q and 2Q"""
    return 2 * c_2q - c_q


def radial_edges(grid: GridSpec) -> np.ndarray:
    n, ratio = grid.n_q, grid.radial_ratio
    if ratio == 1.0:
        return np.linspace(0.0, grid.q_cut, n + 1)
    return grid.q_cut * (ratio ** np.arange(n + 1) - 1) / (ratio ** n - 1)


def _cells(edges: np.ndarray):
    return (edges[1:] + edges[:-1]) / 2, np.diff(edges)


def _require_mass(p: ModelParams):
    if p.m == 0:
        raise PreconditionError(
            "second Chern number needs a gapped valley (m != 0)",
            {"module": "topo-invariants", "field": "m"},
        )


def _plane_components(frames: ValleyFrames, chunk: np.ndarray) -> np.ndarray:
    points, steps = chunk[:, :4], chunk[:, 4:]
    f_qt = point_curvature(frames, points, (Q, THETA), steps)
    f_pv = point_curvature(frames, points, (PHI, VARPHI), steps)
    return np.stack([f_qt, f_pv], axis=1)


def _trace_density(frames: ValleyFrames, chunk: np.ndarray) -> np.ndarray:
    points, steps = chunk[:, :4], chunk[:, 4:]
    total = np.zeros(len(points))
    for first, second in TRACE_PAIRS:
        f1 = point_curvature(frames, points, first, steps)
        f2 = point_curvature(frames, points, second, steps)
        total += np.einsum("nij,nji->n", f1, f2).real
    return total


def chern_form_field(p: ModelParams, grid: GridSpec, sign: int = 1, workers: Optional[int] = None,
                     filling="lower") -> CurvatureField:
    """
    F_qθ, F_φϕ and the Chern form 3 tr(F_qθ F_φϕ) / 4π² on the (q, θ) grid at (φ, ϕ) = (0, 0).

    The q and θ loops span one integration cell; the φ and ϕ loops use grid.angular_step.
    """
    q, dq = _cells(radial_edges(grid))
    theta, dtheta = _cells(np.linspace(0.0, np.pi / 2, grid.n_theta + 1))
    qq, tt = np.meshgrid(q, theta, indexing="ij")
    dqq, dtt = np.meshgrid(dq, dtheta, indexing="ij")

    n = qq.size
    chunk = np.zeros((n, 8))
    chunk[:, Q], chunk[:, THETA] = qq.ravel(), tt.ravel()
    chunk[:, 4 + Q], chunk[:, 4 + THETA] = dqq.ravel(), dtt.ravel()
    chunk[:, 4 + PHI] = chunk[:, 4 + VARPHI] = grid.angular_step

    frames = ValleyFrames(p, sign, filling, grid.tol_gap)
    comps = map_points(partial(_plane_components, frames), chunk, workers)
    f_qt = comps[:, 0].reshape(qq.shape + comps.shape[-2:])
    f_pv = comps[:, 1].reshape(qq.shape + comps.shape[-2:])
    trace = np.einsum("abij,abji->ab", f_qt, f_pv).real

    closed = None
    if p.a == 0 and p.lam == 0 and p.v == (1.0, 1.0, 1.0, 1.0):
        closed = sign * chern_form_closed(qq, tt, p.m)
    logger.debug(f"Chern form field on {grid.n_q}x{grid.n_theta} cells for m={p.m}, sign={sign}")
    return CurvatureField(
        q=q, theta=theta, dq=dq, dtheta=dtheta,
        components={("q", "theta"): f_qt, ("phi", "varphi"): f_pv},
        trace=trace,
        chern_form=3 * trace / (4 * np.pi ** 2),
        closed=closed,
        metadata={"m": p.m, "a": p.a, "q_cut": grid.q_cut, "sign": sign},
    )


def integrate_reduced(field_: CurvatureField) -> float:
    """C2 = ∫ 3 tr(F_qθ F_φϕ) dq dθ, the φ and ϕ integrals contributing (2π)² / 4π²"""
    weights = np.outer(field_.dq, field_.dtheta)
    return float(np.sum(3 * field_.trace * weights))


def _grid_summary(grid: GridSpec) -> Dict[str, float]:
    return {"n_q": grid.n_q, "n_theta": grid.n_theta, "q_cut": grid.q_cut,
            "radial_ratio": grid.radial_ratio, "angular_step": grid.angular_step}


def _converged(coarse: float, fine: float, label: str, check: bool):
    drift = abs(fine - coarse)
    if check and drift > DRIFT_TOL * max(abs(fine), 1e-12):
        raise ResolutionError(
            f"{label} drifted by {drift:.3e} between grid refinements",
            {"coarse": coarse, "fine": fine},
        )
    return drift


def second_chern_reduced(p: ModelParams, grid: GridSpec = None, workers: Optional[int] = None,
                         check: bool = True) -> ChernEstimate:
    """
    Second Chern number of the + valley up to grid.q_cut by the reduced (q, θ) integral.

    Args:
        p: Model parameters with a = 0 and m != 0.
        grid: Integration grid; its refinement is evaluated as well.
        workers: Process pool size.
        check: Raise ResolutionError when the two grids disagree by more than 1 %.
    """
    grid = grid or GridSpec()
    if p.a != 0:
        raise PreconditionError(
            "the reduced integral assumes equal curvature traces, which holds only at a = 0",
            {"module": "topo-invariants", "field": "a"},
        )
    _require_mass(p)

    coarse = integrate_reduced(chern_form_field(p, grid, 1, workers))
    fine = integrate_reduced(chern_form_field(p, grid.refined(), 1, workers))
    drift = _converged(coarse, fine, "reduced C2", check)
    closed = second_chern_cutoff_closed(p.m, grid.q_cut) if p.lam == 0 and p.v == (1.0, 1.0, 1.0, 1.0) else None
    logger.info(f"Reduced C2(m={p.m}, q_cut={grid.q_cut}) = {fine:.6f} (drift {drift:.2e})")
    return ChernEstimate(value=fine, coarse=coarse, drift=drift, q_cut=grid.q_cut, closed=closed,
                         grid=_grid_summary(grid))


def second_chern_full4d(p: ModelParams, sign: int = 1, grid: GridSpec = None,
                        workers: Optional[int] = None) -> ChernEstimate:
    """Second Chern number of one valley from all three trace products on a 4D Hopf grid"""
    grid = grid or GridSpec()
    _require_mass(p)

    q, dq = _cells(radial_edges(grid))
    theta, dtheta = _cells(np.linspace(0.0, np.pi / 2, grid.n_theta + 1))
    phi, dphi = _cells(np.linspace(0.0, 2 * np.pi, grid.n_phi + 1))
    varphi, dvarphi = _cells(np.linspace(0.0, 2 * np.pi, grid.n_varphi + 1))

    mesh = np.meshgrid(q, theta, phi, varphi, indexing="ij")
    spacing = np.meshgrid(dq, dtheta, dphi, dvarphi, indexing="ij")
    chunk = np.zeros((mesh[0].size, 8))
    for axis in range(4):
        chunk[:, axis] = mesh[axis].ravel()
    chunk[:, 4 + Q] = spacing[Q].ravel()
    chunk[:, 4 + THETA] = spacing[THETA].ravel()
    chunk[:, 4 + PHI] = chunk[:, 4 + VARPHI] = grid.angular_step

    frames = ValleyFrames(p, sign, "lower", grid.tol_gap)
    density = map_points(partial(_trace_density, frames), chunk, workers)
    volume = spacing[0] * spacing[1] * spacing[2] * spacing[3]
    value = float(np.sum(density * volume.ravel()) / (4 * np.pi ** 2))
    logger.info(f"Full 4D C2(a={p.a}, m={p.m}, sign={sign}) = {value:.6f} on {mesh[0].size} cells")
    return ChernEstimate(value=value, coarse=value, drift=0.0, q_cut=grid.q_cut,
                         grid={**_grid_summary(grid), "n_phi": grid.n_phi, "n_varphi": grid.n_varphi})


def valley_chern(p: ModelParams, grid: GridSpec = None, workers: Optional[int] = None) -> ValleyChern:
    plus = second_chern_full4d(p, 1, grid, workers).value
    minus = second_chern_full4d(p, -1, grid, workers).value
    return ValleyChern(c2_plus=plus, c2_minus=minus, c2_valley=(plus - minus) / 2)
