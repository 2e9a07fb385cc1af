"""
Non-adiabatic measurement of the tensor Berry curvature.

At φ = ϕ = 0 and a = 0 the valley Hamiltonian splits into two 2x2 blocks under
S = σ3⊗σ0: block 0 = c·q(cosθ σ1 + sinθ σ2) + mσ3 and block 1 the same with -m. Each block is
ramped slowly in θ from its ground state, and the deflection of the generalised force
⟨∂_q H⟩ gives F_qθ.

F_φϕ comes from ramps of ϕ on the full four-level Hamiltonian. The ramp rotates the two
degenerate ground states into each other, so the deflection of ⟨∂_φ H⟩ is fitted against
the populations of the ground manifold, read in the basis carried along by
R(ϕ) = exp(ϕ·ΓwΓz/2). In that basis F_φϕ is diagonal and constant along the ramp, and
tr(F_qθ F_φϕ) = Σ_b F_qθ^b F_φϕ^b.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from exceptions import BasisError, PreconditionError, RampTooFastError
from models.schemas import Decoherence, GridSpec, ModelParams, ProtocolOptions
from services.device.lindblad import collapse_operators, lindblad_evolve, schrodinger_evolve
from services.gamma_model import DIAMOND_ORDER, S1, S2, S3, gamma_set, valley_hamiltonian
from services.parallel import ordered_map
from services.topology.chern import chern_form_closed, radial_edges, second_chern_cutoff_closed
from services.topology.frames import hopf_embed

logger = logging.getLogger(__name__)

BLOCKS = ((0, 1), (2, 3))
BLOCK_SIGNS = (1, -1)
BASIS_TOL = 1e-6

_CLIFFORD = gamma_set(0.0)
# (ΓwΓz)² = -1
TWIST_GENERATOR = _CLIFFORD.gw @ _CLIFFORD.gz


@dataclass
class BlockResponse:
    block: int
    deflection: Tuple[float, float]
    f_qtheta: float
    f_phivarphi: float
    leakage: float
    ground_population: float


@dataclass
class ProtocolResult:
    q: float
    theta: float
    trace: float
    blocks: List[BlockResponse]
    ramp_rate: float
    richardson: bool
    open_system: bool
    closed_trace: Optional[float] = None

    @property
    def leakage(self) -> float:
        return max(b.leakage for b in self.blocks)


@dataclass
class ChernMeasurement:
    value: float
    closed: Optional[float]
    q: np.ndarray
    theta: np.ndarray
    trace: np.ndarray
    leakage: float
    notes: List[str] = field(default_factory=list)


def _speed(p: ModelParams) -> float:
    """Common velocity of the valley expansion; the block picture needs it isotropic"""
    beta = math.sqrt(1.0 - p.lam ** 2) if abs(p.lam) < 1 else 0.0
    speeds = np.array([p.v[0], p.v[1], p.v[2], beta * p.v[3]])
    if not np.allclose(speeds, speeds[0], rtol=1e-12):
        raise PreconditionError(
            f"curvature protocol assumes isotropic valley velocities, got {speeds.tolist()}",
            {"module": "device-emulator", "field": "v"},
        )
    return float(speeds[0])


def block_hamiltonians(p: ModelParams, q: float, theta: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    The two 2x2 blocks of H(q, θ, 0, 0) in the basis where S = σ3⊗σ0 is diagonal.

    Raises:
        BasisError: The off-block part exceeds BASIS_TOL, as it does for a != 0.
    """
    h = valley_hamiltonian(hopf_embed([q, theta, 0.0, 0.0]), 1, p)
    residual = float(np.max(np.abs(h[0:2, 2:4])))
    if residual > BASIS_TOL:
        raise BasisError(
            f"S = σ3⊗σ0 does not decouple H at a={p.a} (off-block residual {residual:.3e})",
            {"q": q, "theta": theta},
        )
    return h[0:2, 0:2], h[2:4, 2:4]


def _block(c: float, q: float, theta: float, mass: float) -> np.ndarray:
    return c * q * (math.cos(theta) * S1 + math.sin(theta) * S2) + mass * S3


def twist(varphi) -> np.ndarray:
    """R(ϕ) = exp(ϕ·ΓwΓz/2) for one angle or an array of angles"""
    half = 0.5 * np.asarray(varphi, dtype=float)[..., None, None]
    return np.cos(half) * np.eye(4) + np.sin(half) * TWIST_GENERATOR


def _ramp_angle(t, start: float, rate: float, t_on: float):
    """Angle under a sin² turn-on of the angular velocity over t_on, constant afterwards"""
    t = np.asarray(t, dtype=float)
    rising = t / 2 - (t_on / (2 * np.pi)) * np.sin(np.pi * t / t_on)
    progress = np.where(t < t_on, rising, t_on / 2 + (t - t_on))
    return start + rate * progress


def _ground(h: np.ndarray) -> np.ndarray:
    return np.linalg.eigh(h)[1][:, 0]


def _coherent_leakage(manifold: np.ndarray, ground: np.ndarray, excited: np.ndarray) -> np.ndarray:
    """
    |E†ρG|² / (tr G†ρG · tr ρ): the excited population of a pure state, blind to the
    incoherent mixing that dephasing adds on top of it.
    """
    coherence = np.einsum("tia,tij,tjb->tab", excited.conj(), manifold, ground)
    kept = np.einsum("tia,tij,tja->t", ground.conj(), manifold, ground).real
    populations = np.trace(manifold, axis1=1, axis2=2).real
    return np.sum(np.abs(coherence) ** 2, axis=(1, 2)) / (kept * populations)


def _evolve(h_of_t, psi0: np.ndarray, t_end: float, t_eval: np.ndarray,
            decoherence: Optional[Sequence[Decoherence]]) -> Tuple[np.ndarray, float]:
    """
    Density matrices on t_eval within the driven manifold and the final population that
    relaxed to the device ground state; open evolution embeds the manifold after it.
    """
    if decoherence is None:
        states = schrodinger_evolve(h_of_t, psi0, (0.0, t_end), t_eval).states
        return np.einsum("ti,tj->tij", states, states.conj()), 0.0
    dim = len(psi0)
    embedded = np.zeros((dim + 1, dim + 1), dtype=complex)

    def h_open(t):
        embedded[1:, 1:] = h_of_t(t)
        return embedded.copy()

    rho0 = np.zeros((dim + 1, dim + 1), dtype=complex)
    rho0[1:, 1:] = np.outer(psi0, psi0.conj())
    ops = collapse_operators([d.t1 for d in decoherence], [d.t2 for d in decoherence])
    trajectory = lindblad_evolve(h_open, rho0, ops, (0.0, t_end), t_eval)
    return trajectory.states[:, 1:, 1:], float(trajectory.states[-1, 0, 0].real)


def _timing(gap_r: float, options: ProtocolOptions) -> Tuple[float, float]:
    """Turn-on time and averaging window, both whole gap periods"""
    period = 1.0 / (2 * gap_r)
    return options.turn_on_periods * period, options.window_periods * period


def _ramp(c: float, q: float, theta: float, mass: float, direction: int, rate: float,
          options: ProtocolOptions, decoherence: Optional[Sequence[Decoherence]]):
    """One θ ramp of one block; returns (mean deflection, max leakage, ground population)"""
    gap_r = math.hypot(c * q, mass)
    t_on, window = _timing(gap_r, options)
    signed = direction * rate
    theta_start = theta - signed * (t_on / 2 + window / 2)
    t_eval = np.linspace(t_on, t_on + window, options.samples)
    grad_energy = -c * c * q / gap_r

    def h_block(t):
        return _block(c, q, float(_ramp_angle(t, theta_start, signed, t_on)), mass)

    manifold, ground_population = _evolve(h_block, _ground(h_block(0.0)), t_on + window, t_eval, decoherence)

    angles = _ramp_angle(t_eval, theta_start, signed, t_on)
    d_h = np.stack([c * (math.cos(a) * S1 + math.sin(a) * S2) for a in angles])
    deflection = np.einsum("tij,tji->t", manifold, d_h).real - np.trace(manifold, axis1=1, axis2=2).real * grad_energy

    bases = np.stack([np.linalg.eigh(_block(c, q, a, mass))[1] for a in angles])
    leakage = float(np.max(_coherent_leakage(manifold, bases[:, :, :1], bases[:, :, 1:])))
    return float(trapezoid(deflection, t_eval) / window), leakage, ground_population


def _block_response(c, q, theta, mass, rate, options, decoherence):
    plus = _ramp(c, q, theta, mass, 1, rate, options, decoherence)
    minus = _ramp(c, q, theta, mass, -1, rate, options, decoherence)
    odd = 0.5 * (plus[0] - minus[0])
    return plus, minus, -2 * np.pi * odd / rate


def _twist_circle(p: ModelParams, q: float, theta: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """H(q, θ, 0, ϕ) = H_⊥ + cosϕ·Z + sinϕ·W, read off the full valley Hamiltonian"""
    def h_at(varphi):
        return valley_hamiltonian(hopf_embed([q, theta, 0.0, varphi]), 1, p)

    h_zero, h_pi, h_quarter = h_at(0.0), h_at(np.pi), h_at(np.pi / 2)
    perp = 0.5 * (h_zero + h_pi)
    return perp, 0.5 * (h_zero - h_pi), h_quarter - perp


def _manifold_bases(h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Ground and excited state of each S-block embedded in four levels, each of shape (4, 2)"""
    ground = np.zeros((4, 2), dtype=complex)
    excited = np.zeros((4, 2), dtype=complex)
    for b, indices in enumerate(BLOCKS):
        _, vectors = np.linalg.eigh(h[np.ix_(indices, indices)])
        ground[list(indices), b] = vectors[:, 0]
        excited[list(indices), b] = vectors[:, 1]
    return ground, excited


def _twist_ramp(circle, force: np.ndarray, bases, block: int, direction: int, rate: float, gap_r: float,
                options: ProtocolOptions, decoherence: Optional[Sequence[Decoherence]]):
    """
    One ϕ ramp from the transported ground state of a block.

    Returns the force ⟨∂_φ H⟩(t), the ground-manifold matrix M(t) = B†ρB with B = R(ϕ)·B0,
    the max leakage and the ground population.
    """
    perp, z, w = circle
    ground, excited = bases
    t_on, window = _timing(gap_r, options)
    signed = direction * rate
    start = -signed * (t_on / 2 + window / 2)
    t_eval = np.linspace(t_on, t_on + window, options.samples)

    def h_twist(t):
        angle = float(_ramp_angle(t, start, signed, t_on))
        return perp + math.cos(angle) * z + math.sin(angle) * w

    psi0 = twist(start) @ ground[:, block]
    manifold, ground_population = _evolve(h_twist, psi0, t_on + window, t_eval, decoherence)

    transport = twist(_ramp_angle(t_eval, start, signed, t_on))
    carried, lifted = transport @ ground, transport @ excited
    deflection = np.einsum("tij,ji->t", manifold, force).real
    populations = np.einsum("tia,tij,tjb->tab", carried.conj(), manifold, carried)
    leakage = float(np.max(_coherent_leakage(manifold, carried, lifted)))
    return deflection, populations, leakage, ground_population


def _twist_response(p: ModelParams, q: float, theta: float, rate: float, gap_r: float,
                    options: ProtocolOptions, decoherence: Optional[Sequence[Decoherence]]):
    """
    F_φϕ^b for both blocks from ϕ ramps in both directions.

    The deflections obey d(t) = o_b - (ϕ̇/2π)·(M00·F^0 + M11·F^1) up to second order in the
    rate, with one offset per starting block; the four ramps are fitted jointly.

    Raises:
        BasisError: R(ϕ) does not carry H(q, θ, 0, 0) along the ϕ circle.
    """
    circle = _twist_circle(p, q, theta)
    h_zero = circle[0] + circle[1]
    t_on, window = _timing(gap_r, options)
    reach = rate * (t_on / 2 + window / 2)
    carried = twist(reach) @ h_zero @ twist(reach).conj().T
    residual = float(np.max(np.abs(carried - (circle[0] + math.cos(reach) * circle[1] + math.sin(reach) * circle[2]))))
    if residual > BASIS_TOL:
        raise BasisError(f"R(ϕ) does not transport H along ϕ (residual {residual:.3e})", {"q": q, "theta": theta})

    force = (valley_hamiltonian([0.0, q * math.cos(theta), 0.0, 0.0], 1, p)
             - valley_hamiltonian(np.zeros(4), 1, p))
    bases = _manifold_bases(h_zero)
    columns, values = [], []
    leakage, ground_population = [0.0, 0.0], [0.0, 0.0]
    for block in range(2):
        for direction in (1, -1):
            deflection, m, leak, pop = _twist_ramp(circle, force, bases, block, direction, rate, gap_r,
                                                   options, decoherence)
            scale = -direction * rate / (2 * np.pi)
            design = np.zeros((len(deflection), 4))
            design[:, block] = 1.0
            design[:, 2] = scale * m[:, 0, 0].real
            design[:, 3] = scale * m[:, 1, 1].real
            columns.append(design)
            values.append(deflection)
            leakage[block] = max(leakage[block], leak)
            ground_population[block] = max(ground_population[block], pop)
    solution, *_ = np.linalg.lstsq(np.vstack(columns), np.concatenate(values), rcond=None)
    return solution[2:], leakage, ground_population


def nonadiabatic_curvature(p: ModelParams, q: float, theta: float, options: ProtocolOptions = None,
                           decoherence: Optional[Sequence[Decoherence]] = None) -> ProtocolResult:
    """
    Measure tr(F_qθ F_φϕ) at (q, θ, 0, 0) by slow ramps.

    Args:
        p: Model parameters; a must vanish so the blocks decouple.
        q, θ: Measurement point (MHz, rad).
        options: Ramp rate, turn-on, window, Richardson extrapolation, leakage threshold.
        decoherence: Per-qubit T1/T2 for open-system evolution, or None for closed evolution.

    Raises:
        BasisError: The block basis does not decouple H.
        RampTooFastError: Population left the adiabatic state beyond the threshold.
    """
    options = options or ProtocolOptions()
    if options.open_system and decoherence is None:
        decoherence = (Decoherence(),) * 4
    if q < 0:
        raise PreconditionError(f"radial coordinate must be non-negative, got {q}")
    c = _speed(p)
    block_hamiltonians(p, q, theta)
    gap_r = math.hypot(c * q, p.m)
    if gap_r == 0:
        raise PreconditionError("the curvature protocol needs a gap at the measurement point",
                                {"module": "device-emulator", "field": "m"})
    rate = options.ramp_fraction * 2 * np.pi * 2 * gap_r

    radial = []
    for indices, sign in zip(BLOCKS, BLOCK_SIGNS):
        noise = None if decoherence is None else [decoherence[DIAMOND_ORDER[i]] for i in indices]
        plus, minus, f_qtheta = _block_response(c, q, theta, sign * p.m, rate, options, noise)
        if options.richardson:
            _, _, f_half = _block_response(c, q, theta, sign * p.m, rate / 2, options, noise)
            f_qtheta = (4 * f_half - f_qtheta) / 3
        radial.append((plus, minus, f_qtheta))

    noise = None if decoherence is None else [decoherence[k] for k in DIAMOND_ORDER]
    f_phivarphi, twist_leakage, twist_ground = _twist_response(p, q, theta, rate, gap_r, options, noise)
    if options.richardson:
        f_half, _, _ = _twist_response(p, q, theta, rate / 2, gap_r, options, noise)
        f_phivarphi = (4 * f_half - f_phivarphi) / 3

    blocks = []
    for b, (plus, minus, f_qtheta) in enumerate(radial):
        leakage = max(plus[1], minus[1], twist_leakage[b])
        if leakage > options.leakage_threshold:
            raise RampTooFastError(
                f"block {b} leaked {leakage:.3f} out of the adiabatic state",
                {"q": q, "theta": theta, "ramp_rate": rate},
            )
        blocks.append(BlockResponse(
            block=b,
            deflection=(plus[0], minus[0]),
            f_qtheta=float(f_qtheta),
            f_phivarphi=float(f_phivarphi[b]),
            leakage=leakage,
            ground_population=max(plus[2], minus[2], twist_ground[b]),
        ))

    trace = sum(b.f_qtheta * b.f_phivarphi for b in blocks)
    closed = None
    if c == 1.0:
        closed = float(chern_form_closed(q, theta, p.m)) * 4 * np.pi ** 2 / 3
    logger.debug(f"Protocol at q={q:g}, θ={theta:.4f}: trace {trace:.6g} (closed form {closed})")
    return ProtocolResult(
        q=q,
        theta=theta,
        trace=float(trace),
        blocks=blocks,
        ramp_rate=rate,
        richardson=options.richardson,
        open_system=decoherence is not None,
        closed_trace=closed,
    )


def _measure_point(point, p: ModelParams, options: ProtocolOptions, decoherence):
    q, theta = point
    result = nonadiabatic_curvature(p, q, theta, options, decoherence)
    return result.trace, result.leakage


def measure_second_chern(p: ModelParams, grid: GridSpec = None, options: ProtocolOptions = None,
                         decoherence: Optional[Sequence[Decoherence]] = None,
                         workers: Optional[int] = None) -> ChernMeasurement:
    """C2 ≈ Σ 3·tr(F_qθ F_φϕ)·Δq·Δθ with the trace measured at every (q, θ) cell centre"""
    grid = grid or GridSpec(n_q=24, n_theta=8, radial_ratio=1.15)
    options = options or ProtocolOptions()
    if p.m == 0:
        raise PreconditionError("second Chern number needs a gapped valley (m != 0)",
                                {"module": "device-emulator", "field": "m"})
    edges = radial_edges(grid)
    q, dq = (edges[1:] + edges[:-1]) / 2, np.diff(edges)
    dtheta = (np.pi / 2) / grid.n_theta
    theta = (np.arange(grid.n_theta) + 0.5) * dtheta
    points = [(float(a), float(b)) for a in q for b in theta]

    worker = partial(_measure_point, p=p, options=options, decoherence=decoherence)
    values = ordered_map(worker, points, workers)
    trace = np.array([v[0] for v in values]).reshape(len(q), len(theta))
    leakage = max(v[1] for v in values)
    value = float(np.sum(3 * trace * dq[:, None] * dtheta))

    closed = None
    if _speed(p) == 1.0:
        closed = second_chern_cutoff_closed(p.m, grid.q_cut)
    logger.info(f"Measured C2 = {value:.5f} on {len(points)} points (cutoff closed form {closed})")
    return ChernMeasurement(value=value, closed=closed, q=q, theta=theta, trace=trace, leakage=leakage)
