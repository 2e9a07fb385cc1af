"""
Floquet engineering of the diamond Hamiltonian from parametric coupler modulation.

The circuit method evolves the single-excitation block of the full circuit, couplers
included, over one common period and eliminates the couplers afterwards by projecting the
period propagator onto the dressed qubit states. A tone at the edge detuning
|ω_i - ω_{i+1}| turns the oscillating exchange into a static complex hopping; everything
else averages out over the period.

The dispersive and linearized methods replace the couplers by the exchange J_j(φ_j(t))
between the two qubits of each edge, exactly in φ or to first order in the modulation
depth. They are kept as cross-checks of the circuit method.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import logm, polar

from exceptions import AliasingError, PreconditionError
from models.schemas import DeviceConfig, FluxModulation
from services.device.circuit import (
    N_QUBITS,
    N_SITES,
    coupler_frequency,
    effective_coupling,
    exchange_coupling,
    exchange_pairs,
    single_excitation_block,
)
from services.gamma_model import DIAMOND_ORDER, CouplingQuad, diamond_matrix, to_diamond_order

logger = logging.getLogger(__name__)

Method = Literal["circuit", "dispersive", "linearized"]
FLOQUET_METHODS = ("circuit", "dispersive", "linearized")

# Tones must be integer multiples of this frequency (MHz)
TONE_RESOLUTION = 1.0
# Propagator steps per cycle of the fastest frame rotation in the circuit
SAMPLES_PER_CYCLE = 256
CALIBRATION_ROUNDS = 3
CALIBRATION_FLOOR = 0.05


@dataclass
class FloquetResult:
    effective: np.ndarray
    target: np.ndarray
    qubit_matrix: np.ndarray
    deviation: float
    spectral_deviation: float
    period: float
    modulations: Tuple[FluxModulation, ...]
    method: str
    frame_shifts: np.ndarray = field(default_factory=lambda: np.zeros(N_QUBITS))
    leakage: float = 0.0

    @property
    def relative_deviation(self) -> float:
        scale = np.linalg.norm(self.target)
        return self.deviation / scale if scale else self.deviation


def edge_detunings(cfg: DeviceConfig) -> np.ndarray:
    """ω_i - ω_{i+1} for every edge (MHz)"""
    return np.array([cfg.qubit_freqs[a] - cfg.qubit_freqs[b] for a, b in map(cfg.edge, range(N_QUBITS))])


def check_tones(cfg: DeviceConfig, tones: Optional[Sequence[float]] = None) -> float:
    """
    Verify that tones neither collide nor drift apart and return their common period.

    Raises:
        AliasingError: Two tones (or a tone and zero) lie within tone_bandwidth, or a tone
            is not a multiple of TONE_RESOLUTION.
    """
    tones = np.abs(edge_detunings(cfg) if tones is None else np.asarray(tones, dtype=float))
    for i, f in enumerate(tones):
        if f < cfg.tone_bandwidth:
            raise AliasingError(
                f"tone {i + 1} at {f:g} MHz is within {cfg.tone_bandwidth:g} MHz of DC",
                {"module": "device-emulator", "field": "qubit_freqs"},
            )
        for k in range(i):
            if abs(f - tones[k]) < cfg.tone_bandwidth:
                raise AliasingError(
                    f"tones {k + 1} and {i + 1} collide ({tones[k]:g} and {f:g} MHz)",
                    {"module": "device-emulator", "field": "qubit_freqs"},
                )

    counts = np.round(tones / TONE_RESOLUTION)
    if np.max(np.abs(tones / TONE_RESOLUTION - counts)) > 1e-6:
        raise AliasingError(
            f"tones {tones.tolist()} are not commensurate on a {TONE_RESOLUTION:g} MHz grid",
            {"module": "device-emulator", "field": "qubit_freqs"},
        )
    base = reduce(math.gcd, (int(c) for c in counts)) * TONE_RESOLUTION
    return 1.0 / base


def _common_period(cfg: DeviceConfig, mods: Sequence[FluxModulation]) -> float:
    period = check_tones(cfg)
    tones = [m.frequency for m in mods if m.amplitude > 0]
    if tones:
        check_tones(cfg, tones)
        for f in tones:
            if abs(round(f * period) - f * period) > 1e-6:
                raise AliasingError(
                    f"tone at {f:g} MHz does not fit the common period {period:g} µs",
                    {"module": "device-emulator", "field": "flux"},
                )
    return period


def modulation_for_target(cfg: DeviceConfig, target: CouplingQuad) -> Tuple[FluxModulation, ...]:
    """
    Flux tones whose resonant sidebands realise the target couplings.

    The sideband of edge j is (δ/2)·∂J/∂φ·e^{∓iφ_j}, with the minus sign when ω_j > ω_{j+1},
    so δ = 2|Ω|/|∂J/∂φ| and the phase absorbs both arg Ω and the sign of ∂J/∂φ.
    """
    detunings = edge_detunings(cfg)
    mods = []
    for j, omega in enumerate(target.as_tuple()):
        slope = effective_coupling(cfg, j).dj_dflux
        base = cfg.flux[j]
        if abs(omega) == 0:
            mods.append(base.model_copy(update={"amplitude": 0.0, "frequency": abs(detunings[j]), "phase": 0.0}))
            continue
        if abs(slope) < 1e-12:
            raise PreconditionError(
                f"edge {j + 1} sits at a flux sweet spot; modulation cannot reach {omega}",
                {"module": "device-emulator", "field": "flux"},
            )
        depth = 2 * abs(omega) / abs(slope)
        arg = float(np.angle(omega))
        phase = -arg if detunings[j] > 0 else arg
        if slope < 0:
            phase += math.pi
        phase = (phase + math.pi) % (2 * math.pi) - math.pi
        mods.append(base.model_copy(update={"amplitude": depth, "frequency": abs(detunings[j]), "phase": phase}))
    logger.debug(f"Modulation depths: {[round(m.amplitude, 6) for m in mods]}")
    return tuple(mods)


def _exchange_profile(cfg: DeviceConfig, mods: Sequence[FluxModulation], t: np.ndarray,
                      linearized: bool) -> np.ndarray:
    """J_j(t) for every edge, shape (4, len(t))"""
    profile = np.empty((N_QUBITS, len(t)))
    for j, mod in enumerate(mods):
        tone = np.cos(2 * np.pi * mod.frequency * t + mod.phase)
        if linearized:
            static = effective_coupling(cfg, j, mod.dc)
            profile[j] = static.j_static + mod.amplitude * static.dj_dflux * tone
        else:
            if abs(mod.dc) + mod.amplitude >= 0.5:
                raise PreconditionError(
                    f"edge {j + 1}: flux swing reaches the coupler's zero-frequency point",
                    {"module": "device-emulator", "field": "flux"},
                )
            profile[j] = [exchange_coupling(cfg, j, f) for f in mod.dc + mod.amplitude * tone]
    return profile


def rotating_frame_hamiltonian(cfg: DeviceConfig, mods: Sequence[FluxModulation], t: np.ndarray,
                               linearized: bool = True) -> np.ndarray:
    """Coupler-eliminated qubit Hamiltonian in the frame of the bare qubits, shape (len(t), 4, 4)"""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    profile = _exchange_profile(cfg, mods, t, linearized)
    detunings = edge_detunings(cfg)
    h = np.zeros((len(t), N_QUBITS, N_QUBITS), dtype=complex)
    for j in range(N_QUBITS):
        a, b = cfg.edge(j)
        hop = profile[j] * np.exp(2j * np.pi * detunings[j] * t)
        h[:, a, b] += hop
        h[:, b, a] += hop.conj()
    return h


def period_propagator(h: np.ndarray, dt: float) -> np.ndarray:
    """Time-ordered product of piecewise-constant steps exp(-2πi·H_n·dt)"""
    energies, vectors = np.linalg.eigh(h)
    steps = np.einsum("nij,nj,nkj->nik", vectors, np.exp(-2j * np.pi * energies * dt), vectors.conj())
    # pairwise products keep later steps on the left
    while len(steps) > 1:
        if len(steps) % 2:
            steps = np.concatenate([steps, np.eye(h.shape[-1], dtype=complex)[None]])
        steps = steps[1::2] @ steps[0::2]
    return steps[0]


def _coupler_trajectory(cfg: DeviceConfig, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Flux and frequency of every coupler on a time grid, each of shape (4, len(t))"""
    flux = np.array([m.dc + m.amplitude * np.cos(2 * np.pi * m.frequency * t + m.phase) for m in cfg.flux])
    freqs = np.array([coupler_frequency(cfg.coupler_max_freqs[j], flux[j]) for j in range(N_QUBITS)])
    return flux, freqs


def _check_swing(cfg: DeviceConfig, flux: np.ndarray, couplers: np.ndarray) -> None:
    for j in range(N_QUBITS):
        if np.max(np.abs(flux[j])) >= 0.5:
            raise PreconditionError(
                f"edge {j + 1}: flux swing reaches the coupler's zero-frequency point",
                {"module": "device-emulator", "field": "flux"},
            )
        for qubit in cfg.edge(j):
            offset = couplers[j] - cfg.qubit_freqs[qubit]
            if np.min(offset) <= 0 <= np.max(offset):
                raise PreconditionError(
                    f"coupler {j + 1} sweeps through Q{qubit + 1} at {cfg.qubit_freqs[qubit]:g} MHz",
                    {"module": "device-emulator", "field": "flux"},
                )


def interaction_frame_hamiltonian(cfg: DeviceConfig, period: float,
                                  steps: Optional[int] = None) -> Tuple[np.ndarray, float, np.ndarray]:
    """
    Single-excitation circuit block in the frame of the instantaneous site frequencies.

    Every site s carries the phase θ_s(t) = 2π∫ω_s, so only the exchange terms remain and
    they rotate at the site detunings. The step count resolves the fastest rotation with
    SAMPLES_PER_CYCLE points and never drops below steps (default cfg.steps_per_period).

    Returns:
        Hamiltonian at the step midpoints (n, 8, 8), the step length and θ_s(T) for all sites.

    Raises:
        PreconditionError: A coupler leaves its flux branch or crosses one of its qubits.
    """
    qubits = np.asarray(cfg.qubit_freqs, dtype=float)
    _, coarse = _coupler_trajectory(cfg, np.linspace(0.0, period, 1025))
    fastest = max(float(np.max(np.abs(coarse[:, None, :] - qubits[None, :, None]))), float(np.ptp(qubits)))
    n = max(steps or cfg.steps_per_period, math.ceil(SAMPLES_PER_CYCLE * period * fastest))
    dt = period / n

    tau = np.linspace(0.0, period, 2 * n + 1)
    flux, couplers = _coupler_trajectory(cfg, tau)
    _check_swing(cfg, flux, couplers)
    freqs = np.vstack([np.repeat(qubits[:, None], len(tau), axis=1), couplers])
    theta = 2 * np.pi * cumulative_trapezoid(freqs, tau, axis=1, initial=0.0)
    middle = theta[:, 1::2]

    h = np.zeros((n, N_SITES, N_SITES), dtype=complex)
    for a_site, b_site, g in exchange_pairs(cfg):
        if g == 0:
            continue
        hop = g * np.exp(1j * (middle[a_site] - middle[b_site]))
        h[:, a_site, b_site] += hop
        h[:, b_site, a_site] += hop.conj()
    logger.debug(f"Circuit propagator: {n} steps over {period:g} µs, fastest rotation {fastest:.1f} MHz")
    return h, dt, theta[:, -1]


def dressed_qubit_states(cfg: DeviceConfig) -> np.ndarray:
    """
    Eigenvectors of the t = 0 single-excitation block continuing the bare qubits, shape (8, 4).

    Each column has a real positive amplitude on its own qubit.
    """
    _, vectors = np.linalg.eigh(single_excitation_block(cfg, 0.0))
    picks = [int(np.argmax(np.abs(vectors[s]))) for s in range(N_QUBITS)]
    if len(set(picks)) < N_QUBITS:
        raise PreconditionError(
            "dressed qubit states are not resolved: two qubits hybridise at the working point",
            {"module": "device-emulator", "field": "qubit_freqs"},
        )
    states = vectors[:, picks]
    pivots = states[np.arange(N_QUBITS), np.arange(N_QUBITS)]
    return states * (np.abs(pivots) / pivots)[None, :]


def _generator(u: np.ndarray, period: float) -> np.ndarray:
    """Hermitian i·log U/(2πT)"""
    phases = np.abs(np.angle(np.linalg.eigvals(u)))
    if np.max(phases) > 0.9 * np.pi:
        logger.warning(f"Floquet phases reach {np.max(phases):.3f} rad; the effective Hamiltonian may fold")
    h_eff = 1j * logm(u) / (2 * np.pi * period)
    return 0.5 * (h_eff + h_eff.conj().T)


def circuit_floquet(cfg: DeviceConfig, period: float, frame: Optional[Sequence[float]] = None,
                    steps: Optional[int] = None) -> Tuple[np.ndarray, float]:
    """
    Effective qubit Hamiltonian of the full circuit with the couplers eliminated.

    The period propagator of the eight-site block is projected onto the dressed qubit
    states, the nearest unitary of the projection is taken, and the result is written in
    the frame rotating at frame (default cfg.qubit_freqs).

    Returns:
        The 4x4 generator in qubit order and the leakage 1 - σ_min² of the projection.
    """
    frame = np.asarray(cfg.qubit_freqs if frame is None else frame, dtype=float)
    h, dt, theta = interaction_frame_hamiltonian(cfg, period, steps)
    u = period_propagator(h, dt)
    dressed = dressed_qubit_states(cfg)
    projected = dressed.conj().T @ (np.exp(-1j * theta)[:, None] * u) @ dressed
    rotating = np.exp(2j * np.pi * frame * period)[:, None] * projected
    leakage = float(1.0 - np.min(np.linalg.svd(projected, compute_uv=False)) ** 2)
    unitary, _ = polar(rotating)
    return _generator(unitary, period), leakage


def floquet_from_modulations(cfg: DeviceConfig, mods: Optional[Sequence[FluxModulation]] = None,
                             method: Method = "circuit", steps: Optional[int] = None) -> Tuple[np.ndarray, float]:
    """
    Effective Hamiltonian i·log U(T)/(2πT) in qubit order and the period T.

    Raises:
        AliasingError: See check_tones.
        PreconditionError: Unknown method, or see interaction_frame_hamiltonian.
    """
    if method not in FLOQUET_METHODS:
        raise PreconditionError(f"unknown Floquet method {method!r}; choose from {FLOQUET_METHODS}")
    mods = tuple(cfg.flux if mods is None else mods)
    period = _common_period(cfg, mods)
    if method == "circuit":
        qubit_matrix, _ = circuit_floquet(cfg.model_copy(update={"flux": mods}), period, steps=steps)
        return qubit_matrix, period

    n = steps or cfg.steps_per_period
    dt = period / n
    t = (np.arange(n) + 0.5) * dt
    u = period_propagator(rotating_frame_hamiltonian(cfg, mods, t, method == "linearized"), dt)
    return _generator(u, period), period


def _calibrated_circuit(cfg: DeviceConfig, target: CouplingQuad, onsite: np.ndarray, period: float,
                        steps: Optional[int], rounds: int):
    """
    Tune the drive and the qubit frequencies until the circuit realises the target.

    Each round moves every bare qubit frequency by the offset of its dressed level from
    frame + onsite, and rescales every active tone by target/realised.
    """
    frame = np.asarray(cfg.qubit_freqs, dtype=float)
    wanted = np.array(target.as_tuple(), dtype=complex)
    drive = wanted.copy()
    shifts = np.zeros(N_QUBITS)
    for round_ in range(rounds + 1):
        mods = modulation_for_target(cfg, CouplingQuad(*drive))
        device = cfg.model_copy(update={"qubit_freqs": tuple(float(f) for f in frame + shifts), "flux": mods})
        qubit_matrix, leakage = circuit_floquet(device, period, frame, steps)
        if round_ == rounds:
            break
        shifts -= np.diag(qubit_matrix).real - onsite
        realised = np.array([qubit_matrix[cfg.edge(j)] for j in range(N_QUBITS)])
        gain = np.divide(wanted, realised, out=np.ones(N_QUBITS, dtype=complex), where=np.abs(realised) > 0)
        # edges far below the largest coupling are left open-loop
        active = (np.abs(wanted) > CALIBRATION_FLOOR * np.max(np.abs(wanted), initial=0.0)) & (np.abs(gain) < 4.0)
        drive[active] *= gain[active]
        logger.debug(f"Calibration round {round_ + 1}: frame shifts {np.round(shifts, 4).tolist()}")
    return qubit_matrix, mods, shifts, leakage


def floquet_effective_hamiltonian(cfg: DeviceConfig, target: CouplingQuad, method: Method = "circuit",
                                  steps: Optional[int] = None, onsite: Optional[Sequence[float]] = None,
                                  calibration_rounds: int = CALIBRATION_ROUNDS) -> FloquetResult:
    """
    Drive the device towards a target diamond Hamiltonian and extract what it realises.

    Args:
        cfg: Device configuration; the static flux of each coupler is kept.
        target: Couplings (Ω12, Ω23, Ω34, Ω41) in MHz.
        method: "circuit" evolves the eight-site block; "dispersive" and "linearized" use
            the coupler-eliminated J(φ), exactly or to first order in the depth.
        steps: Minimum propagator steps per period, default cfg.steps_per_period.
        onsite: Diagonal of the target in the diamond order (MHz), realised through the
            qubit frequencies in the circuit method.
        calibration_rounds: Circuit method only; 0 applies the open-loop tones to the
            bare device.

    Returns:
        FloquetResult with both matrices in the diamond order (Q2, Q1, Q3, Q4).
    """
    if method not in FLOQUET_METHODS:
        raise PreconditionError(f"unknown Floquet method {method!r}; choose from {FLOQUET_METHODS}")
    wanted = diamond_matrix(target)
    diagonal = np.zeros(N_QUBITS) if onsite is None else np.asarray(onsite, dtype=float)
    wanted = wanted + np.diag(diagonal).astype(complex)
    # diamond row r belongs to qubit DIAMOND_ORDER[r]
    onsite_q = np.zeros(N_QUBITS)
    onsite_q[list(DIAMOND_ORDER)] = diagonal

    period = check_tones(cfg)
    shifts, leakage = np.zeros(N_QUBITS), 0.0
    if method == "circuit":
        qubit_matrix, mods, shifts, leakage = _calibrated_circuit(cfg, target, onsite_q, period, steps,
                                                                  calibration_rounds)
    else:
        if onsite is not None and np.any(diagonal):
            raise PreconditionError(f"the {method} model has no onsite terms; use the circuit method")
        mods = modulation_for_target(cfg, target)
        qubit_matrix, period = floquet_from_modulations(cfg, mods, method, steps)

    effective = to_diamond_order(qubit_matrix)
    spectral = float(np.max(np.abs(np.linalg.eigvalsh(effective) - np.linalg.eigvalsh(wanted))))
    deviation = float(np.linalg.norm(effective - wanted))
    logger.info(
        f"Floquet extraction ({method}) over T={period:g} µs: deviation {deviation:.4g} MHz, "
        f"spectral {spectral:.4g} MHz, leakage {leakage:.2e}"
    )
    return FloquetResult(
        effective=effective,
        target=wanted,
        qubit_matrix=qubit_matrix,
        deviation=deviation,
        spectral_deviation=spectral,
        period=period,
        modulations=tuple(mods),
        method=method,
        frame_shifts=shifts,
        leakage=leakage,
    )
