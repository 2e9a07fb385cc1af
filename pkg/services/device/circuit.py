"""
Lab-frame circuit model: four transmon qubits on a ring with a tunable coupler between
every neighbouring pair.

Sites 0..3 are Q1..Q4 and sites 4..7 the couplers C1..C4; coupler C_j joins Q_j and Q_{j+1}
(indices mod 4). Each site is a spin with σz = diag(1, -1) and the ground state at index 0,
so -½ω·σz puts the excited level ω above the ground level. Frequencies are in MHz and
times in µs.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import reduce
from typing import List, Optional, Sequence

import numpy as np

from exceptions import DispersiveWarning, PreconditionError
from models.schemas import DeviceConfig

logger = logging.getLogger(__name__)

N_QUBITS = 4
N_SITES = 8

SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
# |excited><ground|
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_MINUS = SIGMA_PLUS.T.copy()

DISPERSIVE_LIMIT = 0.2
FLUX_STEP = 1e-6


@dataclass
class EffectiveCoupling:
    """Coupler-mediated exchange of one edge at its working point"""
    edge: int
    flux: float
    j_static: float
    dj_dflux: float
    omega: complex
    detunings: tuple
    dispersive_ratio: float
    warnings: List[str] = field(default_factory=list)


def coupler_frequency(max_freq: float, flux) -> np.ndarray:
    """ω_C(φ) = ω_C0·sqrt|cos πφ|"""
    return max_freq * np.sqrt(np.abs(np.cos(np.pi * np.asarray(flux, dtype=float))))


def flux_at(cfg: DeviceConfig, j: int, t: float) -> float:
    mod = cfg.flux[j]
    return mod.dc + mod.amplitude * math.cos(2 * math.pi * mod.frequency * t + mod.phase)


def site_operator(op: np.ndarray, site: int, dims: Sequence[int]) -> np.ndarray:
    """Embed a single-site operator in the full tensor-product space"""
    factors = [op if s == site else np.eye(d, dtype=complex) for s, d in enumerate(dims)]
    return reduce(np.kron, factors)


def _transmon_operators(anharmonicity: float, freq: float):
    """Three-level Q1: energies (-ω/2, ω/2, 3ω/2 + η) and the lowering operator"""
    energies = np.diag([-freq / 2, freq / 2, 3 * freq / 2 + anharmonicity]).astype(complex)
    lowering = np.array([[0, 1, 0], [0, 0, math.sqrt(2)], [0, 0, 0]], dtype=complex)
    return energies, lowering


def pumped_transmon_hamiltonian(cfg: DeviceConfig, t, rabi: Optional[float] = None,
                                detuning: Optional[float] = None) -> np.ndarray:
    """
    Three-level Q1 with its pump on the 1-2 transition, shape (len(t), 3, 3).

    The drive is Ω_d·cos(2π(ω12 + δ)t + φ_d)·(|2><1| + h.c.); rabi and detuning default
    to cfg.pump.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    rabi = cfg.pump.rabi if rabi is None else rabi
    detuning = cfg.pump.detuning if detuning is None else detuning
    energies, _ = _transmon_operators(cfg.anharmonicity, cfg.qubit_freqs[0])
    transition = np.zeros((3, 3), dtype=complex)
    transition[2, 1] = transition[1, 2] = 1.0
    drive_freq = cfg.qubit_freqs[0] + cfg.anharmonicity + detuning
    amplitude = rabi * np.cos(2 * np.pi * drive_freq * t + cfg.pump.phase)
    return energies[None] + amplitude[:, None, None] * transition[None]


def exchange_pairs(cfg: DeviceConfig):
    """(site_a, site_b, g) for every exchange term of the circuit"""
    for j in range(N_QUBITS):
        left, right = cfg.edge(j)
        g_left, g_right = cfg.qubit_coupler_g[j]
        yield left, N_QUBITS + j, g_left
        yield right, N_QUBITS + j, g_right
        yield left, right, cfg.direct_g[j]


def site_frequencies(cfg: DeviceConfig, t: float = 0.0) -> np.ndarray:
    couplers = [float(coupler_frequency(cfg.coupler_max_freqs[j], flux_at(cfg, j, t))) for j in range(N_QUBITS)]
    return np.array(list(cfg.qubit_freqs) + couplers)


def build_circuit_hamiltonian(cfg: DeviceConfig, t: float = 0.0, ats: bool = False) -> np.ndarray:
    """
    Full circuit Hamiltonian at time t.

    Args:
        cfg: Device configuration.
        t: Time (µs); only the coupler fluxes and the pump depend on it.
        ats: Model Q1 as a three-level transmon driven on its 1-2 transition.

    Returns:
        Hermitian matrix of size 2^8, or 3·2^7 in ATS mode.
    """
    freqs = site_frequencies(cfg, t)
    dims = [3 if (ats and s == 0) else 2 for s in range(N_SITES)]
    size = int(np.prod(dims))
    h = np.zeros((size, size), dtype=complex)

    lowering = []
    for s in range(N_SITES):
        if dims[s] == 3:
            _, a = _transmon_operators(cfg.anharmonicity, freqs[s])
            h += site_operator(pumped_transmon_hamiltonian(cfg, t)[0], s, dims)
            lowering.append(site_operator(a, s, dims))
        else:
            h += site_operator(-0.5 * freqs[s] * SIGMA_Z, s, dims)
            lowering.append(site_operator(SIGMA_MINUS, s, dims))

    for a_site, b_site, g in exchange_pairs(cfg):
        if g == 0:
            continue
        hop = lowering[a_site].conj().T @ lowering[b_site]
        h += g * (hop + hop.conj().T)
    return h


def excitation_number(dims: Sequence[int] = (2,) * N_SITES) -> np.ndarray:
    """Σ_s n_s, diagonal in the product basis"""
    total = np.zeros(int(np.prod(dims)))
    for s, d in enumerate(dims):
        total = total + np.diag(site_operator(np.diag(np.arange(d)).astype(complex), s, dims)).real
    return np.diag(total).astype(complex)


def single_excitation_block(cfg: DeviceConfig, t: float = 0.0) -> np.ndarray:
    """
    H restricted to states with one excitation, sites in the order Q1..Q4, C1..C4.

    Energies are measured from the all-ground state, so diagonal entries are the bare
    site frequencies.
    """
    freqs = site_frequencies(cfg, t)
    block = np.diag(freqs).astype(complex)
    for a_site, b_site, g in exchange_pairs(cfg):
        block[a_site, b_site] += g
        block[b_site, a_site] += g
    return block


def exchange_coupling(cfg: DeviceConfig, j: int, flux: float) -> float:
    """Coupler-eliminated J = g_d + g1·g2·(1/Δ1 + 1/Δ2)/2 with Δ = ω_Q - ω_C(φ)"""
    left, right = cfg.edge(j)
    g1, g2 = cfg.qubit_coupler_g[j]
    w_c = float(coupler_frequency(cfg.coupler_max_freqs[j], flux))
    d1 = cfg.qubit_freqs[left] - w_c
    d2 = cfg.qubit_freqs[right] - w_c
    if d1 == 0 or d2 == 0:
        raise PreconditionError(
            f"coupler {j + 1} is resonant with a qubit at flux {flux}",
            {"module": "device-emulator", "field": "flux"},
        )
    return cfg.direct_g[j] + g1 * g2 * (1.0 / d1 + 1.0 / d2) / 2


def effective_coupling(cfg: DeviceConfig, j: int, flux: Optional[float] = None) -> EffectiveCoupling:
    """
    Static exchange of edge j and the sideband amplitude its flux tone produces.

    The sideband amplitude is Ω = (δ/2)·∂J/∂φ·e^{-iφ_j} for tone depth δ and phase φ_j.
    A DispersiveWarning is emitted when a qubit is closer to the coupler than 5·g or sits
    above it.
    """
    if j not in range(N_QUBITS):
        raise PreconditionError(f"edge index must be 0..3, got {j}")
    mod = cfg.flux[j]
    flux = mod.dc if flux is None else flux
    left, right = cfg.edge(j)
    g1, g2 = cfg.qubit_coupler_g[j]
    w_c = float(coupler_frequency(cfg.coupler_max_freqs[j], flux))
    detunings = (cfg.qubit_freqs[left] - w_c, cfg.qubit_freqs[right] - w_c)

    j_static = exchange_coupling(cfg, j, flux)
    dj = (exchange_coupling(cfg, j, flux + FLUX_STEP) - exchange_coupling(cfg, j, flux - FLUX_STEP)) / (2 * FLUX_STEP)
    omega = 0.5 * mod.amplitude * dj * np.exp(-1j * mod.phase)
    ratio = max(abs(g1 / detunings[0]), abs(g2 / detunings[1]))

    notes = []
    if ratio >= DISPERSIVE_LIMIT:
        notes.append(f"edge {j + 1}: |g/Δ| = {ratio:.3f} is outside the dispersive regime")
    if detunings[0] > 0 or detunings[1] > 0:
        notes.append(f"edge {j + 1}: coupler sits below a qubit (Δ = {detunings})")
    for note in notes:
        logger.warning(note)
        warnings.warn(note, DispersiveWarning, stacklevel=2)

    return EffectiveCoupling(
        edge=j,
        flux=flux,
        j_static=j_static,
        dj_dflux=dj,
        omega=complex(omega),
        detunings=detunings,
        dispersive_ratio=ratio,
        warnings=notes,
    )
