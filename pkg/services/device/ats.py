"""
Autler-Townes dressing of Q1: a pump on its 1-2 transition splits |1> into two branches,
and the lower branch E_- supplies the programmable energy shift u0(k_x).

The branches are the Floquet quasi-energies of the pumped three-level transmon taken from
the circuit builder, counter-rotating terms included. The two-level closed form is kept
as an oracle.
"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import logm

from exceptions import DisturbanceWarning, PreconditionError
from models.schemas import DeviceConfig, GaugeProfile
from services.device.circuit import pumped_transmon_hamiltonian
from services.device.floquet import period_propagator
from services.response import gauge_shift

logger = logging.getLogger(__name__)

# E_+ must stay this many coupling scales away from other single-excitation levels
DISTURBANCE_MARGIN = 5.0
# Propagator steps per pump period
PUMP_STEPS = 1024


@dataclass
class ATSResult:
    rabi: float
    detuning: float
    e_minus: float
    e_plus: float
    splitting: float
    nearest_level: float
    closed_splitting: float
    warnings: List[str] = field(default_factory=list)


@dataclass
class ATSSchedule:
    k_x: np.ndarray
    rabi: np.ndarray
    shift: np.ndarray
    target: np.ndarray
    reference: float

    @property
    def max_error(self) -> float:
        return float(np.max(np.abs(self.shift - self.target)))


def dressed_levels(rabi, detuning: float = 0.0) -> np.ndarray:
    """Closed-form (E_-, E_+) of the rotating-wave pair {|1>, |2>}, measured from |1>"""
    rabi = np.asarray(rabi, dtype=float)
    root = 0.5 * np.sqrt(detuning ** 2 + rabi ** 2)
    return np.stack([-0.5 * detuning - root, -0.5 * detuning + root], axis=-1)


def pumped_levels(cfg: DeviceConfig, rabi: float, detuning: float, steps: int = PUMP_STEPS) -> np.ndarray:
    """
    Quasi-energies (E_-, E_+) of the pumped Q1, measured from |1>.

    One pump period is propagated in the frame rotating at (E_0, E_1, E_1 + ω_d), where the
    quasi-energies sit next to zero and no folding occurs.
    """
    drive = cfg.qubit_freqs[0] + cfg.anharmonicity + detuning
    if drive <= 0:
        raise PreconditionError(f"pump frequency {drive:g} MHz is not positive",
                                {"module": "device-emulator", "field": "pump.detuning"})
    period = 1.0 / drive
    dt = period / steps
    t = (np.arange(steps) + 0.5) * dt

    bare = np.diag(pumped_transmon_hamiltonian(cfg, 0.0, rabi=0.0)[0]).real
    frame = np.array([bare[0], bare[1], bare[1] + drive])
    rotation = np.exp(2j * np.pi * np.subtract.outer(frame, frame)[None] * t[:, None, None])
    h = pumped_transmon_hamiltonian(cfg, t, rabi, detuning) * rotation - np.diag(frame)[None]

    h_eff = 1j * logm(period_propagator(h, dt)) / (2 * np.pi * period)
    values, vectors = np.linalg.eigh(0.5 * (h_eff + h_eff.conj().T))
    # the branch pair is the one with least weight on |0>
    pair = np.argsort(np.abs(vectors[0]) ** 2)[:2]
    return np.sort(values[pair])


def ats_dressing(cfg: DeviceConfig, rabi: Optional[float] = None, detuning: Optional[float] = None,
                 coupling_scale: float = 5.0) -> ATSResult:
    """
    Dress Q1 with its pump and report both branches.

    Args:
        cfg: Device configuration; cfg.pump supplies defaults for rabi and detuning.
        rabi: Ω_d (MHz), non-negative.
        detuning: ω_d - ω12 (MHz).
        coupling_scale: Typical exchange amplitude; sets how close E_+ may come to another
            qubit before a DisturbanceWarning is raised.
    """
    rabi = cfg.pump.rabi if rabi is None else rabi
    detuning = cfg.pump.detuning if detuning is None else detuning
    if rabi < 0:
        raise PreconditionError(f"Rabi frequency must be non-negative, got {rabi}",
                                {"module": "device-emulator", "field": "pump.rabi"})
    e_minus, e_plus = (float(e) for e in pumped_levels(cfg, rabi, detuning))
    closed = dressed_levels(rabi, detuning)

    upper = cfg.qubit_freqs[0] + e_plus
    others = np.asarray(cfg.qubit_freqs[1:])
    nearest = float(np.min(np.abs(others - upper)))
    notes = []
    if nearest < DISTURBANCE_MARGIN * coupling_scale:
        notes.append(f"E_+ branch of Q1 lies {nearest:.2f} MHz from another qubit level")
        logger.warning(notes[-1])
        warnings.warn(notes[-1], DisturbanceWarning, stacklevel=2)
    logger.debug(f"ATS at Ω_d={rabi:g}, δ={detuning:g}: E_-={e_minus:.6f}, E_+={e_plus:.6f} MHz")

    return ATSResult(
        rabi=rabi,
        detuning=detuning,
        e_minus=e_minus,
        e_plus=e_plus,
        splitting=e_plus - e_minus,
        nearest_level=nearest,
        closed_splitting=float(closed[1] - closed[0]),
        warnings=notes,
    )


def ats_profile_schedule(profile: GaugeProfile, k_x, cfg: Optional[DeviceConfig] = None,
                         detuning: Optional[float] = None) -> ATSSchedule:
    """
    Pump amplitudes realising u0(k_x) = f(k_x - A_x) on the lower branch.

    On resonance Ω_d(k_x) = 2(α·u_max - f(k_x)) places E_- at f(k_x) - α·u_max, so the
    shift measured from the reference E_-(0) - α·u_max equals f. Off resonance the amplitude
    is solved from the rotating-wave branch energy. The reported shift is the quasi-energy
    of the pumped transmon at that amplitude.
    """
    cfg = cfg or DeviceConfig()
    if detuning is None:
        detuning = cfg.pump.detuning
    k_x = np.atleast_1d(np.asarray(k_x, dtype=float))
    points = np.zeros((len(k_x), 4))
    points[:, 0] = k_x
    target = np.atleast_1d(gauge_shift(points, profile))
    peak = profile.alpha * profile.u_max

    # the profile peak is reached with the pump off
    reference = float(pumped_levels(cfg, 0.0, detuning)[0]) - peak
    wanted = reference + target
    # E_- = -δ/2 - ½sqrt(δ² + Ω²)  =>  Ω² = (2(-E_- - δ/2))² - δ²
    rabi = np.sqrt(np.maximum((2 * (-wanted - 0.5 * detuning)) ** 2 - detuning ** 2, 0.0))
    shift = np.array([pumped_levels(cfg, float(r), detuning)[0] for r in rabi]) - reference
    logger.info(f"ATS schedule over {len(k_x)} momenta: max error {np.max(np.abs(shift - target)):.2e} MHz")
    return ATSSchedule(k_x=k_x, rabi=rabi, shift=shift, target=target, reference=reference)
