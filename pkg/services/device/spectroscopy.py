"""
Energy spectroscopy of the synthesised four-level Hamiltonian along lines in the Brillouin zone.

The effective mode diagonalises H(k) directly. The device mode programs the emulated device
with the coupling quad and mass of every momentum, extracts the Hamiltonian it realises by
Floquet engineering, probes every qubit with a weak tone and reads the levels off the
Lorentzian absorption peaks.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

import numpy as np
from scipy.signal import find_peaks

from exceptions import PreconditionError
from models.schemas import DeviceConfig, ModelParams
from services.device.floquet import floquet_effective_hamiltonian
from services.gamma_model import CouplingQuad, bloch_to_couplings, bloch_vector, gamma_set, hamiltonian_from_bloch
from services.parallel import ordered_map

logger = logging.getLogger(__name__)

Mode = Literal["effective", "device"]

# Largest coupling programmed on the device (MHz); the spectrum is rescaled afterwards
DEVICE_COUPLING_SCALE = 0.25


@dataclass
class SpectroscopyResult:
    path: np.ndarray
    k: np.ndarray
    energies: np.ndarray
    mode: str
    peaks: List[np.ndarray] = field(default_factory=list)
    probe: Optional[np.ndarray] = None
    absorption: Optional[np.ndarray] = None
    realised: Optional[np.ndarray] = None
    deviation: Optional[np.ndarray] = None
    scale: float = 1.0

    @property
    def visible_levels(self) -> np.ndarray:
        """Number of resolved levels at every path point"""
        if self.mode == "device":
            return np.array([len(p) for p in self.peaks])
        return np.array([len(np.unique(np.round(e, 9))) for e in self.energies])


def momentum_line(axis: str, n: int = 181, k_other=(0.0, 0.0, 0.0, 0.0)) -> np.ndarray:
    """n points with k_axis running over [-π, π] and the other components fixed"""
    index = "xyzw".index(axis)
    line = np.tile(np.asarray(k_other, dtype=float), (n, 1))
    line[:, index] = np.linspace(-np.pi, np.pi, n)
    return line


def absorption_spectrum(h: np.ndarray, probe: np.ndarray, linewidth: float) -> np.ndarray:
    """Sum of unit-weight Lorentzians at the eigenvalues of h, one probe tone per qubit"""
    energies, vectors = np.linalg.eigh(h)
    weights = np.sum(np.abs(vectors) ** 2, axis=0)
    half = linewidth / 2
    profile = half ** 2 / ((probe[:, None] - energies[None, :]) ** 2 + half ** 2)
    return profile @ weights


def device_scale(p: ModelParams, bloch: np.ndarray, coupling_scale: float = DEVICE_COUPLING_SCALE) -> float:
    """Factor mapping the largest coupling or mass along the path onto coupling_scale"""
    largest = abs(p.m)
    for d in bloch:
        largest = max(largest, max(abs(w) for w in bloch_to_couplings(d, p.a).as_tuple()))
    return coupling_scale / largest if largest > 0 else 1.0


def _device_point(task: Tuple[np.ndarray, DeviceConfig, float, float, float]) -> Tuple[np.ndarray, float]:
    d, device, scale, a, m = task
    couplings = bloch_to_couplings(d, a)
    target = CouplingQuad(*(scale * w for w in couplings.as_tuple()))
    onsite = scale * m * np.diag(gamma_set(a).g0).real
    result = floquet_effective_hamiltonian(device, target, onsite=onsite)
    return result.effective / scale, result.deviation / scale


def spectroscopy_scan(p: ModelParams, path, mode: Mode = "effective", linewidth: float = 0.05,
                      probe: Optional[np.ndarray] = None, prominence: float = 0.05,
                      device: Optional[DeviceConfig] = None,
                      coupling_scale: float = DEVICE_COUPLING_SCALE,
                      workers: Optional[int] = None) -> SpectroscopyResult:
    """
    Levels of H(k) along a path.

    Args:
        p: Model parameters.
        path: Momenta (N, 4).
        mode: "effective" for exact eigenvalues, "device" for absorption peaks of the
            Hamiltonian the emulated device realises.
        linewidth: Full width of each absorption line (MHz, in model units).
        probe: Probe frequencies; defaults to a grid covering the spectrum.
        prominence: Minimum peak prominence relative to a single line.
        device: Device configuration for the device mode, default DeviceConfig().
        coupling_scale: Largest coupling programmed on the device (MHz).
        workers: Process pool size for the per-momentum Floquet extractions.

    Returns:
        SpectroscopyResult with the exact energies (N, 4) in both modes and, in device
        mode, the realised matrices, their deviation from H(k) and the detected peaks.
    """
    k = np.atleast_2d(np.asarray(path, dtype=float))
    if k.shape[-1] != 4:
        raise PreconditionError(f"path must have shape (N, 4), got {k.shape}")
    steps = np.linalg.norm(np.diff(k, axis=0), axis=-1)
    coordinate = np.concatenate([[0.0], np.cumsum(steps)])
    bloch = bloch_vector(k, p)
    energies = np.linalg.eigvalsh(hamiltonian_from_bloch(bloch, p.a, p.m))
    if mode == "effective":
        return SpectroscopyResult(path=coordinate, k=k, energies=energies, mode=mode)
    if mode != "device":
        raise PreconditionError(f"unknown spectroscopy mode {mode!r}")

    device = device or DeviceConfig()
    scale = device_scale(p, bloch, coupling_scale)
    tasks = [(d, device, scale, p.a, p.m) for d in bloch]
    realised, deviation = zip(*ordered_map(_device_point, tasks, workers))
    realised = np.array(realised)

    if probe is None:
        reach = float(np.max(np.abs(np.linalg.eigvalsh(realised)))) + 5 * linewidth
        probe = np.linspace(-reach, reach, max(2001, int(40 * reach / linewidth)))
    peaks, absorption = [], []
    for h in realised:
        signal = absorption_spectrum(h, probe, linewidth)
        found, _ = find_peaks(signal, prominence=prominence)
        peaks.append(probe[found])
        absorption.append(signal)
    logger.info(
        f"Device spectroscopy over {len(k)} momenta at coupling scale {coupling_scale:g} MHz, "
        f"worst deviation {max(deviation):.3g} MHz"
    )
    return SpectroscopyResult(
        path=coordinate,
        k=k,
        energies=energies,
        mode=mode,
        peaks=peaks,
        probe=probe,
        absorption=np.array(absorption),
        realised=realised,
        deviation=np.array(deviation),
        scale=scale,
    )
