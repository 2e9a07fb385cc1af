"""
Synthetic electromagnetic response of the monopole pair.

The gauge shift u0(k) = f(k_x - A_x) plays the role of a vector potential, the Λ(τ) schedule
of a pseudo-electric field, and the parity-magnetic-effect current follows from the second
Chern number of a valley.
"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import linregress

from exceptions import NoNodalPointsError, NonlinearityWarning, PreconditionError, SegmentationError
from models.schemas import GaugeProfile, GridSpec, ModelParams
from services.gamma_model import hamiltonian, wrap_momentum
from services.topology.chern import second_chern_reduced

logger = logging.getLogger(__name__)

# Linear fits with a lower coefficient of determination raise NonlinearityWarning
R2_THRESHOLD = 0.99

# Unit fictitious force converting an energy shift into a displacement Y
F_Y = 1.0


@dataclass
class NodalPoint:
    k: np.ndarray
    energy: float
    spread: float


@dataclass
class GaugePoint:
    a_x: float
    y: float
    delta_e: float
    k_plus: np.ndarray
    k_minus: np.ndarray
    separation: float


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r_squared: float
    residuals: np.ndarray


@dataclass
class GaugeSweep:
    alpha: float
    points: List[GaugePoint]
    fit: LinearFit
    b_z: float
    warnings: List[str] = field(default_factory=list)


@dataclass
class SeparationSchedule:
    """Λ sampled on a fictitious-time grid; rate is set when Λ = cos(rate·τ)"""
    tau: np.ndarray
    lambdas: np.ndarray
    direction: str = "expanding"
    rate: Optional[float] = None

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        if np.any(np.abs(self.lambdas) > 1):
            raise NoNodalPointsError(
                "schedule leaves |lambda| <= 1",
                {"module": "pme-response", "field": "lambda_of_tau"},
            )

    @classmethod
    def from_function(cls, lambda_of_tau: Callable, tau, direction: str = "expanding",
                      rate: Optional[float] = None) -> "SeparationSchedule":
        tau = np.asarray(tau, dtype=float)
        return cls(tau=tau, lambdas=np.array([lambda_of_tau(t) for t in tau]), direction=direction, rate=rate)

    @property
    def b_w(self) -> np.ndarray:
        return np.arccos(np.clip(self.lambdas, -1.0, 1.0))


@dataclass
class PseudoElectricField:
    tau: np.ndarray
    b_w: np.ndarray
    e5: np.ndarray
    mean: float
    direction: str


@dataclass
class YangCharge:
    delta_c2: float
    c2_pos: float
    c2_neg: float


def cosine_schedule(rate: float = 0.2 * np.pi, start: float = 0.0, stop: float = 5.0, step: float = 0.5,
                    direction: Optional[str] = None) -> SeparationSchedule:
    """Λ(τ) = cos(rate·τ) on [start, stop]"""
    tau = np.arange(start, stop + step / 2, step)
    if direction is None:
        direction = "expanding" if np.sin(rate * tau[len(tau) // 2]) >= 0 else "merging"
    return SeparationSchedule.from_function(lambda t: np.cos(rate * t), tau, direction, rate)


def standard_schedules() -> List[SeparationSchedule]:
    """The expanding segment τ: 0 -> 5 followed by the merging segment τ: 6 -> 10"""
    return [cosine_schedule(start=0.0, stop=5.0), cosine_schedule(start=6.0, stop=10.0)]


def gauge_shift(k, g: GaugeProfile):
    """
    Triangle profile f(k_x - A_x), peaking at α·u_max for k_x - A_x = -3π/4.

    Returns:
        Energy shift in MHz with the shape of k[..., 0].
    """
    k = np.asarray(k, dtype=float)
    kx = k[..., 0] if k.ndim else k
    x = wrap_momentum(kx - g.a_x)
    rising = g.alpha * (4 * g.u_max / np.pi) * (x + np.pi)
    falling = -g.alpha * (4 * g.u_max / (7 * np.pi)) * (x - np.pi)
    return np.where(x <= -0.75 * np.pi, rising, falling)


def pump_hamiltonian(k, p: ModelParams, g: GaugeProfile) -> np.ndarray:
    """H_eff(k) + u0(k)·I4"""
    u0 = np.asarray(gauge_shift(k, g))
    return hamiltonian(k, p) + u0[..., None, None] * np.eye(4)


def _spread(k, p: ModelParams, g: GaugeProfile) -> float:
    energies = np.linalg.eigvalsh(pump_hamiltonian(k, p, g))
    return float(energies[..., -1] - energies[..., 0])


def locate_nodal_point(p: ModelParams, g: GaugeProfile, sign: int = 1, scan: int = 721,
                       sweeps: int = 3, xatol: float = 1e-10) -> NodalPoint:
    """
    Find the band-touching point of H_pump in the k_w > 0 (sign=+1) or k_w < 0 half.

    A coarse scan along k_w seeds a coordinate descent that minimises the total band spread
    E4 - E1 axis by axis with bounded Brent searches.
    """
    kw = np.linspace(-np.pi, np.pi, scan, endpoint=False)
    line = np.zeros((scan, 4))
    line[:, 3] = kw
    energies = np.linalg.eigvalsh(pump_hamiltonian(line, p, g))
    spread = energies[:, -1] - energies[:, 0]
    half = kw > 0 if sign > 0 else kw < 0
    seed = np.argmin(np.where(half, spread, np.inf))

    k = line[seed].copy()
    step = 2 * np.pi / scan
    for _ in range(sweeps):
        for axis in range(4):
            def along(x, axis=axis):
                trial = k.copy()
                trial[axis] = x
                return _spread(trial, p, g)
            result = minimize_scalar(along, bounds=(k[axis] - 2 * step, k[axis] + 2 * step),
                                     method="bounded", options={"xatol": xatol})
            k[axis] = result.x
        step /= 4
    energies = np.linalg.eigvalsh(pump_hamiltonian(k, p, g))
    return NodalPoint(k=k, energy=float(np.mean(energies)), spread=float(energies[-1] - energies[0]))


def fit_line(x: Sequence[float], y: Sequence[float]) -> LinearFit:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    result = linregress(x, y)
    residuals = y - (result.slope * x + result.intercept)
    return LinearFit(slope=float(result.slope), intercept=float(result.intercept),
                     r_squared=float(result.rvalue ** 2), residuals=residuals)


def check_linearity(fit: LinearFit, label: str) -> List[str]:
    if fit.r_squared >= R2_THRESHOLD:
        return []
    message = f"{label}: R²={fit.r_squared:.4f} below {R2_THRESHOLD}, residuals {np.round(fit.residuals, 6).tolist()}"
    logger.warning(message)
    warnings.warn(message, NonlinearityWarning)
    return [message]


def monopole_shift_vs_Ax(p: ModelParams, profiles: Sequence[GaugeProfile]) -> GaugeSweep:
    """
    Move both nodes with a series of vector potentials and read off B^z = -∂A_x/∂Y.

    Every profile must share α and u_max; the A_x = 0 profile (added when missing) sets the
    energy baseline.
    """
    if abs(p.lam) >= 1:
        raise NoNodalPointsError(
            f"nodes cannot be localised at |lambda|={abs(p.lam)}",
            {"module": "pme-response", "field": "lambda"},
        )
    if not profiles:
        raise PreconditionError("A_x sweep needs at least one profile")
    alphas = {(g.alpha, g.u_max) for g in profiles}
    if len(alphas) != 1:
        raise PreconditionError("all profiles of one sweep must share alpha and u_max")
    for g in profiles:
        if abs(g.a_x) > np.pi:
            raise PreconditionError(
                f"A_x={g.a_x} outside one period",
                {"module": "pme-response", "field": "a_x"},
            )

    base = profiles[0].model_copy(update={"a_x": 0.0})
    baseline = locate_nodal_point(p, base, 1).energy
    points = []
    for g in profiles:
        plus = locate_nodal_point(p, g, 1)
        minus = locate_nodal_point(p, g, -1)
        delta_e = plus.energy - baseline
        points.append(GaugePoint(
            a_x=g.a_x,
            y=delta_e / F_Y,
            delta_e=delta_e,
            k_plus=plus.k,
            k_minus=minus.k,
            separation=float(np.linalg.norm(plus.k - minus.k)),
        ))
        logger.debug(f"A_x={g.a_x:+.4f}: ΔE={delta_e:.6f} MHz, separation={points[-1].separation:.6f}")

    fit = fit_line([pt.y for pt in points], [pt.a_x for pt in points])
    notes = check_linearity(fit, f"A_x vs Y at alpha={base.alpha}")
    logger.info(f"B^z = {-fit.slope:.6f} at alpha={base.alpha} (R²={fit.r_squared:.6f})")
    return GaugeSweep(alpha=base.alpha, points=points, fit=fit, b_z=-fit.slope, warnings=notes)


def magnetic_field_closed(g: GaugeProfile) -> float:
    """B^z of the triangle profile while the nodes sit on its falling branch"""
    return -7 * np.pi / (4 * g.alpha * g.u_max)


def pseudo_electric_field(s: SeparationSchedule) -> PseudoElectricField:
    """
    E5^w = ∂_τ b_w over one schedule segment.

    Raises:
        SegmentationError: b_w is not monotone on the segment.
    """
    b_w = s.b_w
    if len(s.tau) < 2:
        raise PreconditionError("a schedule segment needs at least two times")
    steps = np.diff(b_w)
    if np.any(steps > 1e-12) and np.any(steps < -1e-12):
        turn = int(np.argmax(np.sign(steps) != np.sign(steps[0])))
        raise SegmentationError(
            f"b_w turns around inside the segment near tau={s.tau[turn + 1]}",
            {"module": "pme-response", "field": "tau_grid"},
        )
    if s.rate is not None:
        sign = 1.0 if np.all(steps >= 0) else -1.0
        if np.allclose(steps, 0):
            sign = 0.0
        e5 = np.full_like(s.tau, sign * abs(s.rate))
    else:
        e5 = np.gradient(b_w, s.tau)
    return PseudoElectricField(tau=s.tau, b_w=b_w, e5=e5, mean=float(np.mean(e5)), direction=s.direction)


def separation_trace(schedules: Sequence[SeparationSchedule], p: Optional[ModelParams] = None,
                     measure: bool = False, gauge: Optional[GaugeProfile] = None) -> List[dict]:
    """
    Rows of τ, Λ, b_w, 2b_w and E5 across schedule segments.

    With measure=True the nodes are also located numerically on H(k) at each τ and the
    measured b_w is reported next to arccos Λ, with the nodes dressed by gauge.
    """
    p = p or ModelParams()
    gauge = gauge or GaugeProfile()
    rows = []
    for s in schedules:
        efield = pseudo_electric_field(s)
        for tau, lam, b_w, e5 in zip(s.tau, s.lambdas, efield.b_w, efield.e5):
            row = {"tau": float(tau), "lambda": float(lam), "b_w": float(b_w),
                   "separation": float(2 * b_w), "e5": float(e5), "direction": s.direction}
            if measure:
                node = locate_nodal_point(p.model_copy(update={"lam": float(lam)}), gauge, 1)
                row["b_w_measured"] = float(abs(node.k[3]))
            rows.append(row)
    return rows


def topological_current(c2: float, e5: float, bz: float) -> float:
    """J^z = C2·E5·B^z / 2π²"""
    return c2 * e5 * bz / (2 * np.pi ** 2)


def valley_current(c2v: float, ez: float, bz: float) -> float:
    """J5^z = C2v·E^z·B^z / 4π²"""
    return c2v * ez * bz / (4 * np.pi ** 2)


def current_sweep(c2: float, e5: float, fields: Sequence[float]) -> dict:
    """J^z over a list of B^z values with the linear-fit diagnostics"""
    fields = [float(b) for b in fields]
    currents = [topological_current(c2, e5, b) for b in fields]
    result = {"b_z": fields, "j_z": currents, "c2": c2, "e5": e5, "warnings": []}
    if len(fields) >= 2 and np.ptp(fields) > 0:
        fit = fit_line(fields, currents)
        result.update(slope=fit.slope, intercept=fit.intercept, r_squared=fit.r_squared)
        result["warnings"] = check_linearity(fit, "J^z vs B^z")
    return result


def yang_charge(p: ModelParams, m_neg: float, m_pos: float, grid: GridSpec = None,
                workers: Optional[int] = None, check: bool = True) -> YangCharge:
    """ΔC2 across the mass-driven transition, C2(m_pos) - C2(m_neg)"""
    if not (m_neg < 0 < m_pos):
        raise PreconditionError(
            f"Yang charge needs m_neg < 0 < m_pos, got {m_neg}, {m_pos}",
            {"module": "pme-response", "field": "m"},
        )
    c2_pos = second_chern_reduced(p.with_mass(m_pos), grid, workers, check).value
    c2_neg = second_chern_reduced(p.with_mass(m_neg), grid, workers, check).value
    logger.info(f"Yang charge between m={m_neg} and m={m_pos}: {c2_pos - c2_neg:.6f}")
    return YangCharge(delta_c2=c2_pos - c2_neg, c2_pos=c2_pos, c2_neg=c2_neg)
