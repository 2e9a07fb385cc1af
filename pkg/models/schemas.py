import logging
import math
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

logger = logging.getLogger(__name__)

PIPELINE_NAMES = (
    "fig2",
    "fig3-gauge",
    "fig3-efield",
    "fig4-chernform",
    "fig4-c2sweep",
    "fig4-current",
    "invariants",
    "device",
)

# Pipelines that query monopole positions and therefore need |Λ| <= 1
MONOPOLE_PIPELINES = ("fig3-gauge", "fig3-efield", "fig4-current", "invariants")


def _finite(value: float, name: str) -> float:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite")
    return value


class ModelParams(BaseModel):
    """Scalars of the momentum-space model: deformation a, Λ, Fermi velocities, mass"""
    a: float = Field(default=0.0, description="Dimensionless deformation of the Gamma matrices")
    lam: float = Field(default=0.0, alias="lambda", description="Tunable Λ setting the monopole separation")
    v: Tuple[float, float, float, float] = Field(
        default=(1.0, 1.0, 1.0, 1.0),
        description="Fermi velocities along x, y, z, w (MHz)",
    )
    m: float = Field(default=0.0, description="Chiral-breaking mass regulator (MHz)")

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    @field_validator("a", "lam", "m")
    @classmethod
    def validate_finite(cls, v, info):
        return _finite(v, info.field_name)

    @field_validator("v")
    @classmethod
    def validate_velocities(cls, v):
        if any(not math.isfinite(c) or c <= 0 for c in v):
            raise ValueError("Fermi velocities must be strictly positive")
        return v

    def with_mass(self, m: float) -> "ModelParams":
        return self.model_copy(update={"m": m})


class GaugeProfile(BaseModel):
    """Piecewise-linear energy shift u0(k) = f(k_x - A_x)"""
    alpha: float = Field(default=1.0, gt=0.0, le=1.0, description="Profile scale α")
    u_max: float = Field(default=3.46, gt=0.0, description="Peak shift (MHz)")
    a_x: float = Field(default=0.0, description="Vector-potential offset A_x (rad)")

    model_config = ConfigDict(frozen=True)

    @field_validator("a_x")
    @classmethod
    def validate_offset(cls, v):
        return _finite(v, "a_x")


class GridSpec(BaseModel):
    """Resolution of the Hopf-coordinate integration grids"""
    n_q: int = Field(default=96, ge=4, description="Radial cells")
    n_theta: int = Field(default=64, ge=4, description="Polar cells on [0, π/2]")
    n_phi: int = Field(default=8, ge=2, description="φ cells (full 4D method)")
    n_varphi: int = Field(default=8, ge=2, description="ϕ cells (full 4D method)")
    q_cut: float = Field(default=200.0, gt=0.0, description="Radial cutoff (MHz)")
    radial_ratio: float = Field(default=1.04, ge=1.0, description="Geometric growth of radial cells")
    angular_step: float = Field(default=2 * math.pi / 64, gt=0.0, description="Loop size along φ, ϕ (rad)")
    tol_gap: float = Field(default=1e-6, gt=0.0, description="Minimum gap at any sampled point (MHz)")

    model_config = ConfigDict(frozen=True)

    def refined(self) -> "GridSpec":
        """Same grid with every spacing halved"""
        return self.model_copy(update={
            "n_q": 2 * self.n_q,
            "n_theta": 2 * self.n_theta,
            "radial_ratio": math.sqrt(self.radial_ratio),
            "angular_step": self.angular_step / 2,
        })


class Decoherence(BaseModel):
    t1: float = Field(default=20.0, gt=0.0, description="Relaxation time (µs)")
    t2: float = Field(default=4.0, gt=0.0, description="Coherence time (µs)")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def validate_physical(self):
        if self.t2 > 2 * self.t1:
            raise ValueError(f"T2={self.t2} µs exceeds 2·T1={2 * self.t1} µs")
        return self

    @property
    def ideal(self) -> bool:
        return math.isinf(self.t1) and math.isinf(self.t2)


class FluxModulation(BaseModel):
    """Flux bias φ(t) = dc + amplitude·cos(2π·frequency·t + phase) of one coupler"""
    dc: float = Field(default=0.25, description="Static flux (Φ0)")
    amplitude: float = Field(default=0.0, ge=0.0, description="Modulation depth δ (Φ0)")
    frequency: float = Field(default=0.0, ge=0.0, description="Tone frequency (MHz)")
    phase: float = Field(default=0.0, description="Tone phase (rad)")

    model_config = ConfigDict(frozen=True)


class Pump(BaseModel):
    """Microwave pump on the 1-2 transition of Q1"""
    rabi: float = Field(default=0.0, ge=0.0, description="Rabi frequency Ω_d (MHz)")
    detuning: float = Field(default=0.0, description="ω_d - ω12 of Q1 (MHz)")
    phase: float = Field(default=0.0, description="Pump phase (rad)")

    model_config = ConfigDict(frozen=True)


# Edge tones 60, 100, 140 and 300 MHz share a 0.05 µs period
DEFAULT_QUBIT_FREQS = (4500.0, 4440.0, 4340.0, 4200.0)


def coupler_flux_for(target: float, max_freq: float) -> float:
    """Flux placing a coupler with dispersion max_freq·sqrt|cos(πφ)| at target"""
    return math.acos((target / max_freq) ** 2) / math.pi


def _representative_flux() -> List[FluxModulation]:
    qubits = DEFAULT_QUBIT_FREQS
    fluxes = []
    for j in range(4):
        top = max(qubits[j], qubits[(j + 1) % 4])
        fluxes.append(FluxModulation(dc=coupler_flux_for(top + 800.0, 6000.0)))
    return fluxes


class DeviceConfig(BaseModel):
    """
    Four transmons on a ring, coupler C_j sitting between Q_j and Q_{j+1}.

    Frequencies in MHz, times in µs. Defaults are representative values: every qubit
    sits 800 MHz or more below its couplers, g = 40 MHz, and the 2 MHz direct coupling
    roughly cancels the coupler-mediated exchange at the idle point.
    """
    qubit_freqs: Tuple[float, float, float, float] = Field(default=DEFAULT_QUBIT_FREQS)
    anharmonicity: float = Field(default=-250.0, description="Anharmonicity of Q1 (MHz)")
    coupler_max_freqs: Tuple[float, float, float, float] = Field(default=(6000.0, 6000.0, 6000.0, 6000.0))
    qubit_coupler_g: Tuple[Tuple[float, float], Tuple[float, float], Tuple[float, float], Tuple[float, float]] = Field(
        default=((40.0, 40.0), (40.0, 40.0), (40.0, 40.0), (40.0, 40.0)),
        description="(g to Q_j, g to Q_{j+1}) of each coupler C_j (MHz)",
    )
    direct_g: Tuple[float, float, float, float] = Field(default=(2.0, 2.0, 2.0, 2.0))
    flux: Tuple[FluxModulation, FluxModulation, FluxModulation, FluxModulation] = Field(
        default_factory=lambda: tuple(_representative_flux())
    )
    pump: Pump = Field(default_factory=Pump)
    decoherence: Tuple[Decoherence, Decoherence, Decoherence, Decoherence] = Field(
        default_factory=lambda: tuple(Decoherence() for _ in range(4))
    )
    tone_bandwidth: float = Field(default=20.0, gt=0.0, description="Minimum tone separation (MHz)")
    steps_per_period: int = Field(default=4000, ge=100, description="Propagator steps per common period")

    model_config = ConfigDict(frozen=True)

    @field_validator("qubit_freqs", "coupler_max_freqs")
    @classmethod
    def validate_positive(cls, v, info):
        if any(not math.isfinite(f) or f <= 0 for f in v):
            raise ValueError(f"{info.field_name} must be positive")
        return v

    def edge(self, j: int) -> Tuple[int, int]:
        """Qubit indices joined by coupler j"""
        return j, (j + 1) % 4


class ProtocolOptions(BaseModel):
    """Settings of the slow-ramp curvature measurement"""
    ramp_fraction: float = Field(default=0.02, gt=0.0, le=0.2, description="Ramp rate in units of the local gap (rad)")
    turn_on_periods: float = Field(default=5.0, gt=0.0)
    window_periods: int = Field(default=5, ge=1, description="Averaging window in gap periods")
    samples: int = Field(default=201, ge=11)
    richardson: bool = Field(default=False, description="Extrapolate the ramp rate to zero")
    leakage_threshold: float = Field(default=0.05, gt=0.0, lt=1.0)
    open_system: bool = False

    model_config = ConfigDict(frozen=True)


class PipelineSpec(BaseModel):
    """A complete, validated request to run one pipeline"""
    name: Literal[PIPELINE_NAMES] = Field(..., description="Pipeline to run")
    model: ModelParams = Field(default_factory=ModelParams)
    gauge: GaugeProfile = Field(default_factory=GaugeProfile)
    device: DeviceConfig = Field(default_factory=DeviceConfig)
    grid: GridSpec = Field(default_factory=GridSpec)
    protocol: ProtocolOptions = Field(default_factory=ProtocolOptions)
    parameters: Dict[str, Any] = Field(default_factory=dict, description="Pipeline-specific sweep values")
    output_dir: str = Field(default="runs")
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)
    plots: bool = True

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def validate_monopoles(self):
        if self.name in MONOPOLE_PIPELINES and abs(self.model.lam) > 1:
            raise ValueError(
                f"monopole_positions precondition: |lambda|={abs(self.model.lam)} > 1 has no nodal points"
            )
        return self

    def run_label(self) -> str:
        return f"{self.name}-seed{self.seed}"


class ValidationReport(BaseModel):
    """Outcome of validating a configuration file"""
    ok: bool
    spec: Optional[PipelineSpec] = None
    errors: List[str] = Field(default_factory=list)
    defaults_applied: List[str] = Field(default_factory=list)
