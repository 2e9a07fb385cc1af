"""
Time evolution of pure states and density matrices.

Hamiltonians are in MHz and times in µs, so the generator carries a factor 2π:
dρ/dt = -2πi[H, ρ] + Σ_L (LρL† - ½{L†L, ρ}), with collapse rates in 1/µs.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp

from exceptions import IntegrationError, PreconditionError

logger = logging.getLogger(__name__)

HamiltonianLike = Union[np.ndarray, Callable[[float], np.ndarray]]


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    trace_error: float
    hermiticity_error: float
    min_eigenvalue: float

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _as_function(h: HamiltonianLike) -> Callable[[float], np.ndarray]:
    if callable(h):
        return h
    fixed = np.asarray(h, dtype=complex)
    return lambda t: fixed


def collapse_operators(t1: Sequence[float], t2: Sequence[float]) -> List[np.ndarray]:
    """
    Relaxation and pure dephasing on the ground state plus an n-level manifold.

    Level 0 is the ground state; manifold level k (1..n) decays into it at rate 1/T1_k and
    dephases through σz_k = I - 2|k><k| at rate γφ = 1/T2 - 1/(2T1). Infinite times switch the
    corresponding channel off.
    """
    t1, t2 = list(t1), list(t2)
    if len(t1) != len(t2):
        raise PreconditionError("T1 and T2 lists differ in length")
    dim = len(t1) + 1
    ops = []
    for k, (relax, coherence) in enumerate(zip(t1, t2), start=1):
        if relax <= 0 or coherence <= 0:
            raise PreconditionError(f"decoherence times must be positive, got T1={relax}, T2={coherence}")
        if coherence > 2 * relax:
            raise PreconditionError(f"T2={coherence} exceeds 2·T1={2 * relax}",
                                    {"module": "device-emulator", "field": "decoherence"})
        gamma1 = 0.0 if math.isinf(relax) else 1.0 / relax
        gamma_phi = (0.0 if math.isinf(coherence) else 1.0 / coherence) - 0.5 * gamma1
        if gamma1 > 0:
            op = np.zeros((dim, dim), dtype=complex)
            op[0, k] = math.sqrt(gamma1)
            ops.append(op)
        if gamma_phi > 1e-15:
            sz = np.eye(dim, dtype=complex)
            sz[k, k] = -1.0
            ops.append(math.sqrt(gamma_phi / 2) * sz)
    return ops


def lindblad_rhs(h: np.ndarray, rho: np.ndarray, collapse: Sequence[np.ndarray]) -> np.ndarray:
    out = -2j * np.pi * (h @ rho - rho @ h)
    for op in collapse:
        op_dag = op.conj().T
        jump = op_dag @ op
        out += op @ rho @ op_dag - 0.5 * (jump @ rho + rho @ jump)
    return out


def _solve(rhs, y0: np.ndarray, t_span, t_eval, rtol: float, atol: float, label: str):
    sol = solve_ivp(rhs, t_span, y0, t_eval=t_eval, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        stopped = float(sol.t[-1]) if len(sol.t) else float(t_span[0])
        raise IntegrationError(f"{label} integration failed: {sol.message}", {"t": stopped})
    return sol


def lindblad_evolve(h: HamiltonianLike, rho0, collapse: Sequence[np.ndarray], t_span, t_eval=None,
                    rtol: float = 1e-9, atol: float = 1e-11) -> Trajectory:
    """
    Integrate the master equation.

    Args:
        h: Constant Hamiltonian or a callable t -> H(t) (MHz).
        rho0: Initial density matrix with unit trace.
        collapse: Collapse operators, for example from collapse_operators; empty for closed evolution.
        t_span: (t0, t1) in µs.
        t_eval: Output times; defaults to the end points.

    Raises:
        IntegrationError: The integrator gave up; context carries the time reached.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if abs(np.trace(rho0) - 1) > 1e-10:
        raise PreconditionError(f"initial state has trace {np.trace(rho0).real:.6g}")
    dim = rho0.shape[0]
    h_of_t = _as_function(h)
    collapse = [np.asarray(op, dtype=complex) for op in collapse]

    def rhs(t, y):
        return lindblad_rhs(h_of_t(t), y.reshape(dim, dim), collapse).ravel()

    t_eval = np.asarray(t_span if t_eval is None else t_eval, dtype=float)
    sol = _solve(rhs, rho0.ravel(), t_span, t_eval, rtol, atol, "master equation")
    states = sol.y.T.reshape(-1, dim, dim)

    traces = np.trace(states, axis1=-2, axis2=-1)
    hermiticity = float(np.max(np.abs(states - np.swapaxes(states.conj(), -1, -2))))
    hermitian = 0.5 * (states + np.swapaxes(states.conj(), -1, -2))
    min_eig = float(np.min(np.linalg.eigvalsh(hermitian)))
    trajectory = Trajectory(
        t=sol.t,
        states=states,
        trace_error=float(np.max(np.abs(traces - 1))),
        hermiticity_error=hermiticity,
        min_eigenvalue=min_eig,
    )
    logger.debug(
        f"Master equation over {t_span}: trace error {trajectory.trace_error:.2e}, "
        f"min eigenvalue {min_eig:.2e}"
    )
    return trajectory


def schrodinger_evolve(h: HamiltonianLike, psi0, t_span, t_eval=None,
                       rtol: float = 1e-10, atol: float = 1e-12) -> Trajectory:
    """Closed evolution of a state vector; states has shape (len(t), dim)"""
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1) > 1e-10:
        raise PreconditionError("initial state is not normalised")
    h_of_t = _as_function(h)

    def rhs(t, y):
        return -2j * np.pi * (h_of_t(t) @ y)

    t_eval = np.asarray(t_span if t_eval is None else t_eval, dtype=float)
    sol = _solve(rhs, psi0, t_span, t_eval, rtol, atol, "Schrödinger")
    states = sol.y.T
    norms = np.linalg.norm(states, axis=-1)
    return Trajectory(
        t=sol.t,
        states=states,
        trace_error=float(np.max(np.abs(norms ** 2 - 1))),
        hermiticity_error=0.0,
        min_eigenvalue=0.0,
    )
