"""
Momentum-space model of the tensor-monopole semimetal.

Conventions: Kronecker products are outer-first (np.kron(A, B) puts A on the 2x2 block
level), energies are in MHz, momenta in radians. Every function accepts a single point or a
batch with the component axis last.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from exceptions import NoNodalPointsError, PreconditionError, SingularMapError
from models.schemas import ModelParams

logger = logging.getLogger(__name__)

S0 = np.eye(2, dtype=complex)
S1 = np.array([[0, 1], [1, 0]], dtype=complex)
S2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
S3 = np.array([[1, 0], [0, -1]], dtype=complex)

# Row r of the diamond matrix belongs to qubit DIAMOND_ORDER[r] (Q1 and Q2 exchanged)
DIAMOND_ORDER = (1, 0, 2, 3)

# Antiunitary CP = CP_UNITARY · complex conjugation
CP_UNITARY = np.kron(S1, S2)


@dataclass(frozen=True)
class GammaSet:
    """The five deformed Gamma matrices for one value of a"""
    a: float
    gx: np.ndarray
    gy: np.ndarray
    gz: np.ndarray
    gw: np.ndarray
    g0: np.ndarray

    def stack(self) -> np.ndarray:
        """(gx, gy, gz, gw) as a (4, 4, 4) array"""
        return np.stack([self.gx, self.gy, self.gz, self.gw])


@dataclass(frozen=True)
class CouplingQuad:
    """Complex exchange amplitudes around the diamond (MHz)"""
    omega12: complex
    omega23: complex
    omega34: complex
    omega41: complex

    def as_tuple(self) -> Tuple[complex, complex, complex, complex]:
        return self.omega12, self.omega23, self.omega34, self.omega41


@dataclass(frozen=True)
class MonopolePair:
    k_plus: np.ndarray
    k_minus: np.ndarray
    b_w: float
    merged: bool


@dataclass
class SymmetryReport:
    chiral: bool
    cp: bool
    cp_squared_minus_one: bool
    chiral_residual: float
    cp_residual: float
    samples: int
    details: List[str] = field(default_factory=list)


def gamma_set(a: float) -> GammaSet:
    """
    Build the deformed Gamma matrices.

    Args:
        a: Deformation; a=0 gives the Clifford set, a=±1 the flat-band limit.

    Returns:
        GammaSet with g0 = σ3⊗σ3 independent of a.
    """
    if not np.isfinite(a):
        raise PreconditionError(f"gamma_set needs a finite deformation, got a={a}")
    return GammaSet(
        a=float(a),
        gx=np.kron(S0, S1) + a * np.kron(S1, S0),
        gy=np.kron(S2, S3) + a * np.kron(S3, S2),
        gz=np.kron(S0, S2) + a * np.kron(S2, S0),
        gw=np.kron(S1, S3) + a * np.kron(S3, S1),
        g0=np.kron(S3, S3),
    )


def wrap_momentum(k) -> np.ndarray:
    """Map every component into the first Brillouin zone [-π, π)"""
    k = np.asarray(k, dtype=float)
    return np.mod(k + np.pi, 2 * np.pi) - np.pi


def bloch_vector(k, p: ModelParams) -> np.ndarray:
    """
    Bloch vector (dx, dy, dz, dw) of the lattice model.

    d_i = v_i sin k_i for i = x, y, z and d_w = v_w (Λ + 3 - Σ_j cos k_j), the sum running
    over all four momenta.
    """
    k = wrap_momentum(k)
    v = np.asarray(p.v, dtype=float)
    d = np.empty_like(k)
    d[..., :3] = v[:3] * np.sin(k[..., :3])
    d[..., 3] = v[3] * (p.lam + 3.0 - np.cos(k).sum(axis=-1))
    return d


def bloch_jacobian(k, p: ModelParams) -> np.ndarray:
    """∂d_i/∂k_j with shape (..., 4, 4)"""
    k = wrap_momentum(k)
    v = np.asarray(p.v, dtype=float)
    jac = np.zeros(k.shape + (4,))
    for i in range(3):
        jac[..., i, i] = v[i] * np.cos(k[..., i])
    jac[..., 3, :] = v[3] * np.sin(k)
    return jac


def hamiltonian_from_bloch(d, a: float, m: float = 0.0) -> np.ndarray:
    """Σ d_i Γ̃_i + m Γ̃0 for one or many Bloch vectors"""
    gammas = gamma_set(a)
    d = np.asarray(d, dtype=float)
    h = np.einsum("...i,ijk->...jk", d, gammas.stack())
    if m:
        h = h + m * gammas.g0
    return h


def hamiltonian(k, p: ModelParams) -> np.ndarray:
    return hamiltonian_from_bloch(bloch_vector(k, p), p.a, p.m)


def spectrum_analytic(d, a: float) -> np.ndarray:
    """Massless closed form ±(1±a)|d|, sorted ascending along the last axis"""
    norm = np.linalg.norm(np.asarray(d, dtype=float), axis=-1)
    bands = np.stack([(1 + a) * norm, -(1 + a) * norm, (1 - a) * norm, -(1 - a) * norm], axis=-1)
    return np.sort(bands, axis=-1)


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of every column real and positive"""
    idx = np.argmax(np.abs(vectors), axis=-2)
    pivot = np.take_along_axis(vectors, idx[..., None, :], axis=-2)
    phase = pivot / np.abs(pivot)
    return vectors / phase


def eigensystem(h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and phase-fixed eigenvectors of Hermitian matrices"""
    energies, vectors = np.linalg.eigh(h)
    return energies, fix_phases(vectors)


def valley_hamiltonian(q, sign: int, p: ModelParams) -> np.ndarray:
    """
    Linearised Hamiltonian about K_± = (0, 0, 0, ±arccos Λ).

    Args:
        q: Momentum measured from the valley, shape (..., 4).
        sign: +1 or -1.
        p: Model parameters, |Λ| < 1 required.
    """
    if sign not in (1, -1):
        raise PreconditionError(f"valley sign must be +1 or -1, got {sign}")
    if abs(p.lam) >= 1:
        raise NoNodalPointsError(
            f"valley expansion needs |lambda| < 1, got {p.lam}",
            {"module": "gamma-model", "field": "lambda"},
        )
    beta = np.sqrt(1.0 - p.lam ** 2)
    v = np.asarray(p.v, dtype=float)
    scale = np.array([v[0], v[1], v[2], sign * beta * v[3]])
    return hamiltonian_from_bloch(np.asarray(q, dtype=float) * scale, p.a, p.m)


def monopole_positions(lam: float) -> MonopolePair:
    if abs(lam) > 1:
        raise NoNodalPointsError(
            f"|lambda|={abs(lam)} > 1: the bands never touch",
            {"module": "gamma-model", "field": "lambda"},
        )
    b_w = float(np.arccos(lam))
    return MonopolePair(
        k_plus=np.array([0.0, 0.0, 0.0, b_w]),
        k_minus=np.array([0.0, 0.0, 0.0, -b_w]),
        b_w=b_w,
        merged=abs(lam) == 1,
    )


def symmetry_report(p: ModelParams, samples: int = 64, tol: float = 1e-10, seed: int = 0) -> SymmetryReport:
    """Test chiral and CP symmetry of H(k) at random momenta"""
    rng = np.random.default_rng(seed)
    ks = rng.uniform(-np.pi, np.pi, size=(samples, 4))
    h = hamiltonian(ks, p)
    g0 = gamma_set(p.a).g0
    scale = max(1.0, float(np.max(np.linalg.norm(h, axis=(-2, -1)))))

    chiral_residual = float(np.max(np.linalg.norm(g0 @ h + h @ g0, axis=(-2, -1)))) / scale
    transformed = CP_UNITARY @ h.conj() @ CP_UNITARY.conj().T
    cp_residual = float(np.max(np.linalg.norm(transformed + h, axis=(-2, -1)))) / scale
    cp_square = CP_UNITARY @ CP_UNITARY.conj()
    squared_ok = bool(np.allclose(cp_square, -np.eye(4), atol=1e-14))

    report = SymmetryReport(
        chiral=chiral_residual < tol,
        cp=cp_residual < tol and squared_ok,
        cp_squared_minus_one=squared_ok,
        chiral_residual=chiral_residual,
        cp_residual=cp_residual,
        samples=samples,
    )
    if p.m and not report.chiral:
        report.details.append("mass term breaks chiral symmetry")
    if p.a and not report.cp:
        report.details.append("deformation breaks CP symmetry")
    logger.debug(f"Symmetry report for a={p.a}, m={p.m}: chiral={report.chiral}, cp={report.cp}")
    return report


def bloch_to_couplings(d, a: float) -> CouplingQuad:
    dx, dy, dz, dw = (float(c) for c in d)
    return CouplingQuad(
        omega12=complex(dx + a * dw, dz + a * dy),
        omega23=complex(dw + a * dx, -(dy + a * dz)),
        omega34=complex(dx - a * dw, -dz + a * dy),
        omega41=complex(-dw + a * dx, -dy + a * dz),
    )


def couplings_to_bloch(quad: CouplingQuad, a: float, tol: float = 1e-9) -> np.ndarray:
    """
    Invert the coupling map from the (Ω12, Ω23) pair.

    Raises:
        SingularMapError: a = ±1, where the map loses rank.
        PreconditionError: Ω34 or Ω41 is inconsistent with the pair.
    """
    det = 1.0 - a * a
    if abs(det) < 1e-12:
        raise SingularMapError(
            f"coupling map is singular at a={a}",
            {"module": "gamma-model", "field": "a"},
        )
    re12, im12 = quad.omega12.real, quad.omega12.imag
    re23, im23 = quad.omega23.real, quad.omega23.imag
    d = np.array([
        (re12 - a * re23) / det,
        (-im23 - a * im12) / det,
        (im12 + a * im23) / det,
        (re23 - a * re12) / det,
    ])
    check = bloch_to_couplings(d, a)
    scale = max(1.0, max(abs(w) for w in quad.as_tuple()))
    mismatch = max(abs(check.omega34 - quad.omega34), abs(check.omega41 - quad.omega41))
    if mismatch > tol * scale:
        raise PreconditionError(
            f"couplings are not in the image of the Bloch map (mismatch {mismatch:.3e})",
            {"module": "gamma-model", "field": "omega34/omega41"},
        )
    return d


def diamond_matrix(quad: CouplingQuad) -> np.ndarray:
    """Effective single-excitation matrix in the exchanged order (Q2, Q1, Q3, Q4)"""
    w12, w23, w34, w41 = quad.as_tuple()
    return np.array([
        [0, np.conj(w12), w23, 0],
        [w12, 0, 0, np.conj(w41)],
        [np.conj(w23), 0, 0, w34],
        [0, w41, np.conj(w34), 0],
    ], dtype=complex)


def to_diamond_order(qubit_matrix: np.ndarray) -> np.ndarray:
    """Permute a matrix written in qubit order Q1..Q4 into the diamond order"""
    order = list(DIAMOND_ORDER)
    return qubit_matrix[np.ix_(order, order)]


def matrix_payload(matrix: np.ndarray) -> list:
    """Row-major [re, im] nesting used for golden files"""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix, dtype=complex)]
