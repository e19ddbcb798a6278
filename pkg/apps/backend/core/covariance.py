"""
Covariance Matrix Module

This module converts pure Gaussian states between the pairing form and the
real Majorana covariance matrix Gamma_kl = (i/2) <[m_k, m_l]>, with
m_2p = a_p + a+_p and m_2p+1 = i (a+_p - a_p).
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Optional, Tuple

import numpy as np

from apps.backend.core.config import BOGOLIUBOV_RCOND
from apps.backend.core.errors import ValidationError
from apps.backend.core.gaussian import (
    PairingState,
    QuadraticHamiltonian,
    bdg_matrix,
    correlations,
    pairing_from_correlations,
)
from apps.backend.monitoring.log import get_logger

log = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Real antisymmetric 2M x 2M Majorana covariance matrix."""
    gamma: np.ndarray
    modes: Optional[Tuple[Any, ...]] = None

    def __post_init__(self) -> None:
        gamma = np.asarray(self.gamma, dtype=np.float64)
        if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1] or gamma.shape[0] % 2:
            raise ValidationError(f"Covariance matrix must be square of even size, got {gamma.shape}")
        if gamma.size and np.max(np.abs(gamma + gamma.T)) > 1e-10:
            raise ValidationError("Covariance matrix is not antisymmetric")
        object.__setattr__(self, "gamma", gamma)

    @property
    def num_modes(self) -> int:
        return self.gamma.shape[0] // 2

    def purity_deviation(self) -> float:
        """max |Gamma^T Gamma - 1|; zero for pure states."""
        n = self.gamma.shape[0]
        if n == 0:
            return 0.0
        return float(np.max(np.abs(self.gamma.T @ self.gamma - np.eye(n))))

    def max_singular_value(self) -> float:
        if self.gamma.size == 0:
            return 0.0
        return float(np.linalg.norm(self.gamma, 2))


@lru_cache(maxsize=32)
def _majorana_map(M: int) -> np.ndarray:
    """A with (a, a+) = A m."""
    A = np.zeros((2 * M, 2 * M), dtype=np.complex128)
    p = np.arange(M)
    A[p, 2 * p] = 0.5
    A[p, 2 * p + 1] = 0.5j
    A[M + p, 2 * p] = 0.5
    A[M + p, 2 * p + 1] = -0.5j
    A.setflags(write=False)
    return A


def _nambu_correlations(G: np.ndarray, F: np.ndarray) -> np.ndarray:
    """K_ij = <alpha_i alpha_j> for alpha = (a, a+)."""
    M = G.shape[0]
    return np.block([[F, np.eye(M) - G.T], [G, F.conj().T]])


def pairing_to_covariance(state: PairingState) -> CovarianceMatrix:
    """Covariance matrix of the normalized state."""
    M = state.num_modes
    G, F = correlations(state)
    K = _nambu_correlations(G, F)
    omega = np.linalg.inv(_majorana_map(M))
    gamma = 0.5j * omega @ (K - K.T) @ omega.T
    imag = float(np.max(np.abs(gamma.imag))) if gamma.size else 0.0
    if imag > 1e-9:
        log.warning("Covariance matrix has an imaginary residue", residue=imag)
    return CovarianceMatrix(np.real(gamma), state.modes)


def covariance_to_pairing(cov: CovarianceMatrix, rcond: float = BOGOLIUBOV_RCOND) -> PairingState:
    """
    Pairing form of a pure covariance matrix.

    Raises:
        RepresentationError: If a mode is fully occupied
    """
    M = cov.num_modes
    A = _majorana_map(M)
    K = A @ (np.eye(2 * M) - 1j * cov.gamma) @ A.T
    F = K[:M, :M]
    G = K[M:, :M]
    return pairing_from_correlations(G, F, cov.modes, rcond=rcond)


def covariance_roundtrip(state: PairingState) -> Tuple[CovarianceMatrix, PairingState, float]:
    """Return (Gamma, recovered state, max |T - T_recovered|)."""
    cov = pairing_to_covariance(state)
    recovered = covariance_to_pairing(cov)
    error = float(np.max(np.abs(state.dense() - recovered.dense()))) if state.num_modes else 0.0
    return cov, recovered, error


def majorana_hamiltonian(H: QuadraticHamiltonian) -> np.ndarray:
    """Real antisymmetric h with H = (i/4) sum h_kl m_k m_l + const."""
    A = _majorana_map(H.num_modes)
    return 2.0 * np.imag(A.conj().T @ bdg_matrix(H) @ A)


def covariance_variance(H: QuadraticHamiltonian, state: PairingState) -> float:
    """<H^2> - <H>^2 = -(1/8) [tr h^2 + tr(h Gamma h Gamma)]."""
    h = majorana_hamiltonian(H)
    gamma = pairing_to_covariance(state).gamma
    hg = h @ gamma
    value = -0.125 * (np.trace(h @ h) + np.trace(hg @ hg))
    return float(max(np.real(value), 0.0))
