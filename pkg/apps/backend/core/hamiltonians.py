"""
Lattice Hamiltonians Module

This module builds lattice Dirac discretizations in the superconducting
K-form

    H = m sum psi+ psi + sum_x,i [(-i/2a) psi+(x) K_i(x) psi+(x + e_i) + h.c.],

together with the number-conserving originals they come from and the
particle-hole transformations relating the two.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from apps.backend.core.config import GAP_TOL, UNITARITY_TOL
from apps.backend.core.errors import GeometryError, ValidationError
from apps.backend.core.gaussian import (
    Matrix,
    PairingState,
    QuadraticHamiltonian,
    bdg_matrix,
    ground_state_pairing,
    is_unitary,
)
from apps.backend.core.lattice import (
    LatticeGeometry,
    ModeLayout,
    SiteIndex,
    parity_table,
)
from apps.backend.monitoring.log import get_logger

log = get_logger(__name__)

SitePredicate = Callable[[SiteIndex], bool]


@dataclass(frozen=True)
class DiracMatrices:
    """Pauli, epsilon, J, alpha and beta matrices of the Dirac representation."""
    sigma: np.ndarray
    eps: np.ndarray
    J: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray


@lru_cache(maxsize=1)
def dirac_matrices() -> DiracMatrices:
    sigma = np.array(
        [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=np.complex128
    )
    eps = 1j * sigma[1]
    J = np.array([s @ eps for s in sigma])
    zero = np.zeros((2, 2), dtype=np.complex128)
    alpha = np.array([np.block([[zero, s], [s, zero]]) for s in sigma])
    beta = np.diag([1.0, 1.0, -1.0, -1.0]).astype(np.complex128)
    return DiracMatrices(sigma=sigma, eps=eps, J=J, alpha=alpha, beta=beta)


@dataclass(frozen=True, eq=False)
class KSpec:
    """Per-site, per-direction K matrices plus mass of a K-form Hamiltonian."""
    geom: LatticeGeometry
    n_s: int
    K: np.ndarray
    m: float
    name: str = "custom_K"

    def __post_init__(self) -> None:
        K = np.asarray(self.K, dtype=np.complex128)
        expected = (self.geom.num_sites, self.geom.dim, self.n_s, self.n_s)
        if K.shape != expected:
            raise ValidationError(f"K table has shape {K.shape}, expected {expected}")
        if not self.m > 0:
            raise ValidationError(f"Mass must be positive, got {self.m}")
        object.__setattr__(self, "K", K)

    @property
    def a(self) -> float:
        return self.geom.spacing

    def K_at(self, site: Sequence[int], axis: int) -> np.ndarray:
        return self.K[self.geom.site_index(site), axis - 1]


def _require_dim(geom: LatticeGeometry, dim: int, what: str) -> None:
    if geom.dim != dim:
        raise GeometryError(f"{what} needs d={dim}, got d={geom.dim}")


def staggered_d2_kspec(geom: LatticeGeometry, m: float) -> KSpec:
    """K_1 = 1, K_2 = i on every site."""
    _require_dim(geom, 2, "staggered_d2")
    K = np.empty((geom.num_sites, 2, 1, 1), dtype=np.complex128)
    K[:, 0] = 1.0
    K[:, 1] = 1j
    return KSpec(geom, 1, K, m, name="staggered_d2")


def staggered_d3_kspec(geom: LatticeGeometry, m: float) -> KSpec:
    """K_1 = 1, K_2 = i (-1)^x3, K_3 = (-1)^(x1 + x2)."""
    _require_dim(geom, 3, "staggered_d3")
    x = geom.coordinates
    K = np.empty((geom.num_sites, 3, 1, 1), dtype=np.complex128)
    K[:, 0, 0, 0] = 1.0
    K[:, 1, 0, 0] = 1j * (-1.0) ** x[:, 2]
    K[:, 2, 0, 0] = (-1.0) ** (x[:, 0] + x[:, 1])
    return KSpec(geom, 1, K, m, name="staggered_d3")


def naive_kspec(geom: LatticeGeometry, m: float, branch: Literal["upper", "lower"] = "upper") -> KSpec:
    """Two-component decoupled naive fermions, K_i = J_i (upper) or conj(J_i) (lower)."""
    _require_dim(geom, 3, "naive fermions")
    if branch not in ("upper", "lower"):
        raise ValidationError(f"branch must be 'upper' or 'lower', got {branch!r}")
    J = dirac_matrices().J
    K = J if branch == "upper" else J.conj()
    table = np.broadcast_to(K, (geom.num_sites, 3, 2, 2)).copy()
    return KSpec(geom, 2, table, m, name=f"naive_{branch}")


def kspec_from_arrays(geom: LatticeGeometry, K: np.ndarray, m: float, name: str = "custom_K") -> KSpec:
    """
    Build a KSpec from site-independent blocks [dim, n_s, n_s] or a full table.
    """
    K = np.asarray(K, dtype=np.complex128)
    if K.ndim == 3:
        K = np.broadcast_to(K, (geom.num_sites,) + K.shape).copy()
    if K.ndim != 4:
        raise ValidationError(f"K must have 3 or 4 axes, got shape {K.shape}")
    return KSpec(geom, K.shape[-1], K, m, name=name)


def kform_hamiltonian(geom: LatticeGeometry, n_s: int, K: np.ndarray, m: float) -> QuadraticHamiltonian:
    """K-form BdG blocks for any real mass, including negative ones."""
    layout = ModeLayout(geom, n_s)
    M = geom.num_sites * n_s
    blocks = layout.physical_index
    A = np.zeros((M, M), dtype=np.complex128)
    prefactor = -1j / (2.0 * geom.spacing)
    for s in range(geom.num_sites):
        for i in range(geom.dim):
            t = geom.neighbor_table[s, i]
            A[np.ix_(blocks[s], blocks[t])] += prefactor * K[s, i]
    return QuadraticHamiltonian(
        hopping=m * np.eye(M, dtype=np.complex128),
        pairing=A - A.T,
        modes=layout.modes,
    )


def build_quadratic(spec: KSpec) -> QuadraticHamiltonian:
    """Assemble the BdG blocks of a K-form Hamiltonian in canonical mode order."""
    H = kform_hamiltonian(spec.geom, spec.n_s, spec.K, spec.m)
    log.debug("Built K-form Hamiltonian", model=spec.name, modes=H.num_modes)
    return H


def susskind_d2_hamiltonian(geom: LatticeGeometry, m: float) -> QuadraticHamiltonian:
    """
    Number-conserving staggered fermions in d=2,

    m sum (-1)^(x1+x2) n(x) + sum [(i/2a) psi+(x) psi(x+e1) - (1/2a) (-1)^(x1+x2) psi+(x) psi(x+e2) + h.c.].
    """
    _require_dim(geom, 2, "Susskind fermions")
    parity = parity_table(geom).astype(np.float64)
    M = geom.num_sites
    H1 = np.diag(m * parity).astype(np.complex128)
    a = geom.spacing
    for s in range(M):
        e1, e2 = geom.neighbor_table[s]
        H1[s, e1] += 1j / (2 * a)
        H1[e1, s] += -1j / (2 * a)
        H1[s, e2] += -parity[s] / (2 * a)
        H1[e2, s] += -parity[s] / (2 * a)
    return QuadraticHamiltonian(H1, modes=ModeLayout(geom).modes)


def naive_dirac_hamiltonian(geom: LatticeGeometry, m: float) -> QuadraticHamiltonian:
    """Four-component naive fermions -(i/2a) sum Psi+ alpha_i (Psi(x+e_i) - Psi(x-e_i)) + m sum Psi+ beta Psi."""
    _require_dim(geom, 3, "naive fermions")
    dirac = dirac_matrices()
    layout = ModeLayout(geom, 4)
    blocks = layout.physical_index
    M = layout.num_modes
    H1 = np.zeros((M, M), dtype=np.complex128)
    a = geom.spacing
    for s in range(geom.num_sites):
        H1[np.ix_(blocks[s], blocks[s])] += m * dirac.beta
        for i in range(3):
            t = geom.neighbor_table[s, i]
            H1[np.ix_(blocks[s], blocks[t])] += -1j / (2 * a) * dirac.alpha[i]
            H1[np.ix_(blocks[t], blocks[s])] += 1j / (2 * a) * dirac.alpha[i]
    return QuadraticHamiltonian(H1, modes=layout.modes)


def odd_sites(site: SiteIndex) -> bool:
    return sum(site) % 2 == 1


def all_sites(site: SiteIndex) -> bool:
    return True


def susskind_particle_hole_data() -> Tuple[SitePredicate, np.ndarray]:
    """Odd sublattice with psi+ -> -psi."""
    return odd_sites, np.array([[-1.0]], dtype=np.complex128)


def naive_particle_hole_data() -> Tuple[SitePredicate, np.ndarray]:
    """Odd sublattice with the epsilon-block spin matrix [[0, eps], [eps, 0]]."""
    eps = dirac_matrices().eps
    zero = np.zeros((2, 2), dtype=np.complex128)
    return odd_sites, np.block([[zero, eps], [eps, zero]])


def particle_hole_transform(
    H: QuadraticHamiltonian,
    geom: LatticeGeometry,
    site_predicate: SitePredicate,
    spin_matrix: np.ndarray,
) -> QuadraticHamiltonian:
    """
    Exchange creation and annihilation operators on the selected sites.

    On a selected site psi+_a(x) -> sum_b S_ab psi_b(x). The additive
    constant from reordering is carried in ``constant``.

    Args:
        H: Hamiltonian over the physical modes of ``geom``
        geom: Lattice of the Hamiltonian
        site_predicate: Selects the transformed sites
        spin_matrix: Unitary S acting on the spin components

    Raises:
        ValidationError: If S is not unitary or does not fit the modes
    """
    S = np.asarray(spin_matrix, dtype=np.complex128)
    n_s = S.shape[0]
    if S.shape != (n_s, n_s) or not is_unitary(S, UNITARITY_TOL):
        raise ValidationError("Particle-hole spin matrix must be unitary")
    if H.num_modes != geom.num_sites * n_s:
        raise ValidationError(
            f"Hamiltonian has {H.num_modes} modes, lattice with N_s={n_s} has {geom.num_sites * n_s}"
        )
    M = H.num_modes
    blocks = ModeLayout(geom, n_s).physical_index
    X = np.eye(M, dtype=np.complex128)
    Y = np.zeros((M, M), dtype=np.complex128)
    for s, site in enumerate(geom.sites()):
        if site_predicate(site):
            idx = blocks[s]
            X[np.ix_(idx, idx)] = 0.0
            Y[np.ix_(idx, idx)] = S.conj()
    W = np.block([[X, Y], [Y.conj(), X.conj()]])
    transformed = W.conj().T @ bdg_matrix(H) @ W
    H1 = transformed[:M, :M]
    H2 = transformed[:M, M:]
    constant = H.constant + 0.5 * float(np.real(np.trace(H.hopping) - np.trace(H1)))
    return QuadraticHamiltonian(
        hopping=0.5 * (H1 + H1.conj().T),
        pairing=0.5 * (H2 - H2.T),
        modes=H.modes,
        constant=constant,
    )


def restrict_hamiltonian(H: QuadraticHamiltonian, positions: Sequence[int]) -> QuadraticHamiltonian:
    """Blocks of H on a subset of modes (couplings to the rest are dropped)."""
    idx = np.asarray(positions, dtype=np.int64)
    modes = None if H.modes is None else tuple(H.modes[p] for p in idx)
    return QuadraticHamiltonian(
        H.hopping[np.ix_(idx, idx)], H.pairing[np.ix_(idx, idx)], modes
    )


def rotate_hamiltonian(H: QuadraticHamiltonian, U: Matrix) -> QuadraticHamiltonian:
    """Mode-unitary action H1 -> U H1 U^+, H2 -> U H2 U^T."""
    if U.shape != (H.num_modes, H.num_modes) or not is_unitary(U):
        raise ValidationError("Hamiltonian transform must be a unitary of matching size")
    Ud = U.toarray() if sp.issparse(U) else np.asarray(U)
    return QuadraticHamiltonian(
        Ud @ H.hopping @ Ud.conj().T,
        Ud @ H.pairing @ Ud.T,
        H.modes,
        H.constant,
    )


def translation_unitary(geom: LatticeGeometry, n_s: int, axis: int, step: int = 1) -> sp.csr_matrix:
    """Permutation sending mode (x, a) to (x + step e_axis, a)."""
    blocks = ModeLayout(geom, n_s).physical_index
    rows, cols = [], []
    for s, site in enumerate(geom.sites()):
        t = geom.site_index(geom.shift(site, axis, step))
        rows.extend(blocks[t])
        cols.extend(blocks[s])
    M = geom.num_sites * n_s
    return sp.csr_matrix((np.ones(M), (rows, cols)), shape=(M, M), dtype=np.complex128)


def translate_hamiltonian(H: QuadraticHamiltonian, geom: LatticeGeometry, n_s: int,
                          axis: int, step: int = 1) -> QuadraticHamiltonian:
    return rotate_hamiltonian(H, translation_unitary(geom, n_s, axis, step))


def hamiltonian_residual(left: QuadraticHamiltonian, right: QuadraticHamiltonian) -> float:
    """max entrywise difference of both BdG blocks; constants are ignored."""
    if left.num_modes != right.num_modes:
        raise ValidationError("Hamiltonians act on different mode counts")
    return float(max(
        np.max(np.abs(left.hopping - right.hopping), initial=0.0),
        np.max(np.abs(left.pairing - right.pairing), initial=0.0),
    ))


def exact_ground(spec: KSpec, gap_tol: float = GAP_TOL) -> PairingState:
    """Ground state of build_quadratic(spec) in pairing form."""
    H = build_quadratic(spec)
    state = ground_state_pairing(H, gap_tol=gap_tol)
    log.info("Solved exact ground state", model=spec.name, modes=H.num_modes, mass=spec.m)
    return state


def build_model(
    model: str,
    geom: LatticeGeometry,
    m: float,
    custom_K: Optional[np.ndarray] = None,
) -> KSpec:
    """KSpec for a named model."""
    if model == "staggered_d2":
        return staggered_d2_kspec(geom, m)
    if model == "staggered_d3":
        return staggered_d3_kspec(geom, m)
    if model == "naive_upper":
        return naive_kspec(geom, m, "upper")
    if model == "naive_lower":
        return naive_kspec(geom, m, "lower")
    if model == "custom_K":
        if custom_K is None:
            raise ValidationError("custom_K model needs K matrices")
        return kspec_from_arrays(geom, custom_K, m)
    raise ValidationError(f"Unknown model {model!r}")
