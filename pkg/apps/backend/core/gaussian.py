"""
Gaussian State Module

This module implements pure fermionic Gaussian states in pairing (BCS) form,

    |psi> = scalar * exp(1/2 sum_pq T_pq a+_p a+_q) |vac>,

together with quadratic Hamiltonians, their ground states, overlaps and the
Gaussian projection that contracts virtual modes out of a PEPS.
"""

from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from apps.backend.core.config import (
    ANTISYMMETRY_TOL,
    BOGOLIUBOV_RCOND,
    DENSE_SOLVE_LIMIT,
    GAP_TOL,
    HERMITICITY_TOL,
    UNITARITY_TOL,
)
from apps.backend.core.errors import (
    ContractionError,
    GapError,
    RepresentationError,
    ValidationError,
)
from apps.backend.core.pfaffian import check_antisymmetric, pfaffian
from apps.backend.monitoring.log import get_logger

log = get_logger(__name__)

Matrix = Union[np.ndarray, sp.spmatrix]


def _max_abs(A: Matrix) -> float:
    if sp.issparse(A):
        return float(abs(A).max()) if A.nnz else 0.0
    return float(np.max(np.abs(A))) if A.size else 0.0


def _antisymmetrize(A: Matrix) -> Matrix:
    if sp.issparse(A):
        return ((A - A.T) * 0.5).tocsr()
    return 0.5 * (A - A.T)


def _check_modes(modes: Optional[Sequence[Any]], size: int, name: str) -> Optional[Tuple[Any, ...]]:
    if modes is None:
        return None
    modes = tuple(modes)
    if len(modes) != size:
        raise ValidationError(f"{name} has {size} rows but {len(modes)} mode labels")
    return modes


@dataclass(frozen=True, eq=False)
class PairingState:
    """
    Unnormalized BCS state over an ordered mode set.

    ``T`` may be dense or a scipy sparse matrix. ``scalar`` is the explicit
    prefactor; ``None`` means the prefactor was not tracked.
    """
    T: Matrix
    modes: Optional[Tuple[Any, ...]] = None
    scalar: Optional[complex] = 1.0

    def __post_init__(self) -> None:
        T = self.T
        if sp.issparse(T):
            T = sp.csr_matrix(T, dtype=np.complex128)
            if T.shape[0] != T.shape[1]:
                raise ValidationError(f"Pairing matrix must be square, got {T.shape}")
            scale = max(1.0, _max_abs(T))
            deviation = _max_abs(T + T.T)
            if deviation > ANTISYMMETRY_TOL * scale:
                raise ValidationError(
                    f"Pairing matrix is not antisymmetric (max |T + T^T| = {deviation:.3e})",
                    details={"deviation": deviation},
                )
        else:
            T = np.array(T, dtype=np.complex128)
            if T.size == 0:
                T = T.reshape(0, 0)
            check_antisymmetric(T, name="Pairing matrix")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "modes", _check_modes(self.modes, T.shape[0], "Pairing matrix"))

    @classmethod
    def vacuum(cls, num_modes: int, modes: Optional[Sequence[Any]] = None) -> "PairingState":
        return cls(np.zeros((num_modes, num_modes), dtype=np.complex128), modes)

    @property
    def num_modes(self) -> int:
        return self.T.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.T)

    def dense(self) -> np.ndarray:
        return self.T.toarray() if self.is_sparse else self.T

    def with_scalar(self, scalar: Optional[complex]) -> "PairingState":
        return replace(self, scalar=scalar)


@dataclass(frozen=True, eq=False)
class QuadraticHamiltonian:
    """
    H = sum H1_pq a+_p a_q + 1/2 sum (H2_pq a+_p a+_q + h.c.) + constant.
    """
    hopping: np.ndarray
    pairing: Optional[np.ndarray] = None
    modes: Optional[Tuple[Any, ...]] = None
    constant: float = 0.0

    def __post_init__(self) -> None:
        H1 = np.array(self.hopping.toarray() if sp.issparse(self.hopping) else self.hopping,
                      dtype=np.complex128)
        if H1.ndim != 2 or H1.shape[0] != H1.shape[1]:
            raise ValidationError(f"Hopping block must be square, got {H1.shape}")
        M = H1.shape[0]
        if self.pairing is None:
            H2 = np.zeros((M, M), dtype=np.complex128)
        else:
            H2 = np.array(self.pairing.toarray() if sp.issparse(self.pairing) else self.pairing,
                          dtype=np.complex128)
        if H2.shape != (M, M):
            raise ValidationError(f"Pairing block shape {H2.shape} does not match hopping {H1.shape}")
        scale = max(1.0, _max_abs(H1))
        if M and _max_abs(H1 - H1.conj().T) > HERMITICITY_TOL * scale:
            raise ValidationError("Hopping block is not hermitian")
        check_antisymmetric(H2, name="Pairing block")
        object.__setattr__(self, "hopping", H1)
        object.__setattr__(self, "pairing", H2)
        object.__setattr__(self, "modes", _check_modes(self.modes, M, "Hamiltonian"))
        object.__setattr__(self, "constant", float(np.real(self.constant)))

    @property
    def num_modes(self) -> int:
        return self.hopping.shape[0]

    @property
    def conserves_number(self) -> bool:
        return _max_abs(self.pairing) == 0.0

    def norm(self) -> float:
        return float(np.linalg.norm(self.hopping, 2) + np.linalg.norm(self.pairing, 2))


def bdg_matrix(H: QuadraticHamiltonian) -> np.ndarray:
    """Hermitian Nambu matrix [[H1, H2], [H2^+, -H1^T]] in the basis (a, a+)."""
    H1, H2 = H.hopping, H.pairing
    return np.block([[H1, H2], [H2.conj().T, -H1.T]])


def _bdg_eig(H: QuadraticHamiltonian) -> Tuple[np.ndarray, np.ndarray]:
    M = H.num_modes
    E, W = la.eigh(bdg_matrix(H))
    # eigh sorts ascending; the upper half carries the positive branch
    return E[M:], W[:, M:]


def bdg_spectrum(H: QuadraticHamiltonian) -> np.ndarray:
    """Single-particle excitation energies (upper half of the BdG spectrum)."""
    return _bdg_eig(H)[0]


def ground_energy(H: QuadraticHamiltonian) -> float:
    E = bdg_spectrum(H)
    return float(0.5 * (np.real(np.trace(H.hopping)) - E.sum()) + H.constant)


def ground_state_pairing(
    H: QuadraticHamiltonian,
    gap_tol: float = GAP_TOL,
    rcond: float = BOGOLIUBOV_RCOND,
) -> PairingState:
    """
    Ground state of a gapped quadratic Hamiltonian in BCS form.

    Args:
        H: Quadratic Hamiltonian
        gap_tol: Smallest admissible excitation energy
        rcond: Smallest admissible relative singular value of the Bogoliubov U block

    Returns:
        PairingState: Ground state with T = -(U^+)^-1 V^+

    Raises:
        GapError: If the smallest excitation energy is below ``gap_tol``
        RepresentationError: If the ground state has no pairing form
    """
    M = H.num_modes
    if M == 0:
        return PairingState.vacuum(0, H.modes)
    E, W = _bdg_eig(H)
    gap = float(np.min(np.abs(E)))
    if gap <= gap_tol:
        raise GapError(
            f"Hamiltonian is gapless (smallest excitation {gap:.3e} <= {gap_tol:.1e})",
            details={"gap": gap, "gap_tol": gap_tol},
        )
    U, V = W[:M], W[M:]
    sv = la.svdvals(U)
    if sv[-1] <= rcond * max(1.0, sv[0]):
        raise RepresentationError(
            "Ground state has no pairing form relative to the vacuum (singular U block)",
            details={"smallest_singular_value": float(sv[-1]), "occupied_modes": int(np.sum(sv <= rcond))},
        )
    T = -la.solve(U.conj().T, V.conj().T)
    log.debug("Solved Bogoliubov ground state", modes=M, gap=gap, cond=float(sv[0] / sv[-1]))
    return PairingState(_antisymmetrize(T), H.modes)


def _require_same_modes(left: PairingState, right: PairingState) -> None:
    if left.num_modes != right.num_modes:
        raise ValidationError(
            f"Mode counts differ ({left.num_modes} vs {right.num_modes})"
        )
    if left.modes is not None and right.modes is not None and left.modes != right.modes:
        raise ValidationError("States are defined over different mode sets")


def _scalars(left: PairingState, right: PairingState) -> complex:
    lhs = 1.0 if left.scalar is None else left.scalar
    rhs = 1.0 if right.scalar is None else right.scalar
    return complex(np.conj(lhs) * rhs)


def _overlap_matrix(T_left: np.ndarray, T_right: np.ndarray) -> np.ndarray:
    M = T_left.shape[0]
    eye = np.eye(M)
    return np.block([[T_right, -eye], [eye, -T_left.conj()]])


def _overlap_sign(M: int) -> int:
    return -1 if (M * (M + 1) // 2) % 2 else 1


def bcs_overlap(left: PairingState, right: PairingState) -> complex:
    """
    <left|right> including the Pfaffian sign and both scalar prefactors.

    The Pfaffian of [[T_r, -1], [1, -conj(T_l)]] is a polynomial in the
    entries, so the sign is fixed without any branch tracking.
    """
    _require_same_modes(left, right)
    M = left.num_modes
    if M == 0:
        return _scalars(left, right)
    value = _overlap_sign(M) * pfaffian(_overlap_matrix(left.dense(), right.dense()), check=False)
    return complex(value) * _scalars(left, right)


def _slogdet_identity_plus(A: np.ndarray) -> float:
    sign, logabs = np.linalg.slogdet(np.eye(A.shape[0]) + A)
    if sign == 0:
        return -np.inf
    return float(logabs)


def log_norm_squared(state: PairingState) -> float:
    """log <psi|psi> ignoring the scalar prefactor."""
    T = state.dense()
    return 0.5 * _slogdet_identity_plus(T.conj().T @ T)


def normalization(state: PairingState) -> float:
    """<psi|psi> = |scalar|^2 sqrt(det(1 + T^+ T))."""
    scalar = 1.0 if state.scalar is None else abs(state.scalar) ** 2
    return float(scalar * np.exp(log_norm_squared(state)))


def fidelity(left: PairingState, right: PairingState) -> float:
    """|<l|r>|^2 / (<l|l><r|r>) computed through log-determinants."""
    _require_same_modes(left, right)
    if left.num_modes == 0:
        return 1.0
    Tl, Tr = left.dense(), right.dense()
    log_cross = _slogdet_identity_plus(Tl.conj().T @ Tr)
    if not np.isfinite(log_cross):
        return 0.0
    value = np.exp(log_cross - log_norm_squared(left) - log_norm_squared(right))
    return float(min(value, 1.0 + 1e-12))


def correlations(state: PairingState) -> Tuple[np.ndarray, np.ndarray]:
    """
    Two-point functions of the normalized state.

    Returns:
        (G, F) with G_pq = <a+_p a_q> and F_pq = <a_p a_q>
    """
    T = state.dense()
    M = T.shape[0]
    inv = la.solve(np.eye(M) + T @ T.conj().T, np.eye(M), assume_a="her")
    F = -inv @ T
    G = T.conj().T @ inv @ T
    return G, F


def pairing_from_correlations(
    G: np.ndarray,
    F: np.ndarray,
    modes: Optional[Sequence[Any]] = None,
    rcond: float = BOGOLIUBOV_RCOND,
) -> PairingState:
    """
    Recover T = -F (1 - G)^-1 from the two-point functions.

    Raises:
        RepresentationError: If 1 - G is singular (a mode is fully occupied)
    """
    G = np.asarray(G, dtype=np.complex128)
    F = np.asarray(F, dtype=np.complex128)
    M = G.shape[0]
    if M == 0:
        return PairingState.vacuum(0, modes)
    complement = np.eye(M) - G
    sv = la.svdvals(complement)
    if sv[-1] <= rcond:
        raise RepresentationError(
            "Correlations describe an occupied mode; no pairing form exists",
            details={"smallest_singular_value": float(sv[-1])},
        )
    T = -la.solve(complement.T, F.T).T
    return PairingState(_antisymmetrize(T), modes)


def energy_expectation(H: QuadraticHamiltonian, state: PairingState) -> float:
    """<H> in the normalized state."""
    _require_hamiltonian_modes(H, state)
    G, F = correlations(state)
    energy = np.sum(H.hopping * G) + np.sum(H.pairing * F.T.conj())
    return float(np.real(energy) + H.constant)


def energy_variance(H: QuadraticHamiltonian, state: PairingState) -> float:
    """<H^2> - <H>^2 in the normalized state."""
    from apps.backend.core.covariance import covariance_variance

    _require_hamiltonian_modes(H, state)
    return covariance_variance(H, state)


def _require_hamiltonian_modes(H: QuadraticHamiltonian, state: PairingState) -> None:
    if H.num_modes != state.num_modes:
        raise ValidationError(
            f"Hamiltonian acts on {H.num_modes} modes, state has {state.num_modes}"
        )


def is_unitary(U: Matrix, tol: float = UNITARITY_TOL) -> bool:
    n = U.shape[0]
    if U.shape != (n, n):
        return False
    if sp.issparse(U):
        deviation = (U.conj().T @ U - sp.identity(n, format="csr")).tocsr()
        return _max_abs(deviation) <= tol
    return _max_abs(U.conj().T @ U - np.eye(n)) <= tol


def _monomial_map(U: Matrix) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Return (row, phase) per column if U has exactly one entry per column."""
    Uc = sp.csc_matrix(U)
    Uc.eliminate_zeros()
    if np.any(np.diff(Uc.indptr) != 1):
        return None
    return Uc.indices.copy(), Uc.data.copy()


def transform_modes(
    state: PairingState,
    U: Matrix,
    signed_permutation_ok: bool = True,
    tol: float = UNITARITY_TOL,
) -> PairingState:
    """
    Apply the mode unitary a+_p -> sum_q U_qp a+_q, so that T' = U T U^T.

    Args:
        state: Pairing state
        U: Unitary acting on the mode space (dense or sparse)
        signed_permutation_ok: Use the index-permutation path when U is a phased permutation
        tol: Unitarity tolerance

    Raises:
        ValidationError: If U is not unitary or has the wrong size
    """
    M = state.num_modes
    if U.shape != (M, M):
        raise ValidationError(f"Mode unitary has shape {U.shape}, state has {M} modes")
    if not is_unitary(U, tol):
        raise ValidationError("Mode transformation is not unitary")

    monomial = _monomial_map(U) if signed_permutation_ok else None
    if monomial is not None:
        rows, phases = monomial
        T = sp.coo_matrix(state.T) if state.is_sparse else state.T
        if state.is_sparse:
            T_new = sp.coo_matrix(
                (T.data * phases[T.row] * phases[T.col], (rows[T.row], rows[T.col])),
                shape=(M, M),
            ).tocsr()
        else:
            T_new = np.zeros_like(T)
            T_new[np.ix_(rows, rows)] = phases[:, None] * T * phases[None, :]
        return replace(state, T=T_new)

    if state.is_sparse:
        Us = sp.csr_matrix(U)
        T_new = (Us @ sp.csr_matrix(state.T) @ Us.T).tocsr()
    else:
        # output keeps the storage format of the input state
        Ud = U.toarray() if sp.issparse(U) else np.asarray(U)
        T_new = Ud @ state.T @ Ud.T
    return replace(state, T=_antisymmetrize(T_new))


def _positions(virtual_modes: Sequence[Any], joint: PairingState) -> np.ndarray:
    if joint.modes is not None and len(virtual_modes) and not isinstance(
        virtual_modes[0], (int, np.integer)
    ):
        lookup = {mode: k for k, mode in enumerate(joint.modes)}
        try:
            return np.array([lookup[mode] for mode in virtual_modes], dtype=np.int64)
        except KeyError as e:
            raise ValidationError(f"Virtual mode {e.args[0]} is not part of the joint state") from e
    positions = np.asarray(virtual_modes, dtype=np.int64)
    if positions.size and (positions.min() < 0 or positions.max() >= joint.num_modes):
        raise ValidationError("Virtual mode positions out of range")
    if len(np.unique(positions)) != len(positions):
        raise ValidationError("Virtual mode positions must be distinct")
    return positions


def _singular_diagnostics(system: Matrix) -> Dict[str, Any]:
    size = system.shape[0]
    details: Dict[str, Any] = {"size": int(size)}
    if size <= DENSE_SOLVE_LIMIT:
        dense = system.toarray() if sp.issparse(system) else system
        _, s, vh = la.svd(dense)
        null = vh[s <= s[0] * 1e-12] if s[0] > 0 else vh
        details["smallest_singular_values"] = s[-min(4, size):].tolist()
        details["null_dimension"] = int(len(null))
        if len(null):
            details["null_support"] = np.flatnonzero(np.abs(null[0]) > 1e-8).tolist()
    return details


def _solve(system: Matrix, rhs: np.ndarray, what: str) -> np.ndarray:
    size = system.shape[0]
    try:
        if size <= DENSE_SOLVE_LIMIT:
            dense = system.toarray() if sp.issparse(system) else system
            lu, piv = la.lu_factor(dense, check_finite=True)
            pivots = np.abs(np.diag(lu))
            if pivots.min() <= 1e-14 * max(1.0, pivots.max()):
                raise ContractionError(
                    f"Bond projection annihilates the state ({what} is singular)",
                    details=_singular_diagnostics(system),
                )
            return la.lu_solve((lu, piv), rhs)
        lu = spla.splu(sp.csc_matrix(system))
        return lu.solve(rhs)
    except (RuntimeError, la.LinAlgError) as e:
        raise ContractionError(
            f"Bond projection annihilates the state ({what} is singular)",
            details=_singular_diagnostics(system),
        ) from e


def _dense_block(A: Matrix, rows: np.ndarray, cols: np.ndarray) -> Matrix:
    if sp.issparse(A):
        return A[rows][:, cols]
    return A[np.ix_(rows, cols)]


def project_bonds(
    joint: PairingState,
    bond: PairingState,
    virtual_modes: Sequence[Any],
    compute_scalar: bool = False,
    eliminate: Optional[Sequence[int]] = None,
) -> PairingState:
    """
    Contract ``<bond|_v`` against ``joint``, leaving a state on the remaining modes.

    With X = -conj(T_bond) the result is

        T' = T_pp + T_pv (1 + X T_vv)^-1 X T_pv^T

    and the scalar is the overlap of the bond state with the virtual part of
    the joint state. ``eliminate`` lists indices (into ``virtual_modes``) of
    a block with no joint pairing among itself and no bond pairing to the
    rest; it is solved for explicitly so the remaining system is smaller.

    Args:
        joint: State over physical and virtual modes
        bond: State over exactly the virtual modes, in the order given
        virtual_modes: Positions (or labels) of the virtual modes in ``joint``
        compute_scalar: Evaluate the Pfaffian prefactor (dense)
        eliminate: Optional virtual sub-block to eliminate first

    Returns:
        PairingState: State over the complementary modes

    Raises:
        ContractionError: If the virtual system is singular
        ValidationError: If the bond does not match the virtual modes
    """
    positions = _positions(virtual_modes, joint)
    n_v = len(positions)
    if n_v == 0:
        return joint
    if bond.num_modes != n_v:
        raise ValidationError(f"Bond acts on {bond.num_modes} modes, expected {n_v}")
    if joint.modes is not None and bond.modes is not None:
        if tuple(joint.modes[p] for p in positions) != bond.modes:
            raise ValidationError("Bond modes do not match the virtual modes of the joint state")

    mask = np.ones(joint.num_modes, dtype=bool)
    mask[positions] = False
    physical = np.flatnonzero(mask)

    sparse = joint.is_sparse or bond.is_sparse
    T = sp.csr_matrix(joint.T) if sparse else joint.T
    X = -(sp.csr_matrix(bond.T) if sparse else bond.T).conj()

    T_pp = _dense_block(T, physical, physical)
    T_pv = _dense_block(T, physical, positions)
    T_vv = _dense_block(T, positions, positions)

    if eliminate is None:
        rhs = X @ (T_pv.T.toarray() if sp.issparse(T_pv) else T_pv.T)
        rhs = np.asarray(rhs)
        system = (sp.identity(n_v, format="csc") + X @ T_vv) if sparse else np.eye(n_v) + X @ T_vv
        solution = _solve(system, rhs, "virtual block")
        correction = T_pv @ solution
    else:
        correction = _eliminated_correction(T_pv, T_vv, X, np.asarray(eliminate, dtype=np.int64), n_v)

    T_pp = T_pp.toarray() if sp.issparse(T_pp) else T_pp
    T_new = _antisymmetrize(np.asarray(T_pp + correction))

    scalar: Optional[complex] = None
    if compute_scalar:
        overlap = _overlap_sign(n_v) * pfaffian(
            _overlap_matrix(bond.dense(), T_vv.toarray() if sp.issparse(T_vv) else T_vv),
            check=False,
        )
        if joint.scalar is not None and bond.scalar is not None:
            scalar = complex(overlap) * complex(joint.scalar) * complex(np.conj(bond.scalar))
        else:
            scalar = complex(overlap)
    modes = None if joint.modes is None else tuple(joint.modes[p] for p in physical)
    log.debug("Projected bonds", virtual=n_v, physical=len(physical), sparse=sparse)
    return PairingState(T_new, modes, scalar)


def _eliminated_correction(
    T_pv: Matrix,
    T_vv: Matrix,
    X: Matrix,
    eliminate: np.ndarray,
    n_v: int,
) -> np.ndarray:
    """T_pv (1 + X T_vv)^-1 X T_pv^T with the ``eliminate`` block solved first."""
    second = np.zeros(n_v, dtype=bool)
    second[eliminate] = True
    i1, i2 = np.flatnonzero(~second), np.flatnonzero(second)

    T_vv = sp.csr_matrix(T_vv)
    X = sp.csr_matrix(X)
    if _max_abs(T_vv[i2][:, i2]) != 0.0 or _max_abs(X[i1][:, i2]) != 0.0:
        raise ValidationError("Eliminated block must be unpaired internally and bond-decoupled")

    T11, T12, T21 = T_vv[i1][:, i1], T_vv[i1][:, i2], T_vv[i2][:, i1]
    X11, X22 = X[i1][:, i1], X[i2][:, i2]

    T_pv = sp.csr_matrix(T_pv)
    T_p1, T_p2 = T_pv[:, i1], T_pv[:, i2]
    b1 = np.asarray((X11 @ T_p1.T).toarray())
    b2 = np.asarray((X22 @ T_p2.T).toarray())

    coupling = X22 @ T21
    system = sp.identity(len(i1), format="csr") + X11 @ T11 - X11 @ T12 @ coupling
    u1 = _solve(system, b1 - X11 @ (T12 @ b2), "reduced virtual block")
    u2 = b2 - coupling @ u1
    log.debug("Eliminated virtual block", kept=len(i1), eliminated=len(i2))
    return np.asarray(T_p1 @ u1 + T_p2 @ u2)
