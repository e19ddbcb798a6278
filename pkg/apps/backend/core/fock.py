"""
Fock Space Oracle Module

This module is a dense brute-force Fock-space backend used to cross-check
every Gaussian identity on small mode counts.

Basis state b has mode p occupied when bit p is set and stands for
a+_{p1} a+_{p2} ... |vac> with p1 < p2 < ..., so a+_p picks up the sign
(-1)^(number of occupied modes below p).
"""

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Any, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from apps.backend.core.config import ORACLE_DENSE_STEP_DIM, ORACLE_MAX_MODES
from apps.backend.core.errors import (
    OracleSizeError,
    PreconditionError,
    RepresentationError,
    ValidationError,
)
from apps.backend.core.gaussian import QuadraticHamiltonian, is_unitary
from apps.backend.monitoring.log import get_logger

log = get_logger(__name__)

_POPCOUNT8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def popcount(values: np.ndarray) -> np.ndarray:
    """Number of set bits of each non-negative integer."""
    values = np.asarray(values, dtype=np.int64)
    count = np.zeros(values.shape, dtype=np.int64)
    while np.any(values):
        count += _POPCOUNT8[values & 0xFF]
        values = values >> 8
    return count


def _check_size(num_modes: int, max_modes: int) -> None:
    if num_modes > max_modes:
        raise OracleSizeError(
            f"Fock oracle limited to {max_modes} modes, got {num_modes}",
            details={"modes": num_modes, "max_modes": max_modes},
        )


@lru_cache(maxsize=8)
def _basis(num_modes: int) -> np.ndarray:
    basis = np.arange(1 << num_modes, dtype=np.int64)
    basis.setflags(write=False)
    return basis


def _signs(basis: np.ndarray, p: int) -> np.ndarray:
    return 1 - 2 * (popcount(basis & ((1 << p) - 1)) & 1)


@dataclass(frozen=True, eq=False)
class FockState:
    """Dense amplitude vector over the 2^M occupation basis."""
    amplitudes: np.ndarray
    modes: Optional[Tuple[Any, ...]] = None

    def __post_init__(self) -> None:
        amp = np.asarray(self.amplitudes, dtype=np.complex128)
        dim = amp.shape[0] if amp.ndim == 1 else 0
        if amp.ndim != 1 or dim & (dim - 1) or dim == 0:
            raise ValidationError(f"Fock amplitudes must have length 2^M, got shape {amp.shape}")
        if not np.all(np.isfinite(amp)):
            raise ValidationError("Fock amplitudes must be finite")
        object.__setattr__(self, "amplitudes", amp)
        if self.modes is not None:
            modes = tuple(self.modes)
            if len(modes) != self.num_modes:
                raise ValidationError(f"Fock state has {self.num_modes} modes but {len(modes)} labels")
            object.__setattr__(self, "modes", modes)

    @property
    def num_modes(self) -> int:
        return int(self.amplitudes.shape[0]).bit_length() - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "FockState":
        return replace(self, amplitudes=self.amplitudes / self.norm())


def fock_vacuum(num_modes: int, modes: Optional[Sequence[Any]] = None,
                max_modes: int = ORACLE_MAX_MODES) -> FockState:
    _check_size(num_modes, max_modes)
    amp = np.zeros(1 << num_modes, dtype=np.complex128)
    amp[0] = 1.0
    return FockState(amp, None if modes is None else tuple(modes))


def fock_append_modes(state: FockState, count: int, modes: Sequence[Any] = (),
                      max_modes: int = ORACLE_MAX_MODES) -> FockState:
    """Add ``count`` empty modes after the existing ones."""
    total = state.num_modes + count
    _check_size(total, max_modes)
    amp = np.zeros(1 << total, dtype=np.complex128)
    amp[: state.amplitudes.shape[0]] = state.amplitudes
    labels = None
    if state.modes is not None:
        labels = state.modes + tuple(modes)
    return FockState(amp, labels)


def apply_creation(state: FockState, p: int) -> FockState:
    basis = _basis(state.num_modes)
    src = basis[(basis >> p) & 1 == 0]
    out = np.zeros_like(state.amplitudes)
    out[src | (1 << p)] = _signs(src, p) * state.amplitudes[src]
    return replace(state, amplitudes=out)


def apply_annihilation(state: FockState, p: int) -> FockState:
    basis = _basis(state.num_modes)
    src = basis[(basis >> p) & 1 == 1]
    out = np.zeros_like(state.amplitudes)
    out[src ^ (1 << p)] = _signs(src, p) * state.amplitudes[src]
    return replace(state, amplitudes=out)


def fock_apply_pair_creation(state: FockState, p: int, q: int, coeff: complex = 1.0) -> FockState:
    """coeff * a+_p a+_q |state>."""
    out = apply_creation(apply_creation(state, q), p)
    return replace(out, amplitudes=coeff * out.amplitudes)


def fock_apply_pair_annihilation(state: FockState, p: int, q: int, coeff: complex = 1.0) -> FockState:
    """coeff * a_p a_q |state>."""
    out = apply_annihilation(apply_annihilation(state, q), p)
    return replace(out, amplitudes=coeff * out.amplitudes)


def fock_build_bcs(T: np.ndarray, modes: Optional[Sequence[Any]] = None,
                   max_modes: int = ORACLE_MAX_MODES) -> FockState:
    """exp(1/2 sum T_pq a+_p a+_q)|vac> as the product of (1 + T_pq a+_p a+_q) over p < q."""
    T = np.asarray(T.toarray() if sp.issparse(T) else T, dtype=np.complex128)
    M = T.shape[0]
    state = fock_vacuum(M, modes, max_modes=max_modes)
    for p in range(M):
        for q in range(p + 1, M):
            if T[p, q] != 0.0:
                term = fock_apply_pair_creation(state, p, q, T[p, q])
                state = replace(state, amplitudes=state.amplitudes + term.amplitudes)
    return state


def fock_inner(left: FockState, right: FockState) -> complex:
    if left.num_modes != right.num_modes:
        raise ValidationError("Fock states have different mode counts")
    return complex(np.vdot(left.amplitudes, right.amplitudes))


def fock_fidelity(left: FockState, right: FockState) -> float:
    overlap = fock_inner(left, right)
    return float(abs(overlap) ** 2 / (left.norm() ** 2 * right.norm() ** 2))


def fock_pairing_matrix(state: FockState, rcond: float = 1e-12) -> np.ndarray:
    """Read T_pq off the two-particle amplitudes of a BCS state."""
    amp = state.amplitudes
    if abs(amp[0]) <= rcond * max(1.0, float(np.max(np.abs(amp)))):
        raise RepresentationError("Fock state has no vacuum component")
    M = state.num_modes
    T = np.zeros((M, M), dtype=np.complex128)
    for p in range(M):
        for q in range(p + 1, M):
            T[p, q] = amp[(1 << p) | (1 << q)] / amp[0]
            T[q, p] = -T[p, q]
    return T


def fock_reorder(state: FockState, order: Sequence[int]) -> FockState:
    """Relabel modes so that new mode j is old mode ``order[j]``."""
    M = state.num_modes
    order = np.asarray(order, dtype=np.int64)
    if sorted(order.tolist()) != list(range(M)):
        raise ValidationError(f"Order must be a permutation of {M} modes")
    basis = _basis(M)
    new_pos = np.empty(M, dtype=np.int64)
    new_pos[order] = np.arange(M)

    new_index = np.zeros_like(basis)
    for old in range(M):
        new_index |= ((basis >> old) & 1) << new_pos[old]

    inversions = np.zeros_like(basis)
    for i in range(M):
        occupied_i = (basis >> i) & 1
        for j in range(i + 1, M):
            if new_pos[i] > new_pos[j]:
                inversions += occupied_i & ((basis >> j) & 1)
    signs = 1 - 2 * (inversions & 1)

    out = np.zeros_like(state.amplitudes)
    out[new_index] = signs * state.amplitudes
    labels = None if state.modes is None else tuple(state.modes[k] for k in order)
    return FockState(out, labels)


def fock_project_vacuum(state: FockState, remove: Sequence[int]) -> FockState:
    """<vac|_removed |state>, keeping the remaining modes in order."""
    M = state.num_modes
    remove = sorted(set(int(p) for p in remove))
    keep = [p for p in range(M) if p not in remove]
    basis = _basis(M)
    removed_mask = 0
    for p in remove:
        removed_mask |= 1 << p
    src = basis[(basis & removed_mask) == 0]
    dst = np.zeros_like(src)
    for k, p in enumerate(keep):
        dst |= ((src >> p) & 1) << k
    out = np.zeros(1 << len(keep), dtype=np.complex128)
    out[dst] = state.amplitudes[src]
    labels = None if state.modes is None else tuple(state.modes[p] for p in keep)
    return FockState(out, labels)


def fock_project_bonds(state: FockState, bond_T: np.ndarray, positions: Sequence[int]) -> FockState:
    """
    Contract the bond bra <vac| exp(1/2 sum conj(T_vw) a_w a_v) on ``positions``.

    ``bond_T`` is indexed like ``positions``; the projected modes are removed.
    """
    bond_T = np.asarray(bond_T.toarray() if sp.issparse(bond_T) else bond_T, dtype=np.complex128)
    positions = [int(p) for p in positions]
    if bond_T.shape != (len(positions), len(positions)):
        raise ValidationError(f"Bond matrix {bond_T.shape} does not match {len(positions)} positions")
    for v in range(len(positions)):
        for w in range(v + 1, len(positions)):
            if bond_T[v, w] != 0.0:
                term = fock_apply_pair_annihilation(state, positions[w], positions[v], np.conj(bond_T[v, w]))
                state = replace(state, amplitudes=state.amplitudes + term.amplitudes)
    return fock_project_vacuum(state, positions)


@lru_cache(maxsize=64)
def _creation_matrix(num_modes: int, p: int) -> sp.csr_matrix:
    basis = _basis(num_modes)
    src = basis[(basis >> p) & 1 == 0]
    dim = 1 << num_modes
    return sp.csr_matrix((_signs(src, p).astype(np.float64), (src | (1 << p), src)), shape=(dim, dim))


def fock_number_operator(num_modes: int) -> sp.csr_matrix:
    return sp.diags(popcount(_basis(num_modes)).astype(np.float64), format="csr")


def _quadratic_generator(
    num_modes: int,
    hopping: Optional[np.ndarray] = None,
    creation: Optional[np.ndarray] = None,
    annihilation: Optional[np.ndarray] = None,
    constant: complex = 0.0,
) -> sp.csr_matrix:
    """sum hop_pq a+_p a_q + 1/2 sum cre_pq a+_p a+_q + 1/2 sum ann_pq a_p a_q + constant."""
    dim = 1 << num_modes
    out = sp.csr_matrix((dim, dim), dtype=np.complex128)
    cdag = [_creation_matrix(num_modes, p) for p in range(num_modes)]
    if hopping is not None:
        for p, q in zip(*np.nonzero(hopping)):
            out = out + hopping[p, q] * (cdag[p] @ cdag[q].T)
    for matrix, make in ((creation, lambda p, q: cdag[p] @ cdag[q]),
                         (annihilation, lambda p, q: cdag[p].T @ cdag[q].T)):
        if matrix is None:
            continue
        for p, q in zip(*np.nonzero(np.triu(matrix, 1))):
            out = out + matrix[p, q] * make(p, q)
    if constant:
        out = out + constant * sp.identity(dim, format="csr")
    return out.tocsr()


def fock_quadratic_matrix(H: QuadraticHamiltonian, max_modes: int = ORACLE_MAX_MODES) -> sp.csr_matrix:
    """Many-body matrix of a quadratic Hamiltonian, constant included."""
    _check_size(H.num_modes, max_modes)
    return _quadratic_generator(
        H.num_modes, H.hopping, H.pairing, -H.pairing.conj(), H.constant
    )


def fock_ground_state(H: QuadraticHamiltonian, max_modes: int = ORACLE_MAX_MODES) -> Tuple[float, FockState]:
    """Lowest eigenpair of the many-body Hamiltonian."""
    matrix = fock_quadratic_matrix(H, max_modes)
    if matrix.shape[0] <= 4096:
        E, V = la.eigh(matrix.toarray(), subset_by_index=[0, 0])
        energy, vector = float(E[0]), V[:, 0]
    else:
        E, V = spla.eigsh(matrix, k=1, which="SA")
        energy, vector = float(E[0]), V[:, 0]
    return energy, FockState(vector, H.modes)


def fock_apply_exp_quadratic(
    state: FockState,
    hopping: Optional[np.ndarray] = None,
    creation: Optional[np.ndarray] = None,
    annihilation: Optional[np.ndarray] = None,
) -> FockState:
    """exp(sum hop a+ a + 1/2 sum cre a+ a+ + 1/2 sum ann a a) |state>."""
    generator = _quadratic_generator(state.num_modes, hopping, creation, annihilation)
    return replace(state, amplitudes=spla.expm_multiply(generator, state.amplitudes))


def fock_transform_modes(state: FockState, U: np.ndarray) -> FockState:
    """Apply the Fock representation of a+_p -> sum_q U_qp a+_q."""
    U = np.asarray(U, dtype=np.complex128)
    if U.shape != (state.num_modes, state.num_modes) or not is_unitary(U):
        raise ValidationError("Mode transformation must be a unitary of matching size")
    return fock_apply_exp_quadratic(state, hopping=la.logm(U))


def _hermitian_log_factor(H1: np.ndarray, eps: float) -> np.ndarray:
    w, V = la.eigh(H1)
    if np.any(1.0 - eps * w <= 0.0):
        raise PreconditionError(
            f"Trotter step eps={eps:.3g} too large for hopping spectrum (max {w.max():.3g})",
            details={"eps": eps, "max_eigenvalue": float(w.max())},
        )
    return (V * np.log(1.0 - eps * w)) @ V.conj().T


def trotter_factors(H: QuadraticHamiltonian, eps: float,
                    max_modes: int = ORACLE_MAX_MODES) -> Tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """Generators of exp(-eps Pi^+), exp(sum log(1 - eps H1) a+ a) and exp(-eps Pi)."""
    M = H.num_modes
    _check_size(M, max_modes)
    number = _quadratic_generator(M, hopping=_hermitian_log_factor(H.hopping, eps))
    pair_on = _quadratic_generator(M, creation=-eps * H.pairing)
    pair_off = _quadratic_generator(M, annihilation=eps * H.pairing.conj())
    return pair_on, number, pair_off


def fock_imaginary_time_gs(
    H: QuadraticHamiltonian,
    beta: float,
    N: int,
    max_modes: int = ORACLE_MAX_MODES,
) -> FockState:
    """
    Apply N Trotter steps of length beta/N to the vacuum, unnormalized.

    Raises:
        PreconditionError: If beta or N are invalid or a step factor is not positive
    """
    if not beta > 0 or N < 1:
        raise PreconditionError(f"Need beta > 0 and N >= 1, got beta={beta}, N={N}")
    eps = beta / N
    state = fock_vacuum(H.num_modes, H.modes, max_modes=max_modes)
    pair_on, number, pair_off = trotter_factors(H, eps, max_modes)
    amp = state.amplitudes
    if amp.shape[0] > ORACLE_DENSE_STEP_DIM:
        for _ in range(N):
            amp = spla.expm_multiply(pair_off, amp)
            amp = spla.expm_multiply(number, amp)
            amp = spla.expm_multiply(pair_on, amp)
    else:
        step = la.expm(pair_on.toarray()) @ la.expm(number.toarray()) @ la.expm(pair_off.toarray())
        for _ in range(N):
            amp = step @ amp
    log.debug("Ran imaginary-time oracle", modes=H.num_modes, beta=beta, steps=N)
    return replace(state, amplitudes=amp)
