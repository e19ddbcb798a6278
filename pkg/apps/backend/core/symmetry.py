"""
Rotation and Charge Symmetry Module

This module implements quarter-turn rotations acting on physical and
virtual modes, the staggered U(1) charge, residual checks for pairing
states and Hamiltonians, and the linear solvers behind the symmetric PEPS
parameterizations.

A rotation with creation factor g(x) acts as

    U psi+_a(x) U^+ = sum_b g_ab(x) psi+_b(Lambda x),

so pairing matrices transform as T'(Lambda x, Lambda y) = g(x)^T T(x, y) g(y).
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from apps.backend.core.config import SVD_RANK_TOL
from apps.backend.core.errors import SymmetryViolationError, ValidationError
from apps.backend.core.gaussian import PairingState, QuadraticHamiltonian, transform_modes
from apps.backend.core.hamiltonians import dirac_matrices, hamiltonian_residual, rotate_hamiltonian
from apps.backend.core.lattice import (
    LatticeGeometry,
    ModeLayout,
    PermutationMatrix,
    SiteIndex,
    leg_permutation,
    parity_table,
    rotate_vector,
    rotation_site_map,
)
from apps.backend.monitoring.log import get_logger

log = get_logger(__name__)

ETA_D2 = complex(np.exp(1j * np.pi / 4))

# eta^(i)T J^(j) eta^(i) = sign J^(k), keyed by (i, j)
J_RELATIONS: Dict[Tuple[int, int], Tuple[int, int]] = {
    (1, 1): (1, 1), (1, 2): (1, 3), (1, 3): (-1, 2),
    (2, 1): (-1, 3), (2, 2): (1, 2), (2, 3): (1, 1),
    (3, 1): (1, 2), (3, 2): (-1, 1), (3, 3): (1, 3),
}


def eta_staggered_d3(axis: int, site: Sequence[int]) -> complex:
    """Staggered rotation phase eta^(axis)(x) for single-component fermions."""
    s1, s2, s3 = ((-1) ** (int(x) % 2) for x in site)
    if axis == 1:
        return complex((1 - 1j * s1) / np.sqrt(2))
    if axis == 2:
        return complex(-(1 - 1j * s1) * (1 + 1j * s2) * (1 + 1j * s3) / (2 * np.sqrt(2)))
    if axis == 3:
        return complex((1 + 1j * s3) / np.sqrt(2))
    raise ValidationError(f"Rotation axis must be 1, 2 or 3, got {axis}")


def eta_spinhalf(axis: int) -> np.ndarray:
    """exp(i pi sigma_axis / 4) = (1 + i sigma_axis) / sqrt(2)."""
    if axis not in (1, 2, 3):
        raise ValidationError(f"Rotation axis must be 1, 2 or 3, got {axis}")
    sigma = dirac_matrices().sigma[axis - 1]
    return (np.eye(2) + 1j * sigma) / np.sqrt(2)


def spinhalf_creation_factor(axis: int) -> np.ndarray:
    """Factor by which spin-1/2 creation operators rotate: conj(eta^(axis))."""
    return eta_spinhalf(axis).conj()


@dataclass(frozen=True, eq=False)
class PhysicalRotation:
    """Quarter turn of the physical modes with per-site creation factors g(x)."""
    geom: LatticeGeometry
    axis: Optional[int]
    factors: np.ndarray
    kind: str = "custom"

    def __post_init__(self) -> None:
        self.geom.require_rotations()
        factors = np.asarray(self.factors, dtype=np.complex128)
        if factors.ndim == 1:
            factors = factors[:, None, None]
        if factors.ndim != 3 or factors.shape[0] != self.geom.num_sites or factors.shape[1] != factors.shape[2]:
            raise ValidationError(f"Rotation factors have shape {factors.shape}")
        n_s = factors.shape[1]
        deviation = np.max(np.abs(
            np.einsum("sba,sbc->sac", factors.conj(), factors) - np.eye(n_s)[None]
        ))
        if deviation > 1e-12:
            raise ValidationError(f"Rotation factors are not unitary (deviation {deviation:.2e})")
        object.__setattr__(self, "factors", factors)

    @property
    def n_s(self) -> int:
        return self.factors.shape[1]

    @cached_property
    def site_map(self) -> np.ndarray:
        return rotation_site_map(self.geom, self.axis)

    @cached_property
    def legs(self) -> PermutationMatrix:
        return leg_permutation(self.geom, self.axis)

    def factor(self, site: Sequence[int]) -> np.ndarray:
        return self.factors[self.geom.site_index(site)]

    def unitary(self) -> sp.csr_matrix:
        """Mode unitary over the physical modes, U[(Lambda x, b), (x, a)] = g_ab(x)."""
        layout = ModeLayout(self.geom, self.n_s)
        return _block_unitary(layout.physical_index, self.site_map, self.factors, layout.num_modes)


def _block_unitary(index: np.ndarray, site_map: np.ndarray, factors: np.ndarray, size: int) -> sp.csr_matrix:
    rows, cols, data = [], [], []
    n_s = factors.shape[1]
    for s in range(index.shape[0]):
        target = site_map[s]
        for a in range(n_s):
            for b in range(n_s):
                if factors[s, a, b] != 0.0:
                    rows.append(index[target, b])
                    cols.append(index[s, a])
                    data.append(factors[s, a, b])
    return sp.csr_matrix((data, (rows, cols)), shape=(size, size), dtype=np.complex128)


def physical_rotation(
    geom: LatticeGeometry,
    kind: str,
    axis: Optional[int] = None,
    eta: Optional[complex] = None,
) -> PhysicalRotation:
    """
    Build a physical rotation.

    Args:
        geom: Lattice with equal extents
        kind: ``d2`` (constant phase), ``staggered_d3`` or ``spinhalf``
        axis: Rotation axis for d=3
        eta: Phase for ``d2``; defaults to exp(i pi / 4)

    Returns:
        PhysicalRotation: Rotation with its per-site creation factors
    """
    n = geom.num_sites
    if kind == "d2":
        if geom.dim != 2:
            raise ValidationError("d2 rotations need a d=2 lattice")
        phase = ETA_D2 if eta is None else complex(eta)
        return PhysicalRotation(geom, None, np.full(n, phase), kind)
    if kind == "staggered_d3":
        if geom.dim != 3:
            raise ValidationError("staggered rotations need a d=3 lattice")
        phases = np.array([eta_staggered_d3(axis, site) for site in geom.sites()])
        return PhysicalRotation(geom, axis, phases, kind)
    if kind == "spinhalf":
        if geom.dim != 3:
            raise ValidationError("spin-1/2 rotations need a d=3 lattice")
        g = spinhalf_creation_factor(axis)
        return PhysicalRotation(geom, axis, np.broadcast_to(g, (n, 2, 2)).copy(), kind)
    raise ValidationError(f"Unknown rotation kind {kind!r}")


def rotation_axes(dim: int) -> Tuple[Optional[int], ...]:
    return (None,) if dim == 2 else (1, 2, 3)


@dataclass(frozen=True, eq=False)
class VirtualRotation:
    """Action of a rotation on the c and d modes of a PEPS."""
    physical: PhysicalRotation
    xi: np.ndarray
    zeta: np.ndarray

    @property
    def legs(self) -> PermutationMatrix:
        return self.physical.legs

    def unitary(self, layout: ModeLayout) -> sp.csr_matrix:
        """Mode unitary over all modes of ``layout``."""
        phys = self.physical
        if layout.geom != phys.geom or layout.n_s != phys.n_s:
            raise ValidationError("Layout does not match the rotation lattice")
        size = layout.num_modes
        U = _block_unitary(layout.physical_index, phys.site_map, phys.factors, size)
        image = np.asarray(self.legs.image)
        for index, factors in ((layout.c_index, self.xi), (layout.d_index, self.zeta)):
            if index.shape[2] == 0:
                continue
            n_sites, n_legs, copies, n_s = index.shape
            rotated = index[:, image]  # rotated[s, m] is the slot of leg image[m]
            rows, cols, data = [], [], []
            for s in range(n_sites):
                target = phys.site_map[s]
                for m in range(n_legs):
                    for mu in range(copies):
                        for a in range(n_s):
                            for b in range(n_s):
                                if factors[s, a, b] != 0.0:
                                    rows.append(rotated[target, m, mu, b])
                                    cols.append(index[s, m, mu, a])
                                    data.append(factors[s, a, b])
            U = U + sp.csr_matrix((data, (rows, cols)), shape=(size, size), dtype=np.complex128)
        return U.tocsr()

    def virtual_unitary(self, layout: ModeLayout) -> sp.csr_matrix:
        virtual = layout.virtual_positions
        return self.unitary(layout)[virtual][:, virtual].tocsr()


def virtual_rotation(
    rot: PhysicalRotation,
    xi: Optional[np.ndarray] = None,
    zeta: Optional[np.ndarray] = None,
) -> VirtualRotation:
    """Virtual action with c modes rotated by conj(g) and d modes by g unless overridden."""
    return VirtualRotation(
        physical=rot,
        xi=rot.factors.conj() if xi is None else np.asarray(xi, dtype=np.complex128),
        zeta=rot.factors if zeta is None else np.asarray(zeta, dtype=np.complex128),
    )


def four_rotation_product(rot: PhysicalRotation, site: Sequence[int], tol: float = 1e-12) -> int:
    """
    g(x) g(Lambda x) g(Lambda^2 x) g(Lambda^3 x), required to be +-1 times identity.

    Raises:
        SymmetryViolationError: If the product is not +-1
    """
    s = rot.geom.site_index(site)
    product = np.eye(rot.n_s, dtype=np.complex128)
    for _ in range(4):
        product = product @ rot.factors[s]
        s = rot.site_map[s]
    for sign in (1, -1):
        if np.max(np.abs(product - sign * np.eye(rot.n_s))) <= tol:
            return sign
    raise SymmetryViolationError(
        f"Four rotations at {tuple(site)} give {product.ravel()}, not +-1",
        details={"site": tuple(site), "product": product.tolist()},
    )


def rotation_residual(state: PairingState, rot: PhysicalRotation) -> float:
    """max |T' - T| after rotating the physical-mode state."""
    U = rot.unitary()
    if state.num_modes != U.shape[0]:
        raise ValidationError(
            f"State has {state.num_modes} modes, rotation acts on {U.shape[0]}"
        )
    rotated = transform_modes(state, U)
    if rotated.is_sparse and state.is_sparse:
        diff = (rotated.T - state.T).tocsr()
        return float(abs(diff).max()) if diff.nnz else 0.0
    diff = rotated.dense() - state.dense()
    return float(np.max(np.abs(diff), initial=0.0))


def hamiltonian_rotation_residual(H: QuadraticHamiltonian, rot: PhysicalRotation) -> float:
    return hamiltonian_residual(rotate_hamiltonian(H, rot.unitary()), H)


@dataclass(frozen=True)
class ChargeOperator:
    """Staggered charge Q = sum (-1)^(x1+...+xd) n(x) over physical modes."""
    geom: LatticeGeometry
    n_s: int = 1

    @cached_property
    def signs(self) -> np.ndarray:
        return np.repeat(parity_table(self.geom), self.n_s)


def charge_residual(state: PairingState, geom: LatticeGeometry, n_s: int = 1) -> float:
    """Largest pairing amplitude between equal-parity sites."""
    signs = ChargeOperator(geom, n_s).signs
    if state.num_modes != len(signs):
        raise ValidationError(f"State has {state.num_modes} modes, lattice has {len(signs)}")
    same = signs[:, None] == signs[None, :]
    if state.is_sparse:
        T = state.T.tocoo()
        mask = same[T.row, T.col]
        return float(np.max(np.abs(T.data[mask]), initial=0.0))
    return float(np.max(np.abs(state.T[same]), initial=0.0))


def _as_list(Rs: Union[PermutationMatrix, Sequence[PermutationMatrix]]) -> List[PermutationMatrix]:
    if isinstance(Rs, PermutationMatrix):
        return [Rs]
    return list(Rs)


def _null_space(A: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal rows spanning {v : A v = 0}."""
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(n, dtype=np.complex128)
    _, s, vh = la.svd(A)
    rank = int(np.sum(s > tol))
    return vh[rank:].conj()


def solve_t_constraint(
    Rs: Union[PermutationMatrix, Sequence[PermutationMatrix]],
    eigval: complex = 1.0,
    tol: float = SVD_RANK_TOL,
) -> np.ndarray:
    """Orthonormal basis (rows) of the joint eigval-eigenspace of every R^T."""
    Rs = _as_list(Rs)
    n = Rs[0].size
    stacked = np.vstack([R.matrix.T - eigval * np.eye(n) for R in Rs])
    return _null_space(stacked, tol)


def solve_tau_constraint(
    Rs: Union[PermutationMatrix, Sequence[PermutationMatrix]],
    phase: complex = 1.0,
    tol: float = SVD_RANK_TOL,
) -> np.ndarray:
    """Basis [k, n, n] of {tau : R^T tau R = phase tau for every R}."""
    Rs = _as_list(Rs)
    n = Rs[0].size
    stacked = np.vstack([np.kron(R.matrix.T, R.matrix.T) - phase * np.eye(n * n) for R in Rs])
    return _null_space(stacked, tol).reshape(-1, n, n)


def tau_constraint_residual(tau: np.ndarray, Rs: Sequence[PermutationMatrix], phase: complex = 1.0) -> float:
    return float(max(
        np.max(np.abs(R.matrix.T @ tau @ R.matrix - phase * tau)) for R in _as_list(Rs)
    ))


def circulant_tau(z: Sequence[complex]) -> np.ndarray:
    """4 x 4 circulant tau[m, n] = z[(n - m) mod 4]."""
    z = np.asarray(z, dtype=np.complex128)
    if z.shape != (4,):
        raise ValidationError("A circulant tau needs four coefficients")
    m = np.arange(4)
    return z[(m[None, :] - m[:, None]) % 4]


def cubic_tau(z: Sequence[complex]) -> np.ndarray:
    """6 x 6 tau invariant under all three cubic quarter turns: z1 off-pattern, z2 opposite legs, z3 diagonal."""
    z = np.asarray(z, dtype=np.complex128)
    if z.shape != (3,):
        raise ValidationError("A cubic tau needs three coefficients")
    tau = np.full((6, 6), z[0])
    for m, n in ((0, 2), (1, 3), (4, 5)):
        tau[m, n] = tau[n, m] = z[1]
    np.fill_diagonal(tau, z[2])
    return tau


def span_residual(basis: np.ndarray, target: np.ndarray) -> float:
    """Distance of ``target`` from the span of ``basis`` (rows or matrices)."""
    B = basis.reshape(basis.shape[0], -1).T
    v = np.asarray(target, dtype=np.complex128).ravel()
    if B.shape[1] == 0:
        return float(np.linalg.norm(v))
    coeffs, *_ = la.lstsq(B, v)
    return float(np.linalg.norm(B @ coeffs - v))


@dataclass
class JRelationReport:
    """Deviations of g^T J_j g from the expected +-J_k, per (axis, j)."""
    deviations: Dict[Tuple[int, int], float] = field(default_factory=dict)
    direct_form_deviations: Dict[Tuple[int, int], float] = field(default_factory=dict)

    @property
    def max_deviation(self) -> float:
        return max(self.deviations.values(), default=0.0)

    @property
    def direct_form_max_deviation(self) -> float:
        return max(self.direct_form_deviations.values(), default=0.0)

    def passed(self, tol: float) -> bool:
        return self.max_deviation <= tol


def check_J_relations() -> JRelationReport:
    """
    Evaluate all nine J relations.

    ``deviations`` uses the creation factor conj(eta^(i)); using the
    matrices eta^(i) directly is reported in ``direct_form_deviations``.
    """
    J = dirac_matrices().J
    report = JRelationReport()
    for (i, j), (sign, k) in J_RELATIONS.items():
        expected = sign * J[k - 1]
        for factor, target in ((spinhalf_creation_factor(i), report.deviations),
                               (eta_spinhalf(i), report.direct_form_deviations)):
            target[(i, j)] = float(np.max(np.abs(factor.T @ J[j - 1] @ factor - expected)))
    log.debug("Checked J relations", max_deviation=report.max_deviation,
              direct_form=report.direct_form_max_deviation)
    return report


def nn_amplitude_dimension(eta: complex, dim: int, statistics: int = -1, tol: float = SVD_RANK_TOL) -> int:
    """
    Dimension of translation-invariant nearest-neighbour amplitudes t_i = T(x, x + e_i)
    compatible with constant-phase rotations.

    A link along e_i is carried to +-e_j with factor eta^2; reversed links pick up
    ``statistics`` (-1 for fermions, +1 for bosons). The eta^4 = +1 control that
    admits a nonzero amplitude is the bosonic count, statistics=+1, not a
    fermionic configuration.
    """
    eta2 = complex(eta) ** 2
    rows = []
    for axis in rotation_axes(dim):
        for i in range(dim):
            unit = [0] * dim
            unit[i] = 1
            image = rotate_vector(dim, axis, unit)
            j = int(np.flatnonzero(image)[0])
            sign = image[j]
            row = np.zeros(dim, dtype=np.complex128)
            row[j] += 1.0 if sign > 0 else statistics
            row[i] -= eta2
            rows.append(row)
    A = np.array(rows)
    rank = int(np.sum(la.svdvals(A) > tol))
    return dim - rank


def no_go_spinless_d3(eta: complex = ETA_D2, statistics: int = -1) -> int:
    """Allowed nearest-neighbour dimension for single-component fermions in d=3 (zero for eta^4 = -1)."""
    return nn_amplitude_dimension(eta, 3, statistics)


def bond_weight_conditions(
    W_C: Sequence[complex],
    W_D: Sequence[complex],
    eta: complex = ETA_D2,
) -> float:
    """Residual of W^C(2) = conj(eta)^2 W^C(1) and W^D(2) = eta^2 W^D(1) in d=2."""
    W_C = np.asarray(W_C, dtype=np.complex128)
    W_D = np.asarray(W_D, dtype=np.complex128)
    eta = complex(eta)
    return float(max(
        np.max(np.abs(W_C[1] - np.conj(eta) ** 2 * W_C[0])),
        np.max(np.abs(W_D[1] - eta ** 2 * W_D[0])),
    ))


def params_rotation_residual(params, rot: PhysicalRotation, virt: Optional[VirtualRotation] = None) -> Tuple[float, float]:
    """
    Invariance residuals (joint, bond) of a PEPS parameter set under a rotation.
    """
    from apps.backend.core.peps import assemble_bond_pairing, assemble_joint_pairing

    virt = virtual_rotation(rot) if virt is None else virt
    layout = params.layout
    U = virt.unitary(layout)
    joint = assemble_joint_pairing(params)
    bond = assemble_bond_pairing(params)
    residuals = []
    for state, unitary in ((joint, U), (bond, U[layout.virtual_positions][:, layout.virtual_positions])):
        diff = (transform_modes(state, unitary.tocsr()).T - state.T)
        diff = sp.csr_matrix(diff)
        residuals.append(float(abs(diff).max()) if diff.nnz else 0.0)
    log.debug("Checked PEPS rotation invariance", kind=rot.kind, axis=rot.axis,
              joint=residuals[0], bond=residuals[1])
    return residuals[0], residuals[1]


def staggered_product_signs(geom: LatticeGeometry) -> Dict[int, List[int]]:
    """Four-rotation signs of the staggered phases at every site, per axis."""
    out: Dict[int, List[int]] = {}
    for axis in (1, 2, 3):
        rot = physical_rotation(geom, "staggered_d3", axis)
        out[axis] = [four_rotation_product(rot, site) for site in geom.sites()]
    return out
