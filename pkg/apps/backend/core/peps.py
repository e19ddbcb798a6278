"""
Gaussian PEPS Module

This module assembles fermionic Gaussian PEPS. Every site carries physical
modes psi, and on each of its 2d legs N_c copies of c modes and N_d copies
of d modes. The site operator

    A(x) = exp(sum t psi+ c+ + sum tau c+ d+)

and the bond operators w (maximally entangled pairs i W c+ c+ and i W d+ d+
across each link) are Gaussian, so the PEPS <bond| prod A |vac> is obtained
by a single Gaussian projection over all virtual modes.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from apps.backend.core.config import (
    EPSILON_MARGIN,
    ORACLE_MAX_LIVE_MODES,
    TROTTER_MAX_MODES,
)
from apps.backend.core.errors import ContractionError, PreconditionError, ValidationError
from apps.backend.core.fock import (
    FockState,
    fock_append_modes,
    fock_apply_pair_creation,
    fock_imaginary_time_gs,
    fock_project_bonds,
    fock_vacuum,
)
from apps.backend.core.gaussian import PairingState, project_bonds
from apps.backend.core.hamiltonians import KSpec, build_quadratic, dirac_matrices, staggered_d3_kspec
from apps.backend.core.lattice import LatticeGeometry, ModeLayout, leg_of_direction
from apps.backend.core.symmetry import ETA_D2, circulant_tau, cubic_tau
from apps.backend.monitoring.log import get_logger

log = get_logger(__name__)


def x_matrices(dim: int) -> np.ndarray:
    """X^(i)_mn = 1 when leg m at x links to leg n at x + e_i (legs 1-based in the docs)."""
    X = np.zeros((dim, 2 * dim, 2 * dim))
    for axis in range(1, dim + 1):
        out_leg, in_leg = _link_legs(dim, axis)
        X[axis - 1, out_leg - 1, in_leg - 1] = 1.0
    return X


def _link_legs(dim: int, axis: int) -> Tuple[int, int]:
    unit = [0] * dim
    unit[axis - 1] = 1
    return leg_of_direction(dim, unit), leg_of_direction(dim, [-u for u in unit])


@dataclass(frozen=True, eq=False)
class PepsParams:
    """
    Parameters of a Gaussian PEPS.

    Arrays may carry a leading site axis or omit it when all sites share
    parameters:

        t      [site,] N_c, legs, N_s, N_s
        tau    [site,] N_c, N_d, legs, legs, N_s, N_s
        W_C    [site,] dim, N_s, N_s
        W_D    [site,] dim, N_s, N_s
    """
    geom: LatticeGeometry
    n_s: int
    n_c: int
    n_d: int
    t: np.ndarray
    tau: np.ndarray
    W_C: np.ndarray
    W_D: np.ndarray
    name: str = "custom"

    def __post_init__(self) -> None:
        legs, dim, n_s = self.geom.num_legs, self.geom.dim, self.n_s
        shapes = {
            "t": (self.n_c, legs, n_s, n_s),
            "tau": (self.n_c, self.n_d, legs, legs, n_s, n_s),
            "W_C": (dim, n_s, n_s),
            "W_D": (dim, n_s, n_s),
        }
        for name, shape in shapes.items():
            value = np.asarray(getattr(self, name), dtype=np.complex128)
            if value.shape != shape and value.shape != (self.geom.num_sites,) + shape:
                raise ValidationError(
                    f"{name} has shape {value.shape}, expected {shape} with optional site axis"
                )
            object.__setattr__(self, name, value)

    @property
    def translation_invariant(self) -> bool:
        return self.t.ndim == 4 and self.tau.ndim == 6 and self.W_C.ndim == 3 and self.W_D.ndim == 3

    @cached_property
    def layout(self) -> ModeLayout:
        return ModeLayout(self.geom, self.n_s, self.n_c, self.n_d)

    def _per_site(self, value: np.ndarray, ndim: int) -> np.ndarray:
        if value.ndim == ndim:
            return np.broadcast_to(value, (self.geom.num_sites,) + value.shape)
        return value

    def t_sites(self) -> np.ndarray:
        return self._per_site(self.t, 4)

    def tau_sites(self) -> np.ndarray:
        return self._per_site(self.tau, 6)

    def W_C_sites(self) -> np.ndarray:
        return self._per_site(self.W_C, 3)

    def W_D_sites(self) -> np.ndarray:
        return self._per_site(self.W_D, 3)


def _coo_pairs(rows: np.ndarray, cols: np.ndarray, values: np.ndarray, size: int) -> sp.csr_matrix:
    rows, cols, values = np.broadcast_arrays(rows, cols, values)
    keep = values != 0.0
    upper = sp.coo_matrix(
        (values[keep], (rows[keep], cols[keep])), shape=(size, size), dtype=np.complex128
    ).tocsr()
    return (upper - upper.T).tocsr()


def assemble_joint_pairing(params: PepsParams) -> PairingState:
    """
    Pairing matrix of prod_x A(x) over all modes in canonical order.

    T[psi(x, a), c(x, m, mu, b)] = t[x, mu, m, a, b] and
    T[c(x, m, mu, a), d(x, n, nu, b)] = tau[x, mu, nu, m, n, a, b].
    """
    layout = params.layout
    P = layout.physical_index
    C = layout.c_index.transpose(0, 2, 1, 3)  # [site, copy, leg, spin]
    D = layout.d_index.transpose(0, 2, 1, 3)
    size = layout.num_modes

    t_rows = P[:, None, None, :, None]
    t_cols = C[:, :, :, None, :]
    T = _coo_pairs(t_rows, t_cols, params.t_sites(), size)

    if params.n_c and params.n_d:
        tau_rows = C[:, :, None, :, None, :, None]
        tau_cols = D[:, None, :, None, :, None, :]
        T = T + _coo_pairs(tau_rows, tau_cols, params.tau_sites(), size)
    return PairingState(T.tocsr(), layout.modes)


def assemble_bond_pairing(params: PepsParams) -> PairingState:
    """
    Pairing matrix of all bond states over the virtual modes.

    Across the link (x, x + e_i) the out-leg copy mu at x pairs with the
    in-leg copy mu at x + e_i with weight i W^C(x, i) (c modes) or i W^D(x, i)
    (d modes).
    """
    geom, layout = params.geom, params.layout
    lookup = layout.virtual_lookup
    size = len(layout.virtual_positions)
    B = sp.csr_matrix((size, size), dtype=np.complex128)
    sites = np.arange(geom.num_sites)
    for species_index, weights in ((layout.c_index, params.W_C_sites()), (layout.d_index, params.W_D_sites())):
        if species_index.shape[2] == 0:
            continue
        for axis in range(1, geom.dim + 1):
            out_leg, in_leg = _link_legs(geom.dim, axis)
            neighbors = geom.neighbor_table[:, axis - 1]
            rows = lookup[species_index[sites, out_leg - 1]]  # [site, copy, spin]
            cols = lookup[species_index[neighbors, in_leg - 1]]
            values = 1j * weights[:, axis - 1][:, None, :, :]  # [site, 1, a, b]
            B = B + _coo_pairs(rows[:, :, :, None], cols[:, :, None, :], values, size)
    return PairingState(B.tocsr(), layout.virtual_modes)


def contract(params: PepsParams, compute_scalar: bool = False) -> PairingState:
    """
    Project the bond states out of the joint state.

    Returns:
        PairingState: Physical-mode state (scalar set when ``compute_scalar``)

    Raises:
        ContractionError: If the projection annihilates the state
    """
    layout = params.layout
    joint = assemble_joint_pairing(params)
    bond = assemble_bond_pairing(params)
    eliminate = None
    if params.n_d:
        eliminate = layout.virtual_lookup[layout.d_index.ravel()]
    try:
        state = project_bonds(
            joint, bond, layout.virtual_positions,
            compute_scalar=compute_scalar, eliminate=eliminate,
        )
    except ContractionError as e:
        support = e.details.get("null_support", [])
        kept = np.setdiff1d(np.arange(len(layout.virtual_positions)), eliminate if eliminate is not None else [])
        modes = [str(layout.virtual_modes[kept[k]]) for k in support if k < len(kept)]
        raise ContractionError(
            f"PEPS contraction failed for {params.name}: {e}",
            details={**e.details, "singular_modes": modes},
        ) from e
    log.info("Contracted PEPS", family=params.name, modes=layout.num_modes,
             virtual=len(layout.virtual_positions), physical=state.num_modes)
    return state


def random_coefficients(
    rng: np.random.Generator,
    n_c: int,
    n_d: int,
    pattern_size: int,
    scale: float = 0.5,
) -> Tuple[np.ndarray, np.ndarray]:
    """Complex Gaussian free coefficients t[n_c] and z[n_c, n_d, pattern_size]."""
    def draw(shape):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    return draw((n_c,)), draw((n_c, n_d, pattern_size))


def _coefficient_arrays(t, z, n_c: int, n_d: int, k: int) -> Tuple[np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=np.complex128).reshape(n_c)
    z = np.asarray(z, dtype=np.complex128)
    if z.size == 0:
        z = np.zeros((n_c, n_d, k), dtype=np.complex128)
    z = z.reshape(n_c, n_d, k)
    return t, z


def symmetric_params_d2(
    geom: LatticeGeometry,
    n_c: int,
    n_d: int,
    t: Sequence[complex],
    z: Sequence,
    eta: complex = ETA_D2,
) -> PepsParams:
    """
    Rotation-invariant d=2 family: equal t on all legs, circulant tau,
    W^C = (1, conj(eta)^2) and W^D = (1, eta^2).
    """
    if geom.dim != 2:
        raise ValidationError("symmetric_params_d2 needs a d=2 lattice")
    t, z = _coefficient_arrays(t, z, n_c, n_d, 4)
    t_arr = np.broadcast_to(t[:, None, None, None], (n_c, 4, 1, 1)).copy()
    tau = np.zeros((n_c, n_d, 4, 4, 1, 1), dtype=np.complex128)
    for mu in range(n_c):
        for nu in range(n_d):
            tau[mu, nu, :, :, 0, 0] = circulant_tau(z[mu, nu])
    eta = complex(eta)
    W_C = np.array([1.0, np.conj(eta) ** 2]).reshape(2, 1, 1)
    W_D = np.array([1.0, eta ** 2]).reshape(2, 1, 1)
    return PepsParams(geom, 1, n_c, n_d, t_arr, tau, W_C, W_D, name="symmetric_d2")


def _cubic_tau_table(z: np.ndarray, n_c: int, n_d: int, n_s: int) -> np.ndarray:
    tau = np.zeros((n_c, n_d, 6, 6, n_s, n_s), dtype=np.complex128)
    for mu in range(n_c):
        for nu in range(n_d):
            tau[mu, nu] = np.einsum("mn,ab->mnab", cubic_tau(z[mu, nu]), np.eye(n_s))
    return tau


def symmetric_params_d3_staggered(
    geom: LatticeGeometry,
    n_c: int,
    n_d: int,
    t: Sequence[complex],
    z: Sequence,
) -> PepsParams:
    """Staggered-rotation family: equal t, cubic tau pattern, W^D = staggered hoppings, W^C = conj."""
    if geom.dim != 3:
        raise ValidationError("symmetric_params_d3_staggered needs a d=3 lattice")
    t, z = _coefficient_arrays(t, z, n_c, n_d, 3)
    t_arr = np.broadcast_to(t[:, None, None, None], (n_c, 6, 1, 1)).copy()
    K = staggered_d3_kspec(geom, 1.0).K
    return PepsParams(
        geom, 1, n_c, n_d, t_arr, _cubic_tau_table(z, n_c, n_d, 1), K.conj(), K,
        name="symmetric_d3_staggered",
    )


def symmetric_params_d3_spinhalf(
    geom: LatticeGeometry,
    n_c: int,
    n_d: int,
    t: Sequence[complex],
    z: Sequence,
) -> PepsParams:
    """Spin-1/2 family: t delta_ab, cubic tau pattern times delta_ab, W^C = conj(J_i), W^D = J_i."""
    if geom.dim != 3:
        raise ValidationError("symmetric_params_d3_spinhalf needs a d=3 lattice")
    t, z = _coefficient_arrays(t, z, n_c, n_d, 3)
    t_arr = np.einsum("u,m,ab->umab", t, np.ones(6), np.eye(2))
    J = dirac_matrices().J
    return PepsParams(
        geom, 2, n_c, n_d, t_arr, _cubic_tau_table(z, n_c, n_d, 2), J.conj(), J.copy(),
        name="symmetric_d3_spinhalf",
    )


def exact_pairing_weight(mu: int, nu: int, eps: float, r: float, a: float) -> float:
    """z^(mu, nu) = -(eps / 2a) r^(nu - mu) for mu <= nu, zero otherwise."""
    if mu > nu:
        return 0.0
    return -(eps / (2.0 * a)) * r ** (nu - mu)


def check_epsilon(spec: KSpec, beta: float, N: int, margin: float = EPSILON_MARGIN) -> float:
    """
    Return eps = beta / N after checking eps < min(a, 1/m) / margin.

    Raises:
        PreconditionError: If beta, N or eps are out of range
    """
    if not beta > 0 or N < 1:
        raise PreconditionError(f"Need beta > 0 and N >= 1, got beta={beta}, N={N}")
    eps = beta / N
    bound = min(spec.a, 1.0 / spec.m) / margin
    if not eps < bound:
        raise PreconditionError(
            f"Imaginary time step eps={eps:.4g} must be below {bound:.4g}",
            details={"eps": eps, "bound": bound, "margin": margin},
        )
    return eps


def exact_construction_params(
    spec: KSpec,
    beta: float,
    N: int,
    margin: float = EPSILON_MARGIN,
) -> PepsParams:
    """
    PEPS parameters reproducing N Trotter steps of exp(-beta H) on the vacuum.

    Copy mu of the c modes is the imaginary-time slice mu; the d copies
    nu = 0..N-2 carry the annihilation slices 1..N-1.
    """
    eps = check_epsilon(spec, beta, N, margin)
    a = spec.a
    r = 1.0 - spec.m * eps
    n_s, legs = spec.n_s, spec.geom.num_legs
    n_c, n_d = N, N - 1
    delta = np.eye(n_s)

    weights = np.sqrt(eps / (2.0 * a)) * r ** np.arange(n_c)
    t = np.einsum("u,m,ab->umab", weights, np.ones(legs), delta)

    z = np.array([[exact_pairing_weight(nu + 1, mu, eps, r, a) for nu in range(n_d)]
                  for mu in range(n_c)]).reshape(n_c, n_d)
    tau = np.einsum("uv,mn,ab->uvmnab", z, np.ones((legs, legs)), delta)

    log.debug("Built exact construction", model=spec.name, N=N, eps=eps, r=r)
    return PepsParams(
        spec.geom, n_s, n_c, n_d, t, tau, spec.K.conj(), spec.K.copy(),
        name="exact_construction",
    )


def trotter_reference(spec: KSpec, beta: float, N: int, max_modes: int = TROTTER_MAX_MODES) -> FockState:
    """Fock-oracle Trotterized exp(-beta H)|vac> with the same step as the exact construction."""
    H = build_quadratic(spec)
    return fock_imaginary_time_gs(H, beta, N, max_modes=max_modes)


def fock_contract(params: PepsParams, max_live: int = ORACLE_MAX_LIVE_MODES) -> FockState:
    """
    Contract a PEPS in Fock space site by site.

    Sites are added in canonical order with their A operators applied; a
    link's bond factors are applied and its virtual modes projected out as
    soon as both ends are present.
    """
    layout = params.layout
    geom = params.geom
    joint = assemble_joint_pairing(params).T.tocsr()
    bond = assemble_bond_pairing(params).T.tocsr()
    virtual = layout.virtual_positions

    live: list = []
    state = fock_vacuum(0, (), max_modes=max_live)
    pending = set(range(len(virtual)))
    for s in range(geom.num_sites):
        block = list(range(s * layout.block_size, (s + 1) * layout.block_size))
        state = fock_append_modes(state, len(block), block, max_modes=max_live)
        live.extend(block)
        where = {mode: k for k, mode in enumerate(live)}

        local = joint[block][:, block].tocoo()
        for p, q, value in zip(local.row, local.col, local.data):
            if p < q:
                term = fock_apply_pair_creation(state, where[block[p]], where[block[q]], value)
                state = FockState(state.amplitudes + term.amplitudes, state.modes)

        closed = sorted(v for v in pending if int(virtual[v]) in where and _partner_live(bond, v, virtual, where))
        if not closed:
            continue
        state = fock_project_bonds(
            state, bond[closed][:, closed], [where[int(virtual[v])] for v in closed]
        )
        pending.difference_update(closed)
        dropped = {int(virtual[v]) for v in closed}
        live = [mode for mode in live if mode not in dropped]

    if pending:
        raise ValidationError(f"{len(pending)} virtual modes were never contracted")
    log.debug("Contracted PEPS in Fock space", modes=layout.num_modes, physical=len(live))
    return FockState(state.amplitudes, tuple(layout.modes[p] for p in live))


def _partner_live(bond: sp.csr_matrix, v: int, virtual: np.ndarray, where: dict) -> bool:
    partners = bond.indices[bond.indptr[v]:bond.indptr[v + 1]]
    return all(int(virtual[w]) in where for w in partners)


def build_family(
    family: str,
    geom: LatticeGeometry,
    n_c: int,
    n_d: int,
    t: Sequence[complex],
    z: Sequence,
) -> PepsParams:
    """Symmetric family by name."""
    if family == "symmetric_d2":
        return symmetric_params_d2(geom, n_c, n_d, t, z)
    if family == "symmetric_d3_staggered":
        return symmetric_params_d3_staggered(geom, n_c, n_d, t, z)
    if family == "symmetric_d3_spinhalf":
        return symmetric_params_d3_spinhalf(geom, n_c, n_d, t, z)
    raise ValidationError(f"Unknown PEPS family {family!r}")


def family_pattern_size(family: str) -> int:
    return 4 if family == "symmetric_d2" else 3


def random_symmetric_params(
    family: str,
    geom: LatticeGeometry,
    n_c: int,
    n_d: int,
    rng: np.random.Generator,
    scale: float = 0.5,
) -> PepsParams:
    """Symmetric family with randomly drawn free coefficients."""
    t, z = random_coefficients(rng, n_c, n_d, family_pattern_size(family), scale)
    return build_family(family, geom, n_c, n_d, t, z)


def random_params(
    geom: LatticeGeometry,
    n_s: int,
    n_c: int,
    n_d: int,
    rng: np.random.Generator,
    scale: float = 0.5,
) -> PepsParams:
    """Translation-invariant PEPS with unconstrained complex Gaussian parameters."""
    legs, dim = geom.num_legs, geom.dim

    def draw(*shape):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    return PepsParams(
        geom, n_s, n_c, n_d,
        t=draw(n_c, legs, n_s, n_s),
        tau=draw(n_c, n_d, legs, legs, n_s, n_s),
        W_C=draw(dim, n_s, n_s),
        W_D=draw(dim, n_s, n_s),
        name="random",
    )
