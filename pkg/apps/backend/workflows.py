"""
Batch Workflows Module

This module holds the verification suites, the convergence sweep and the
state builders behind the ``gpeps`` command line. Every workflow returns a
``RunOutcome`` made of result records, plot-ready tables and written files.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg as la

from apps.backend.core.config import SCALAR_MAX_VIRTUAL, TROTTER_MAX_MODES, ExperimentConfig, config_hash
from apps.backend.core.covariance import covariance_roundtrip, pairing_to_covariance
from apps.backend.core.errors import ConfigError, PreconditionError, SymmetryViolationError
from apps.backend.core.fock import (
    fock_build_bcs,
    fock_fidelity,
    fock_ground_state,
    fock_inner,
    fock_project_bonds,
    fock_transform_modes,
)
from apps.backend.core.gaussian import (
    PairingState,
    bcs_overlap,
    bdg_spectrum,
    energy_variance,
    fidelity,
    ground_energy,
    ground_state_pairing,
    project_bonds,
    transform_modes,
)
from apps.backend.core.hamiltonians import (
    KSpec,
    build_model,
    build_quadratic,
    exact_ground,
    hamiltonian_residual,
    naive_dirac_hamiltonian,
    naive_kspec,
    naive_particle_hole_data,
    particle_hole_transform,
    staggered_d2_kspec,
    staggered_d3_kspec,
    susskind_d2_hamiltonian,
    susskind_particle_hole_data,
)
from apps.backend.core.lattice import LatticeGeometry, PermutationMatrix, leg_permutation, rotation_site_map
from apps.backend.core.peps import (
    PepsParams,
    build_family,
    contract,
    exact_construction_params,
    family_pattern_size,
    fock_contract,
    random_coefficients,
    random_params,
    trotter_reference,
)
from apps.backend.core.pfaffian import pfaffian
from apps.backend.core.state_files import read_state, write_state
from apps.backend.core.symmetry import (
    ETA_D2,
    charge_residual,
    check_J_relations,
    circulant_tau,
    cubic_tau,
    eta_spinhalf,
    four_rotation_product,
    hamiltonian_rotation_residual,
    nn_amplitude_dimension,
    no_go_spinless_d3,
    params_rotation_residual,
    physical_rotation,
    rotation_axes,
    rotation_residual,
    solve_t_constraint,
    solve_tau_constraint,
    span_residual,
    staggered_product_signs,
)
from apps.backend.monitoring.log import get_logger
from apps.backend.monitoring.monitoring import MetricsCollector, ResultRecord, calculate_metric_trends

log = get_logger(__name__)

# No wall-time column: timing lives in results.json, not in the converge table.
CONVERGE_COLUMNS = [
    "sweep", "beta", "N", "eps", "n_c", "n_d", "degenerate",
    "fidelity_exact", "infidelity_exact", "fidelity_trotter", "skipped", "reason",
]
SPECTRUM_COLUMNS = ["index", "energy"]

FAMILY_ROTATION = {
    "symmetric_d2": "d2",
    "symmetric_d3_staggered": "staggered_d3",
    "symmetric_d3_spinhalf": "spinhalf",
}
MODEL_ROTATION = {
    "staggered_d2": "d2",
    "staggered_d3": "staggered_d3",
    "naive_upper": "spinhalf",
}


@dataclass
class RunOutcome:
    """Records, tables and files produced by one command."""
    command: str
    config_hash: str
    records: List[ResultRecord] = field(default_factory=list)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.all_passed for r in self.records)

    @property
    def failures(self) -> List[str]:
        return [f"{r.run_id}:{name}" for r in self.records for name in r.failures]


def suite_rng(config: ExperimentConfig, key: int) -> np.random.Generator:
    """Generator seeded by the config seed and a per-suite key."""
    return np.random.default_rng([config.seed, key])


def _random_complex(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def _random_antisymmetric(rng: np.random.Generator, n: int, scale: float = 0.5) -> np.ndarray:
    A = scale * _random_complex(rng, n, n)
    return A - A.T


def _random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    Q, R = la.qr(_random_complex(rng, n, n))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def _relative(a: complex, b: complex) -> float:
    return float(abs(a - b) / max(1.0, abs(b)))


def _vector_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


def model_spec(config: ExperimentConfig, geom: Optional[LatticeGeometry] = None) -> KSpec:
    """KSpec of the configured model on ``geom`` (the configured lattice by default)."""
    geom = config.geometry.to_geometry() if geom is None else geom
    custom = None
    if config.custom_k is not None:
        custom = np.array(config.custom_k.K, dtype=np.complex128)
    return build_model(config.model, geom, config.m, custom_K=custom)


def _default_family(config: ExperimentConfig) -> str:
    if config.family in FAMILY_ROTATION:
        return config.family
    return "symmetric_d2" if config.geometry.dim == 2 else "symmetric_d3_staggered"


def family_params(
    config: ExperimentConfig,
    rng: np.random.Generator,
    family: Optional[str] = None,
    geom: Optional[LatticeGeometry] = None,
) -> PepsParams:
    """
    PEPS parameters of a configured family.

    Configured coefficients are used when present; otherwise they are drawn
    from ``rng``.
    """
    family = family or config.family
    geom = config.geometry.to_geometry() if geom is None else geom
    if family == "exact_construction":
        if config.beta is None or config.N is None:
            raise ConfigError("exact_construction needs beta and N")
        return exact_construction_params(model_spec(config, geom), config.beta, config.N, config.epsilon_margin)
    coefficients = config.coefficients
    k = family_pattern_size(family)
    if coefficients.t is None:
        t, z = random_coefficients(rng, config.n_c, config.n_d, k, coefficients.scale)
    else:
        t = coefficients.t
        z = coefficients.z if coefficients.z is not None else np.zeros((config.n_c, config.n_d, k))
    return build_family(family, geom, config.n_c, config.n_d, t, z)


# Verification suites

def pfaffian_suite(config: ExperimentConfig, rng: np.random.Generator, metrics: MetricsCollector) -> None:
    """Pf(A)^2 = det(A) and Pf(B A B^T) = det(B) Pf(A) on random instances."""
    worst_square = worst_congruence = 0.0
    count = 40 * config.random_instances
    for _ in range(count):
        n = 2 * int(rng.integers(1, 11))
        A = _random_antisymmetric(rng, n, scale=1.0)
        B = _random_complex(rng, n, n)
        pf = pfaffian(A)
        worst_square = max(worst_square, _relative(pf ** 2, la.det(A)))
        worst_congruence = max(worst_congruence, _relative(pfaffian(B @ A @ B.T), la.det(B) * pf))
    metrics.record("pfaffian_instances", count)
    metrics.check("pfaffian_square", worst_square, config.tolerances.pfaffian)
    metrics.check("pfaffian_congruence", worst_congruence, config.tolerances.pfaffian)


def _oracle_cell(config: ExperimentConfig) -> Tuple[LatticeGeometry, int, int, int]:
    dim, n_s = config.geometry.dim, config.n_s
    geom = LatticeGeometry(dim=dim, extent=(1,) * dim, spacing=config.geometry.spacing)
    n_d = 1 if n_s == 1 else 0
    return geom, n_s, 1, n_d


def oracle_suite(config: ExperimentConfig, rng: np.random.Generator, metrics: MetricsCollector) -> None:
    """Gaussian formulas against the dense Fock oracle."""
    if not config.oracle_checks:
        metrics.record("oracle_skipped", 1)
        return
    tol = config.tolerances.oracle
    count = 10 * config.random_instances
    overlap = transform = projection = 0.0
    for _ in range(count):
        M = int(rng.integers(2, 9))
        Tl, Tr = _random_antisymmetric(rng, M), _random_antisymmetric(rng, M)
        expected = fock_inner(fock_build_bcs(Tl), fock_build_bcs(Tr))
        overlap = max(overlap, _relative(bcs_overlap(PairingState(Tl), PairingState(Tr)), expected))

        M = int(rng.integers(2, 7))
        T, U = _random_antisymmetric(rng, M), _random_unitary(rng, M)
        rotated = fock_build_bcs(transform_modes(PairingState(T), U).T)
        transform = max(transform, _vector_error(
            rotated.amplitudes, fock_transform_modes(fock_build_bcs(T), U).amplitudes
        ))

        M, n_v = 10, 2 * int(rng.integers(1, 3))
        positions = np.sort(rng.choice(M, size=n_v, replace=False))
        joint, bond = _random_antisymmetric(rng, M), _random_antisymmetric(rng, n_v)
        projected = project_bonds(PairingState(joint), PairingState(bond), positions, compute_scalar=True)
        gaussian_amp = projected.scalar * fock_build_bcs(projected.T).amplitudes
        fock_amp = fock_project_bonds(fock_build_bcs(joint), bond, positions).amplitudes
        projection = max(projection, _vector_error(gaussian_amp, fock_amp))

    geom, n_s, n_c, n_d = _oracle_cell(config)
    contraction = 0.0
    for _ in range(config.random_instances):
        params = random_params(geom, n_s, n_c, n_d, rng)
        state = contract(params, compute_scalar=True)
        gaussian_amp = state.scalar * fock_build_bcs(state.dense()).amplitudes
        contraction = max(contraction, _vector_error(gaussian_amp, fock_contract(params).amplitudes))

    metrics.check("oracle_overlap", overlap, tol)
    metrics.check("oracle_transform", transform, tol)
    metrics.check("oracle_projection", projection, tol)
    metrics.check("oracle_contraction", contraction, tol)


def _rotation_algebra_deviation() -> float:
    cube = LatticeGeometry.cubic(3, 4)
    R = {axis: leg_permutation(cube, axis).matrix for axis in (1, 2, 3)}
    deviation = np.max(np.abs(R[2] - R[1] @ R[3] @ R[1].T))
    square = LatticeGeometry.cubic(2, 4)
    mats = list(R.values()) + [leg_permutation(square, None).matrix]
    for M in mats:
        deviation = max(deviation, np.max(np.abs(np.linalg.matrix_power(M, 4) - np.eye(len(M)))))
    for geom, axes in ((cube, (1, 2, 3)), (square, (None,))):
        for axis in axes:
            site_map = rotation_site_map(geom, axis)
            image = np.arange(geom.num_sites)
            for _ in range(4):
                image = site_map[image]
            deviation = max(deviation, float(np.count_nonzero(image != np.arange(geom.num_sites))))
    return float(deviation)


def _four_rotation_failures(kind: str, geom: LatticeGeometry, axes: Sequence[Optional[int]]) -> int:
    failures = 0
    for axis in axes:
        rot = physical_rotation(geom, kind, axis)
        for site in geom.sites():
            try:
                failures += four_rotation_product(rot, site) != -1
            except SymmetryViolationError:
                failures += 1
    return failures


def symmetry_suite(config: ExperimentConfig, rng: np.random.Generator, metrics: MetricsCollector) -> None:
    """J relations, rotation algebra and four-rotation products."""
    tol = config.tolerances.j_relations
    report = check_J_relations()
    metrics.check("j_relations", report.max_deviation, tol)
    metrics.record("j_relations_direct_form", report.direct_form_max_deviation)

    eta = {i: eta_spinhalf(i) for i in (1, 2, 3)}
    metrics.check("eta_composition", np.max(np.abs(eta[2] - eta[1] @ eta[3] @ eta[1].conj().T)), tol)
    metrics.check("rotation_algebra", _rotation_algebra_deviation(), 0.0)

    square, cube = LatticeGeometry.cubic(2, 4), LatticeGeometry.cubic(3, 4)
    metrics.check("four_rotation_d2_failures", _four_rotation_failures("d2", square, (None,)), 0, "eq")
    metrics.check("four_rotation_spinhalf_failures",
                  _four_rotation_failures("spinhalf", cube, (1, 2, 3)), 0, "eq")
    try:
        signs = staggered_product_signs(cube)
        minus = sum(s == -1 for values in signs.values() for s in values)
        metrics.record("four_rotation_staggered_minus_sites", minus)
        metrics.check("four_rotation_staggered_failures", 0, 0, "eq")
    except SymmetryViolationError:
        metrics.check("four_rotation_staggered_failures", 1, 0, "eq")


def solver_suite(config: ExperimentConfig, rng: np.random.Generator, metrics: MetricsCollector) -> None:
    """Dimensions of the rotation-invariant parameter spaces and the no-go count."""
    tol = config.tolerances.solver
    square, cube = LatticeGeometry.cubic(2, 4), LatticeGeometry.cubic(3, 4)
    R2 = leg_permutation(square, None)
    R3 = [leg_permutation(cube, axis) for axis in (1, 2, 3)]

    t2, t3 = solve_t_constraint(R2), solve_t_constraint(R3)
    metrics.check("t_space_dim_d2", len(t2), 1, "eq")
    metrics.check("t_space_dim_d3", len(t3), 1, "eq")
    metrics.check("t_all_ones", max(span_residual(t2, np.ones(4)), span_residual(t3, np.ones(6))), tol)

    tau2, tau3 = solve_tau_constraint(R2), solve_tau_constraint(R3)
    metrics.check("tau_space_dim", len(tau2) if config.geometry.dim == 2 else len(tau3),
                  4 if config.geometry.dim == 2 else 3, "eq")
    metrics.check("tau_space_dim_d2", len(tau2), 4, "eq")
    metrics.check("tau_space_dim_d3", len(tau3), 3, "eq")
    metrics.check("tau_space_dim_unconstrained", len(solve_tau_constraint(PermutationMatrix.identity(4))), 16, "eq")
    pattern = max(
        span_residual(tau2, circulant_tau(_random_complex(rng, 4))),
        span_residual(tau3, cubic_tau(_random_complex(rng, 3))),
    )
    metrics.check("tau_pattern_residual", pattern, tol)

    eta = complex(np.exp(1j * np.pi * config.no_go_phase))
    metrics.record("no_go_eta4", float((eta ** 4).real))
    metrics.check("no_go_dim", no_go_spinless_d3(eta), 0, "eq")
    metrics.check("nn_dim_d2", nn_amplitude_dimension(ETA_D2, 2), 1, "eq")
    metrics.check("nn_dim_d3_bosons", nn_amplitude_dimension(1.0, 3, statistics=1), 1, "eq")


def _cross_block_norm(H, geom: LatticeGeometry) -> float:
    upper = np.tile(np.array([True, True, False, False]), geom.num_sites)
    blocks = []
    for A in (H.hopping, H.pairing):
        blocks.append(np.max(np.abs(A[np.ix_(upper, ~upper)]), initial=0.0))
        blocks.append(np.max(np.abs(A[np.ix_(~upper, upper)]), initial=0.0))
    return float(max(blocks))


def hamiltonian_suite(config: ExperimentConfig, rng: np.random.Generator, metrics: MetricsCollector) -> None:
    """Rotation invariance, particle-hole identities and oracle ground energies."""
    tol = config.tolerances.hamiltonian
    m = config.m
    square, cube = LatticeGeometry.cubic(2, 4), LatticeGeometry.cubic(3, 4)

    H2 = build_quadratic(staggered_d2_kspec(square, m))
    metrics.check("hamiltonian_rotation_d2", hamiltonian_rotation_residual(H2, physical_rotation(square, "d2")), tol)
    H3 = build_quadratic(staggered_d3_kspec(cube, m))
    metrics.check("hamiltonian_rotation_staggered_d3", max(
        hamiltonian_rotation_residual(H3, physical_rotation(cube, "staggered_d3", axis)) for axis in (1, 2, 3)
    ), tol)
    Hn = build_quadratic(naive_kspec(cube, m, "upper"))
    metrics.check("hamiltonian_rotation_spinhalf", max(
        hamiltonian_rotation_residual(Hn, physical_rotation(cube, "spinhalf", axis)) for axis in (1, 2, 3)
    ), tol)

    susskind = particle_hole_transform(susskind_d2_hamiltonian(square, m), square, *susskind_particle_hole_data())
    metrics.check("particle_hole_staggered_d2", hamiltonian_residual(susskind, H2), tol)
    naive = particle_hole_transform(naive_dirac_hamiltonian(cube, m), cube, *naive_particle_hole_data())
    metrics.check("naive_decoupling", _cross_block_norm(naive, cube), tol)

    if config.oracle_checks:
        small = LatticeGeometry(dim=2, extent=(4, 2), spacing=config.geometry.spacing)
        H = build_quadratic(staggered_d2_kspec(small, m))
        energy, ground = fock_ground_state(H)
        state = ground_state_pairing(H, gap_tol=config.tolerances.gap)
        metrics.check("ground_energy_oracle", abs(ground_energy(H) - energy), config.tolerances.oracle)
        metrics.check("ground_state_oracle", 1.0 - fock_fidelity(fock_build_bcs(state.T), ground),
                      config.tolerances.oracle)


def peps_suite(config: ExperimentConfig, rng: np.random.Generator, metrics: MetricsCollector) -> None:
    """Rotation and charge residuals of contracted symmetric PEPS and of the exact ground state."""
    tols = config.tolerances
    geom = config.geometry.to_geometry()
    family = _default_family(config)
    kind = FAMILY_ROTATION[family]
    draws = config.coefficients.draws if config.coefficients.t is None else 1

    state_residual = site_residual = charge = 0.0
    state = None
    for _ in range(draws):
        params = family_params(config, rng, family, geom)
        state = contract(params)
        charge = max(charge, charge_residual(state, geom, params.n_s))
        if geom.is_degenerate:
            continue
        for axis in rotation_axes(geom.dim):
            rot = physical_rotation(geom, kind, axis)
            state_residual = max(state_residual, rotation_residual(state, rot))
            site_residual = max(site_residual, *params_rotation_residual(params, rot))
    metrics.record("peps_draws", draws)
    metrics.check("peps_charge", charge, tols.charge)
    if not geom.is_degenerate:
        metrics.check("peps_rotation", state_residual, tols.rotation)
        metrics.check("peps_site_rotation", site_residual, tols.rotation)

    _, _, roundtrip = covariance_roundtrip(state)
    metrics.check("covariance_roundtrip", roundtrip, tols.roundtrip)
    metrics.check("covariance_purity", pairing_to_covariance(state).purity_deviation(), tols.roundtrip)

    if config.family == "exact_construction":
        exact_state = contract(family_params(config, rng, "exact_construction", geom))
        metrics.check("exact_construction_charge", charge_residual(exact_state, geom, config.n_s), tols.charge)

    spec = model_spec(config, geom)
    ground = exact_ground(spec, gap_tol=tols.gap)
    metrics.check("ground_charge", charge_residual(ground, geom, spec.n_s), tols.charge)
    metrics.check("ground_variance", abs(energy_variance(build_quadratic(spec), ground)), tols.roundtrip)


VERIFY_SUITES: Dict[str, Callable[[ExperimentConfig, np.random.Generator, MetricsCollector], None]] = {
    "pfaffian": pfaffian_suite,
    "oracle": oracle_suite,
    "symmetry": symmetry_suite,
    "solver": solver_suite,
    "hamiltonian": hamiltonian_suite,
    "peps": peps_suite,
}


def run_suite(name: str, config: ExperimentConfig) -> ResultRecord:
    """Run one named suite and return its record."""
    key = list(VERIFY_SUITES).index(name)
    metrics = MetricsCollector(f"{config.name}:{name}", config_hash(config))
    start = time.perf_counter()
    VERIFY_SUITES[name](config, suite_rng(config, key), metrics)
    record = metrics.to_record(time.perf_counter() - start)
    log.info("Finished suite", suite=name, passed=record.all_passed, wall_time=record.wall_time)
    return record


def _map(fn: Callable, items: Sequence[Tuple], workers: int) -> List[Any]:
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(fn, *zip(*items)))
    return [fn(*item) for item in items]


def cmd_verify(config: ExperimentConfig, suites: Optional[Sequence[str]] = None) -> RunOutcome:
    """Run the verification suites; the outcome passes iff every check passes."""
    names = list(suites or VERIFY_SUITES)
    unknown = [n for n in names if n not in VERIFY_SUITES]
    if unknown:
        raise ConfigError(f"Unknown suites: {', '.join(unknown)}")
    records = _map(run_suite, [(name, config) for name in names], config.workers)
    records.sort(key=lambda r: r.run_id)
    outcome = RunOutcome("verify", config_hash(config), records)
    outcome.tables["verify"] = pd.DataFrame([r.to_row() for r in records])
    return outcome


# Convergence sweep

def converge_point(config: ExperimentConfig, sweep: str, beta: float, N: int) -> Dict[str, Any]:
    """One row of the convergence table."""
    spec = model_spec(config)
    row: Dict[str, Any] = {
        "sweep": sweep, "beta": beta, "N": N, "eps": beta / N,
        "n_c": N, "n_d": N - 1, "degenerate": N == 1,
        "fidelity_exact": np.nan, "infidelity_exact": np.nan, "fidelity_trotter": np.nan,
        "skipped": False, "reason": "",
    }
    try:
        params = exact_construction_params(spec, beta, N, config.epsilon_margin)
    except PreconditionError as e:
        log.warning("Skipping sweep point", sweep=sweep, beta=beta, N=N, reason=str(e))
        row.update(skipped=True, reason=str(e))
        return row

    state = contract(params)
    ground = exact_ground(spec, gap_tol=config.tolerances.gap)
    value = fidelity(state, ground)
    row.update(fidelity_exact=value, infidelity_exact=1.0 - value)
    if config.oracle_checks and state.num_modes <= TROTTER_MAX_MODES:
        reference = trotter_reference(spec, beta, N)
        row["fidelity_trotter"] = fock_fidelity(fock_build_bcs(state.dense(), max_modes=TROTTER_MAX_MODES), reference)
    log.info("Computed sweep point", sweep=sweep, beta=beta, N=N, fidelity=value)
    return row


def _sweep_points(config: ExperimentConfig) -> List[Tuple[str, float, int]]:
    points = [("N", float(config.beta), int(N)) for N in config.n_values]
    if config.beta_values:
        if config.N is None:
            raise ConfigError("beta_values need N to fix the time step")
        eps = config.beta / config.N
        points += [("beta", float(b), max(1, int(round(b / eps)))) for b in config.beta_values]
    return points


def cmd_converge(config: ExperimentConfig) -> RunOutcome:
    """
    Sweep the exact construction over N (and optionally beta at fixed eps).

    Returns:
        RunOutcome: Table ``converge`` plus a record checking that the fidelity
        with the exact ground state does not decrease with N and that the
        Trotter identity holds where the oracle applies

    Raises:
        ConfigError: If the config is not an exact_construction config with beta
    """
    if config.family != "exact_construction":
        raise ConfigError("converge needs family: exact_construction")
    if config.beta is None:
        raise ConfigError("converge needs beta")
    points = _sweep_points(config)
    rows = _map(converge_point, [(config, *p) for p in points], config.workers)
    table = pd.DataFrame(rows, columns=CONVERGE_COLUMNS)
    table = table.sort_values(["sweep", "beta", "N"], kind="mergesort").reset_index(drop=True)

    tols = config.tolerances
    metrics = MetricsCollector(f"{config.name}:converge", config_hash(config))
    n_sweep = table[(table["sweep"] == "N") & ~table["skipped"]]
    trends = calculate_metric_trends(n_sweep["fidelity_exact"].to_numpy(), tol=tols.fidelity_slack)
    metrics.record("sweep_points", len(table))
    metrics.record("skipped_points", int(table["skipped"].sum()))
    if trends:
        metrics.check("fidelity_monotone", float(trends["non_decreasing"]), 1.0, "eq")
        metrics.check("max_fidelity", float(table["fidelity_exact"].max()), 1.0 + tols.fidelity_slack)
        metrics.record("final_infidelity", float(n_sweep["infidelity_exact"].iloc[-1]))
    trotter = table["fidelity_trotter"].dropna()
    if len(trotter):
        metrics.check("min_trotter_fidelity", float(trotter.min()), 1.0 - tols.trotter_identity, "ge")
    beta_sweep = table[(table["sweep"] == "beta") & ~table["skipped"]]
    if len(beta_sweep) > 1:
        beta_trend = calculate_metric_trends(beta_sweep["infidelity_exact"].to_numpy())
        metrics.record("beta_infidelity_non_increasing", float(beta_trend["non_increasing"]))

    outcome = RunOutcome("converge", config_hash(config), [metrics.to_record()])
    outcome.tables["converge"] = table
    outcome.summary["monotone"] = bool(trends.get("non_decreasing", True))
    return outcome


# State builders

def build_state(config: ExperimentConfig) -> Tuple[PairingState, int]:
    """Physical state described by a config: a PEPS family or the model ground state."""
    geom = config.geometry.to_geometry()
    if config.family is None:
        spec = model_spec(config, geom)
        return exact_ground(spec, gap_tol=config.tolerances.gap), spec.n_s
    params = family_params(config, suite_rng(config, 0), config.family, geom)
    small = len(params.layout.virtual_positions) <= SCALAR_MAX_VIRTUAL
    return contract(params, compute_scalar=small), params.n_s


def cmd_build(config: ExperimentConfig) -> RunOutcome:
    """Build the configured state and write it as a state file."""
    geom = config.geometry.to_geometry()
    metrics = MetricsCollector(f"{config.name}:build", config_hash(config))
    state, n_s = build_state(config)
    covariance = pairing_to_covariance(state) if config.output.covariance else None
    path = Path(config.output.dir) / f"{config.name}_state.{config.output.state_format}"
    write_state(path, state, geom, n_s, model=config.family or config.model, covariance=covariance)

    reloaded = read_state(path).state
    metrics.check("roundtrip_error", float(np.max(np.abs(reloaded.dense() - state.dense()), initial=0.0)), 0.0)
    metrics.record("modes", state.num_modes)
    metrics.record("charge_residual", charge_residual(state, geom, n_s))

    outcome = RunOutcome("build", config_hash(config), [metrics.to_record()])
    outcome.artifacts["state"] = str(path)
    return outcome


def cmd_spectrum(config: ExperimentConfig) -> RunOutcome:
    """Positive BdG excitation energies of the configured model."""
    spec = model_spec(config)
    H = build_quadratic(spec)
    energies = bdg_spectrum(H)
    metrics = MetricsCollector(f"{config.name}:spectrum", config_hash(config))
    metrics.record("ground_energy", ground_energy(H))
    metrics.record("min_excitation", float(energies.min()) if energies.size else 0.0)
    metrics.record("modes", H.num_modes)
    outcome = RunOutcome("spectrum", config_hash(config), [metrics.to_record()])
    outcome.tables["spectrum"] = pd.DataFrame({"index": np.arange(energies.size), "energy": energies})
    return outcome


def rotation_kind(model: Optional[str], dim: int, n_s: int) -> str:
    """Rotation matching a state's model label, falling back on dimension and N_s."""
    if model in FAMILY_ROTATION:
        return FAMILY_ROTATION[model]
    if model in MODEL_ROTATION:
        return MODEL_ROTATION[model]
    if dim == 2:
        return "d2"
    return "spinhalf" if n_s == 2 else "staggered_d3"


def cmd_rotate_check(config: ExperimentConfig, state_path: str, kind: Optional[str] = None) -> RunOutcome:
    """Rotation and charge residuals of a state file."""
    record = read_state(state_path)
    geom = record.geom
    kind = kind or rotation_kind(record.model, geom.dim, record.n_s)
    metrics = MetricsCollector(f"{config.name}:rotate-check", config_hash(config))
    residual = max(
        rotation_residual(record.state, physical_rotation(geom, kind, axis)) for axis in rotation_axes(geom.dim)
    )
    metrics.check("rotation_residual", residual, config.tolerances.rotation)
    metrics.check("charge_residual", charge_residual(record.state, geom, record.n_s), config.tolerances.charge)
    outcome = RunOutcome("rotate-check", config_hash(config), [metrics.to_record()])
    outcome.summary.update(state=str(state_path), kind=kind)
    return outcome
