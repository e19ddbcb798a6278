"""
Configuration Module

This module holds the library defaults and the validated experiment
configuration consumed by the command line.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Union

import yaml
from pydantic import (
    BaseModel,
    BeforeValidator,
    Field,
    PlainSerializer,
    ValidationError as PydanticValidationError,
    field_validator,
    model_validator,
)
from typing_extensions import Annotated

from apps.backend.core.errors import ConfigError

# Numerical defaults
ANTISYMMETRY_TOL = 1e-10
HERMITICITY_TOL = 1e-10
UNITARITY_TOL = 1e-10
GAP_TOL = 1e-8
BOGOLIUBOV_RCOND = 1e-12
SVD_RANK_TOL = 1e-10
EPSILON_MARGIN = 10.0
DENSE_SOLVE_LIMIT = 6000

# Fock oracle limits
ORACLE_MAX_MODES = 14
ORACLE_MAX_LIVE_MODES = 22
ORACLE_DENSE_STEP_DIM = 1024
TROTTER_MAX_MODES = 12
SCALAR_MAX_VIRTUAL = 512

# Batch defaults
DEFAULT_WORKERS = 1
DEFAULT_SEED = 0
RESULTS_SCHEMA_VERSION = "1"
STATE_FILE_VERSION = "1"


def _parse_complex(value: Any) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"complex pairs must be [re, im], got {value}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        return complex(value.replace(" ", "").replace("i", "j"))
    return complex(value)


def _dump_complex(value: complex) -> List[float]:
    return [float(value.real), float(value.imag)]


ComplexValue = Annotated[
    Any,
    BeforeValidator(_parse_complex),
    PlainSerializer(_dump_complex, when_used="json"),
]

ModelName = Literal["staggered_d2", "staggered_d3", "naive_upper", "naive_lower", "custom_K"]
FamilyName = Literal[
    "symmetric_d2",
    "symmetric_d3_staggered",
    "symmetric_d3_spinhalf",
    "exact_construction",
]


class GeometryConfig(BaseModel):
    """Lattice section of an experiment config."""
    dim: int = Field(default=2, ge=2, le=3)
    extent: Union[int, List[int]] = Field(default=4)
    spacing: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def validate_extent(self) -> "GeometryConfig":
        extent = self.extent_tuple()
        if len(extent) != self.dim:
            raise ValueError(f"extent {extent} does not match dim={self.dim}")
        if any(n < 1 or (n != 1 and n % 2) for n in extent):
            raise ValueError(f"lattice extents must be even, got {extent}")
        return self

    def extent_tuple(self) -> tuple:
        if isinstance(self.extent, int):
            return (self.extent,) * self.dim
        return tuple(self.extent)

    def to_geometry(self):
        from apps.backend.core.lattice import LatticeGeometry

        return LatticeGeometry(dim=self.dim, extent=self.extent_tuple(), spacing=self.spacing)


class Tolerances(BaseModel):
    """Pass thresholds for the verification suites."""
    pfaffian: float = Field(default=1e-10, gt=0)
    oracle: float = Field(default=1e-9, gt=0)
    rotation: float = Field(default=1e-9, gt=0)
    charge: float = Field(default=1e-12, gt=0)
    j_relations: float = Field(default=1e-13, gt=0)
    hamiltonian: float = Field(default=1e-12, gt=0)
    solver: float = Field(default=1e-13, gt=0)
    roundtrip: float = Field(default=1e-9, gt=0)
    trotter_identity: float = Field(default=1e-8, gt=0)
    fidelity_slack: float = Field(default=1e-9, gt=0)
    gap: float = Field(default=GAP_TOL, gt=0)


class CoefficientsConfig(BaseModel):
    """Free coefficients of a symmetric PEPS family; random draws when omitted."""
    t: Optional[List[ComplexValue]] = None
    z: Optional[List[List[List[ComplexValue]]]] = None
    draws: int = Field(default=3, ge=1)
    scale: float = Field(default=0.5, gt=0)


class CustomKConfig(BaseModel):
    """Site-independent K matrices, one N_s x N_s block per direction."""
    n_s: int = Field(default=1, ge=1)
    K: List[List[List[ComplexValue]]]

    @model_validator(mode="after")
    def validate_blocks(self) -> "CustomKConfig":
        for block in self.K:
            if len(block) != self.n_s or any(len(row) != self.n_s for row in block):
                raise ValueError(f"each K block must be {self.n_s}x{self.n_s}")
        return self


class OutputConfig(BaseModel):
    """Where results and state files go."""
    dir: str = "results"
    state_format: Literal["txt", "npz"] = "txt"
    covariance: bool = False


class ExperimentConfig(BaseModel):
    """Input model for a single batch run."""
    name: str = Field(default="experiment", min_length=1)
    model: ModelName = "staggered_d2"
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    m: float = Field(default=1.0, gt=0)
    family: Optional[FamilyName] = None
    beta: Optional[float] = Field(default=None, gt=0)
    N: Optional[int] = Field(default=None, ge=1)
    n_values: List[int] = Field(default_factory=lambda: [8, 16, 32, 64])
    beta_values: List[float] = Field(default_factory=list)
    n_c: int = Field(default=1, ge=0)
    n_d: int = Field(default=1, ge=0)
    coefficients: CoefficientsConfig = Field(default_factory=CoefficientsConfig)
    custom_k: Optional[CustomKConfig] = None
    epsilon_margin: float = Field(default=EPSILON_MARGIN, gt=0)
    oracle_checks: bool = True
    random_instances: int = Field(default=5, ge=1)
    no_go_phase: float = Field(default=0.25)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    output: OutputConfig = Field(default_factory=OutputConfig)
    seed: int = Field(default=DEFAULT_SEED, ge=0)
    workers: int = Field(default=DEFAULT_WORKERS, ge=1)

    @field_validator("n_values")
    @classmethod
    def validate_n_values(cls, v: List[int]) -> List[int]:
        """Validate sweep step counts are positive and distinct."""
        if any(n < 1 for n in v):
            raise ValueError("n_values must be positive")
        if len(set(v)) != len(v):
            raise ValueError("n_values must be distinct")
        return v

    @model_validator(mode="after")
    def validate_model_geometry(self) -> "ExperimentConfig":
        dim = self.geometry.dim
        if self.model == "staggered_d2" and dim != 2:
            raise ValueError("model staggered_d2 needs dim=2")
        if self.model in ("staggered_d3", "naive_upper", "naive_lower") and dim != 3:
            raise ValueError(f"model {self.model} needs dim=3")
        if self.model == "custom_K":
            if self.custom_k is None:
                raise ValueError("model custom_K needs a custom_k section")
            if len(self.custom_k.K) != dim:
                raise ValueError(f"custom_k needs {dim} K blocks")
        if self.family == "symmetric_d2" and dim != 2:
            raise ValueError("family symmetric_d2 needs dim=2")
        if self.family in ("symmetric_d3_staggered", "symmetric_d3_spinhalf") and dim != 3:
            raise ValueError(f"family {self.family} needs dim=3")
        if self.family == "exact_construction" and self.beta is not None and self.N is not None:
            eps = self.beta / self.N
            bound = min(self.geometry.spacing, 1.0 / self.m) / self.epsilon_margin
            if not eps < bound:
                raise ValueError(
                    f"epsilon = beta/N = {eps:.4g} must be below {bound:.4g}"
                )
        return self

    @property
    def n_s(self) -> int:
        if self.model in ("naive_upper", "naive_lower"):
            return 2
        if self.model == "custom_K" and self.custom_k is not None:
            return self.custom_k.n_s
        if self.family == "symmetric_d3_spinhalf":
            return 2
        return 1


def config_hash(config: ExperimentConfig) -> str:
    """Reproducible SHA-256 of the canonical JSON form of a config."""
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data or {})
    except PydanticValidationError as e:
        raise ConfigError(f"Invalid experiment config: {e}") from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load an experiment config from a YAML document.

    Args:
        path: Config file location

    Returns:
        ExperimentConfig: Validated configuration

    Raises:
        ConfigError: If the file is missing, unparsable or invalid
    """
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed YAML in {path}: {e}") from e
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"Config {path} must be a mapping at top level")
    return parse_config(data or {})


def apply_overrides(
    config: ExperimentConfig,
    tolerances: Sequence[str] = (),
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    out_dir: Optional[str] = None,
) -> ExperimentConfig:
    """Return a copy of ``config`` with command-line overrides applied."""
    data = config.model_dump()
    for item in tolerances:
        name, sep, raw = item.partition("=")
        name = name.strip()
        if not sep or name not in Tolerances.model_fields:
            raise ConfigError(f"Unknown tolerance override '{item}'")
        try:
            data["tolerances"][name] = float(raw)
        except ValueError as e:
            raise ConfigError(f"Tolerance '{name}' needs a number, got '{raw}'") from e
    if seed is not None:
        data["seed"] = seed
    if workers is not None:
        data["workers"] = workers
    if out_dir is not None:
        data["output"]["dir"] = out_dir
    return parse_config(data)
