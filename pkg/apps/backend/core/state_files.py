"""
State File Module

This module reads and writes physical pairing matrices. The text format is
a ``#`` header followed by M rows of 2M numbers (real and imaginary parts
interleaved) in 17-significant-digit scientific notation, optionally
followed by the 2M x 2M covariance matrix. The ``.npz`` format stores the
same content through numpy.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from apps.backend.core.config import STATE_FILE_VERSION
from apps.backend.core.covariance import CovarianceMatrix
from apps.backend.core.errors import GeometryError, StateFileError, ValidationError
from apps.backend.core.gaussian import PairingState
from apps.backend.core.lattice import LatticeGeometry, physical_modes
from apps.backend.monitoring.log import get_logger

log = get_logger(__name__)

FORMAT_NAME = "gaussian-peps-state"
NUMBER_FORMAT = "%.16e"
ORDERING = "site-row-major,spin"


@dataclass(frozen=True, eq=False)
class StateFile:
    """Contents of a state file."""
    state: PairingState
    geom: LatticeGeometry
    n_s: int
    model: Optional[str] = None
    covariance: Optional[CovarianceMatrix] = None


def _header(record: StateFile) -> Dict[str, Any]:
    scalar = record.state.scalar
    return {
        "format": FORMAT_NAME,
        "version": STATE_FILE_VERSION,
        "ordering": ORDERING,
        "dim": record.geom.dim,
        "extent": " ".join(str(n) for n in record.geom.extent),
        "spacing": repr(float(record.geom.spacing)),
        "N_s": record.n_s,
        "modes": record.state.num_modes,
        "scalar": "none" if scalar is None else _format_complex(complex(scalar)),
        "model": record.model or "",
        "covariance": int(record.covariance is not None),
    }


def _format_complex(value: complex) -> str:
    return f"{NUMBER_FORMAT % value.real} {NUMBER_FORMAT % value.imag}"


def _interleave(T: np.ndarray) -> np.ndarray:
    out = np.empty((T.shape[0], 2 * T.shape[1]))
    out[:, 0::2] = T.real
    out[:, 1::2] = T.imag
    return out


def write_state(
    path: Union[str, Path],
    state: PairingState,
    geom: LatticeGeometry,
    n_s: int = 1,
    model: Optional[str] = None,
    covariance: Optional[CovarianceMatrix] = None,
) -> Path:
    """
    Write a physical state to ``path``; the suffix selects the format.

    Args:
        path: Destination (``.npz`` for binary, anything else for text)
        state: Pairing state over the physical modes of ``geom``
        geom: Lattice geometry
        n_s: Physical modes per site
        model: Optional model label stored in the header
        covariance: Optional covariance matrix to store alongside

    Returns:
        Path: The written file

    Raises:
        StateFileError: If the state does not match the geometry or the file cannot be written
    """
    path = Path(path)
    expected = geom.num_sites * n_s
    if state.num_modes != expected:
        raise StateFileError(f"State has {state.num_modes} modes, geometry needs {expected}")
    if covariance is not None and covariance.num_modes != expected:
        raise StateFileError("Covariance matrix does not match the state")

    record = StateFile(state, geom, n_s, model, covariance)
    header = _header(record)
    T = state.dense()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.suffix == ".npz":
            arrays = {"T": T, "header": np.array(json.dumps(header))}
            if covariance is not None:
                arrays["covariance"] = covariance.gamma
            with path.open("wb") as handle:
                np.savez(handle, **arrays)
        else:
            rows = _interleave(T)
            if covariance is not None:
                rows = np.vstack([rows, covariance.gamma])
            text_header = "\n".join(f"{key}: {value}" for key, value in header.items())
            np.savetxt(path, rows, fmt=NUMBER_FORMAT, header=text_header, comments="# ")
    except OSError as e:
        raise StateFileError(f"Cannot write state file {path}: {e}") from e
    log.info("Wrote state file", path=str(path), modes=state.num_modes, covariance=covariance is not None)
    return path


def _parse_text_header(path: Path) -> Dict[str, str]:
    header: Dict[str, str] = {}
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].partition(":")
            if sep:
                header[key.strip()] = value.strip()
    return header


def _geometry_from_header(header: Dict[str, Any]) -> LatticeGeometry:
    try:
        extent = tuple(int(n) for n in str(header["extent"]).split())
        return LatticeGeometry(dim=int(header["dim"]), extent=extent, spacing=float(header["spacing"]))
    except (KeyError, ValueError) as e:
        raise StateFileError(f"State file header is missing geometry fields: {e}") from e
    except (GeometryError, ValidationError) as e:
        raise StateFileError(f"State file geometry is invalid: {e}") from e


def _parse_scalar(raw: str) -> Optional[complex]:
    if raw == "none":
        return None
    parts = raw.split()
    if len(parts) != 2:
        raise StateFileError(f"Malformed scalar '{raw}'")
    return complex(float(parts[0]), float(parts[1]))


def read_state(path: Union[str, Path]) -> StateFile:
    """
    Load a state file written by :func:`write_state`.

    Raises:
        StateFileError: If the file is missing, malformed or inconsistent
    """
    path = Path(path)
    if not path.exists():
        raise StateFileError(f"State file {path} does not exist")
    covariance = None
    try:
        if path.suffix == ".npz":
            with np.load(path, allow_pickle=False) as data:
                header = json.loads(str(data["header"]))
                T = np.array(data["T"], dtype=np.complex128)
                if "covariance" in data.files:
                    covariance = np.array(data["covariance"], dtype=np.float64)
        else:
            header = _parse_text_header(path)
            rows = np.loadtxt(path, comments="#", ndmin=2)
            M = int(header.get("modes", -1))
            if rows.shape[1] != 2 * M:
                raise StateFileError(f"Expected {2 * M} columns, found {rows.shape[1]}")
            T = rows[:M, 0::2] + 1j * rows[:M, 1::2]
            if int(header.get("covariance", 0)):
                covariance = rows[M:]
    except (OSError, ValueError, KeyError) as e:
        raise StateFileError(f"Cannot read state file {path}: {e}") from e

    if header.get("format") != FORMAT_NAME:
        raise StateFileError(f"{path} is not a {FORMAT_NAME} file")
    if str(header.get("version")) != STATE_FILE_VERSION:
        raise StateFileError(f"Unsupported state file version {header.get('version')}")

    geom = _geometry_from_header(header)
    n_s = int(header["N_s"])
    M = int(header["modes"])
    if T.shape != (M, M) or M != geom.num_sites * n_s:
        raise StateFileError(f"Pairing matrix shape {T.shape} does not match header ({M} modes)")
    try:
        state = PairingState(T, physical_modes(geom, n_s), _parse_scalar(str(header["scalar"])))
        cov = None if covariance is None else CovarianceMatrix(covariance, state.modes)
    except ValidationError as e:
        raise StateFileError(f"State file {path} holds an invalid state: {e}") from e
    log.debug("Read state file", path=str(path), modes=M)
    return StateFile(state, geom, n_s, header.get("model") or None, cov)
