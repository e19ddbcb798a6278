"""
Pfaffian Module

This module computes Pfaffians of complex antisymmetric matrices through a
Parlett-Reid skew tridiagonalization with partial pivoting.
"""

from typing import Tuple

import numpy as np

from apps.backend.core.config import ANTISYMMETRY_TOL
from apps.backend.core.errors import ValidationError


def check_antisymmetric(A: np.ndarray, tol: float = ANTISYMMETRY_TOL, name: str = "matrix") -> np.ndarray:
    """
    Validate that a matrix is square and antisymmetric.

    Args:
        A: Candidate matrix
        tol: Tolerance relative to the largest entry
        name: Label used in error messages

    Returns:
        np.ndarray: The input as a 2-d array

    Raises:
        ValidationError: If the matrix is not square or not antisymmetric
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {A.shape}")
    if A.size == 0:
        return A
    scale = max(1.0, float(np.max(np.abs(A))))
    deviation = float(np.max(np.abs(A + A.T)))
    if deviation > tol * scale:
        raise ValidationError(
            f"{name} is not antisymmetric (max |A + A^T| = {deviation:.3e})",
            details={"deviation": deviation},
        )
    return A


def _working_copy(A: np.ndarray) -> np.ndarray:
    return np.array(A, dtype=np.result_type(A.dtype, np.float64), copy=True)


def _eliminate(A: np.ndarray, k: int) -> Tuple[bool, bool]:
    """Pivot and eliminate column k; return (swapped, nonzero pivot)."""
    n = A.shape[0]
    kp = k + 1 + int(np.abs(A[k + 1:, k]).argmax())
    swapped = kp != k + 1
    if swapped:
        A[[k + 1, kp], k:] = A[[kp, k + 1], k:]
        A[k:, [k + 1, kp]] = A[k:, [kp, k + 1]]
    if A[k + 1, k] == 0.0:
        return swapped, False
    if k + 2 < n:
        tau = A[k, k + 2:] / A[k, k + 1]
        A[k + 2:, k + 2:] += np.outer(tau, A[k + 2:, k + 1])
        A[k + 2:, k + 2:] -= np.outer(A[k + 2:, k + 1], tau)
    return swapped, True


def pfaffian(A: np.ndarray, check: bool = True):
    """
    Pfaffian of an antisymmetric matrix.

    Args:
        A: Antisymmetric matrix
        check: Validate antisymmetry before computing

    Returns:
        The Pfaffian (1 for an empty matrix, 0 for odd dimension)

    Raises:
        ValidationError: If the input is not antisymmetric
    """
    A = check_antisymmetric(A) if check else np.asarray(A)
    n = A.shape[0]
    if n == 0:
        return A.dtype.type(1.0) if A.dtype.kind in "fc" else 1.0
    if n % 2:
        return A.dtype.type(0.0) if A.dtype.kind in "fc" else 0.0

    A = _working_copy(A)
    result = A.dtype.type(1.0)
    for k in range(0, n - 1, 2):
        swapped, ok = _eliminate(A, k)
        if swapped:
            result = -result
        if not ok:
            return A.dtype.type(0.0)
        result *= A[k, k + 1]
    return result


def slogpf(A: np.ndarray, check: bool = True) -> Tuple[complex, float]:
    """Return (phase, log|Pf(A)|) so that Pf(A) = phase * exp(logabs)."""
    A = check_antisymmetric(A) if check else np.asarray(A)
    n = A.shape[0]
    if n == 0:
        return 1.0, 0.0
    if n % 2:
        return 0.0, -np.inf

    A = _working_copy(A)
    phase = 1.0 + 0.0j
    logabs = 0.0
    for k in range(0, n - 1, 2):
        swapped, ok = _eliminate(A, k)
        if swapped:
            phase = -phase
        if not ok:
            return 0.0, -np.inf
        pivot = A[k, k + 1]
        logabs += float(np.log(abs(pivot)))
        phase *= pivot / abs(pivot)
    if np.isrealobj(A):
        phase = float(np.real(phase))
    return phase, logabs
