import numpy as np
import pytest
import scipy.linalg as la


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_complex(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_antisymmetric(rng, n, scale=0.5):
    A = scale * random_complex(rng, n, n)
    return A - A.T


def random_hermitian(rng, n, scale=1.0):
    A = scale * random_complex(rng, n, n)
    return A + A.conj().T


def random_unitary(rng, n):
    Q, R = la.qr(random_complex(rng, n, n))
    return Q * (np.diag(R) / np.abs(np.diag(R)))
