from __future__ import annotations

import itertools

import numpy as np
import pytest
import scipy.linalg

from etaform.numerics import CliffordFormMatrix
from etaform.symplectic import random_transverse_triple, standard_space


def random_hermitian(n, rng, scale=1.0):
    M = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (M + M.conj().T) / 2


def random_triple(l, seed):
    space = standard_space(l)
    return space, random_transverse_triple(space, seed)


# ---- brute-force embedding of Lambda(R^d) (x) C_1 into ordinary matrices ----


def _creation(d, i):
    dim = 2**d
    a = np.zeros((dim, dim))
    for S in range(dim):
        if S >> i & 1:
            continue
        sign = (-1) ** bin(S & ((1 << i) - 1)).count("1")
        a[S | (1 << i), S] = sign
    return a


def grassmann_embed(X):
    """Represent ``X`` as a matrix on ``C^2 (x) Lambda(R^d) (x) C^n``."""
    d, n = X.degree, X.size
    parity = np.diag([(-1) ** bin(S).count("1") for S in range(2**d)])
    sigma = np.kron(np.array([[0.0, 1.0], [1.0, 0.0]]), parity)
    one = np.eye(2 * 2**d)
    out = np.zeros((2 * 2**d * n,) * 2, dtype=complex)
    for (I, c), M in X.blocks.items():
        R = one.copy()
        for i in I:
            R = R @ np.kron(np.eye(2), _creation(d, i))
        if c:
            R = R @ sigma
        out += np.kron(R, M)
    return out


def grassmann_extract(R, d, n):
    """Blocks of the element represented by ``R`` (read off its action on the vacuum)."""
    out = CliffordFormMatrix(d, n)
    dim = 2**d
    for r in range(d + 1):
        for I in itertools.combinations(range(d), r):
            S = sum(1 << i for i in I)
            for c in (0, 1):
                row = (c * dim + S) * n
                out[(I, c)] = R[row:row + n, 0:n]
    return out


def brute_exp(H, N):
    d, n = N.degree, N.size
    full = N + CliffordFormMatrix.scalar(H, d)
    return grassmann_extract(scipy.linalg.expm(-grassmann_embed(full)), d, n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
