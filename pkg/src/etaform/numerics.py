"""Dense complex linear algebra and the graded form algebra.

The algebra used for superconnection computations is

    Lambda(R^d)  (x)  C_1  (x)  End(C^n),

where Lambda(R^d) are constant-coefficient differential forms on a d-dimensional
chart and C_1 is the Clifford algebra generated by a single odd element sigma
with sigma**2 = 1.  Elements are stored blockwise: one complex matrix per
(form multi-index, Clifford index) pair.
"""

from __future__ import annotations

import itertools
import math
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .config import KAPPA, TOLERANCES
from .errors import BranchCut, ContractViolation, Degenerate


class HermitianEig(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray


def _norm(M):
    return float(np.linalg.norm(M))


def hermitian_eigs(M) -> HermitianEig:
    """Eigendecomposition of a hermitian matrix, eigenvalues ascending."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ContractViolation("matrix has non-finite entries")
    asym = _norm(M - M.conj().T)
    if asym > TOLERANCES["hermitian_input"] * max(_norm(M), 1e-300):
        raise ContractViolation(f"matrix is not hermitian (residual {asym:.3e})")
    values, vectors = np.linalg.eigh(0.5 * (M + M.conj().T))
    return HermitianEig(values, vectors)


def unitary_eigs(U):
    """Eigenvalues and an orthonormal eigenbasis of a unitary matrix (via Schur)."""
    T, Z = scipy.linalg.schur(np.asarray(U, dtype=complex), output="complex")
    return np.diag(T).copy(), Z


def unitary_log(U, margin=None):
    """Principal logarithm of a unitary matrix.

    Returns an anti-hermitian ``A`` with eigenphases in (-pi, pi) and
    ``expm(A) == U``.  Raises :class:`BranchCut` if an eigenphase lies within
    ``margin`` of pi.
    """
    U = np.asarray(U, dtype=complex)
    margin = TOLERANCES["branch_cut_margin"] if margin is None else margin
    n = U.shape[0]
    res = _norm(U.conj().T @ U - np.eye(n))
    if res > TOLERANCES["unitary_input"]:
        raise ContractViolation(f"matrix is not unitary (residual {res:.3e})")
    u, Z = unitary_eigs(U)
    phases = np.angle(u)
    worst = np.pi - np.max(np.abs(phases), initial=0.0)
    if worst < margin:
        raise BranchCut(f"eigenphase within {worst:.3e} of pi")
    A = (Z * (1j * phases)) @ Z.conj().T
    return 0.5 * (A - A.conj().T)


def signature(H, tol=None):
    """Inertia ``(n_plus, n_minus)`` of a hermitian matrix.

    ``tol`` defaults to ``1e-8 * ||H||``.  Any eigenvalue with modulus at most
    ``tol`` is treated as a zero mode and raises :class:`Degenerate`.
    """
    eig = hermitian_eigs(H)
    if tol is None:
        tol = TOLERANCES["signature_relative"] * max(np.max(np.abs(eig.values), initial=0.0), 1e-300)
    small = np.abs(eig.values) <= tol
    if np.any(small):
        raise Degenerate(
            f"form has {int(small.sum())} eigenvalue(s) within {tol:.1e} of zero",
            residual=float(np.min(np.abs(eig.values))),
        )
    return int(np.sum(eig.values > tol)), int(np.sum(eig.values < -tol))


# --------------------------------------------------------------------------
# divided differences of exp

_SERIES_TERMS = 24


def _dd_series(z):
    # z: (M, k+1) with small spread; Taylor series about the mean
    k = z.shape[-1] - 1
    c = z.mean(axis=-1)
    w = z - c[:, None]
    # complete homogeneous symmetric polynomials h_m(w_0..w_k)
    h = np.ones((z.shape[0], k + 1), dtype=z.dtype)
    total = np.zeros(z.shape[0], dtype=z.dtype)
    fact = float(math.factorial(k))
    total += h[:, -1] / fact
    for m in range(1, _SERIES_TERMS):
        hn = np.empty_like(h)
        hn[:, 0] = h[:, 0] * w[:, 0]
        for j in range(1, k + 1):
            hn[:, j] = h[:, j] * w[:, j] + hn[:, j - 1]
        # h_m for the first j+1 points is hn[:, j]; note h_m^{(j)} = h_m^{(j-1)} + w_j h_{m-1}^{(j)}
        h = hn
        fact *= m + k
        total += h[:, -1] / fact
    return np.exp(c) * total


def dd_exp(z):
    """Divided differences ``exp[z_0, ..., z_k]`` along the last axis.

    Equal to the simplex integral of ``exp(sum u_i z_i)``.  Real points only.
    Clusters with spread below one are summed by a Taylor series about their
    mean; wider sets use the recursive definition on sorted points.
    """
    z = np.asarray(z, dtype=float)
    shape = z.shape[:-1]
    z = z.reshape(-1, z.shape[-1])
    out = _dd_flat(z)
    return out.reshape(shape)


def _dd_flat(z):
    k = z.shape[-1] - 1
    if k == 0:
        return np.exp(z[:, 0])
    out = np.empty(z.shape[0])
    spread = np.ptp(z, axis=-1)
    small = spread < 1.0
    if np.any(small):
        out[small] = _dd_series(z[small])
    big = ~small
    if np.any(big):
        zs = np.sort(z[big], axis=-1)
        out[big] = (_dd_flat(zs[:, 1:]) - _dd_flat(zs[:, :-1])) / (zs[:, -1] - zs[:, 0])
    return out


def phi1_kernel(a, b, threshold=None):
    """Matrix ``K[i, j] = int_0^1 exp(-u a_i - (1-u) b_j) du`` for real vectors."""
    threshold = TOLERANCES["divided_difference_series"] if threshold is None else threshold
    a = np.asarray(a, dtype=float)[:, None]
    b = np.asarray(b, dtype=float)[None, :]
    w = b - a  # (e^{-a} - e^{-b}) / (b - a) = e^{-a} * (1 - e^{-w}) / w
    ea = np.exp(-a)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        direct = np.where(w >= 0, ea * (-np.expm1(-w)) / w, np.exp(-b) * np.expm1(w) / w)
    small = np.abs(w) < threshold
    if np.any(small):
        ws = np.broadcast_to(w, direct.shape)[small]
        es = np.broadcast_to(ea, direct.shape)[small]
        # 6-term Taylor of (1 - e^{-w}) / w
        series = 1 - ws / 2 + ws**2 / 6 - ws**3 / 24 + ws**4 / 120 - ws**5 / 720
        direct = np.array(direct)
        direct[small] = es * series
    return direct


# --------------------------------------------------------------------------
# graded algebra


def _mul_keys(k1, k2):
    """Product of basis elements (I, c)(J, c'); returns (sign, key) or (0, None)."""
    I, c1 = k1
    J, c2 = k2
    if set(I) & set(J):
        return 0, None
    sign = -1 if (c1 and len(J) % 2) else 1
    seq = list(I) + list(J)
    # parity of the sorting permutation
    inv = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    if inv % 2:
        sign = -sign
    return sign, (tuple(sorted(seq)), (c1 + c2) % 2)


class CliffordFormMatrix:
    """Matrix with coefficients in Lambda(R^d) (x) C_1.

    ``blocks`` maps ``(I, c)`` to an ``n x n`` complex array, where ``I`` is a
    sorted tuple of distinct form indices in ``range(d)`` and ``c`` is 0 (even)
    or 1 (coefficient of sigma).  Products follow the Koszul rule: sigma
    anticommutes with 1-forms.
    """

    def __init__(self, degree, size, blocks=None):
        if degree not in (0, 1, 2, 3):
            raise ContractViolation(f"form degree must be in 0..3, got {degree}")
        self.degree = degree
        self.size = size
        self.blocks = {}
        for key, X in (blocks or {}).items():
            self[key] = X

    @classmethod
    def scalar(cls, X, degree, clifford=0):
        X = np.asarray(X, dtype=complex)
        return cls(degree, X.shape[0], {((), clifford): X})

    def _check_key(self, key):
        I, c = key
        if c not in (0, 1) or any(i < 0 or i >= self.degree for i in I) or list(I) != sorted(set(I)):
            raise ContractViolation(f"invalid block key {key!r} for degree {self.degree}")

    def __getitem__(self, key):
        key = (tuple(key[0]), key[1])
        X = self.blocks.get(key)
        if X is None:
            return np.zeros((self.size, self.size), dtype=complex)
        return X

    def __setitem__(self, key, X):
        key = (tuple(key[0]), key[1])
        self._check_key(key)
        X = np.asarray(X, dtype=complex)
        if X.shape != (self.size, self.size):
            raise ContractViolation(f"block shape {X.shape} does not match size {self.size}")
        self.blocks[key] = X

    def keys(self):
        return self.blocks.keys()

    def copy(self):
        return CliffordFormMatrix(self.degree, self.size, {k: v.copy() for k, v in self.blocks.items()})

    def _compatible(self, other):
        if self.degree != other.degree or self.size != other.size:
            raise ContractViolation("incompatible CliffordFormMatrix operands")

    def __add__(self, other):
        self._compatible(other)
        out = self.copy()
        for k, X in other.blocks.items():
            out.blocks[k] = out.blocks[k] + X if k in out.blocks else X.copy()
        return out

    def __neg__(self):
        return CliffordFormMatrix(self.degree, self.size, {k: -v for k, v in self.blocks.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        return CliffordFormMatrix(self.degree, self.size, {k: scalar * v for k, v in self.blocks.items()})

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._compatible(other)
        out = CliffordFormMatrix(self.degree, self.size)
        for k1, X in self.blocks.items():
            for k2, Y in other.blocks.items():
                sign, key = _mul_keys(k1, k2)
                if sign == 0:
                    continue
                P = sign * (X @ Y)
                out.blocks[key] = out.blocks[key] + P if key in out.blocks else P
        return out

    def adjoint(self):
        """Graded adjoint; every basis monomial of distinct odd generators is self-adjoint."""
        return CliffordFormMatrix(self.degree, self.size, {k: v.conj().T for k, v in self.blocks.items()})

    @staticmethod
    def total_degree(key):
        return len(key[0]) + key[1]

    def homogeneous_parity(self):
        parities = {self.total_degree(k) % 2 for k, v in self.blocks.items() if np.any(v)}
        if len(parities) > 1:
            raise ContractViolation("element is not homogeneous")
        return parities.pop() if parities else 0

    def supercommutator(self, other):
        p, q = self.homogeneous_parity(), other.homogeneous_parity()
        return (self @ other) - ((-1) ** (p * q)) * (other @ self)

    def norm(self):
        return math.sqrt(sum(_norm(v) ** 2 for v in self.blocks.values()))

    def __repr__(self):
        return f"CliffordFormMatrix(degree={self.degree}, size={self.size}, keys={sorted(self.blocks)})"


def _chain_kernel(mats, z):
    # T[a0, ak] = sum_{a1..a_{k-1}} X1[a0,a1] ... Xk[a_{k-1},ak] * exp[z_a0, ..., z_ak]
    k = len(mats)
    n = z.shape[0]
    grids = np.meshgrid(*([z] * (k + 1)), indexing="ij")
    dd = dd_exp(np.stack(grids, axis=-1))
    letters = "abcdefgh"
    subs = ",".join(letters[i] + letters[i + 1] for i in range(k))
    expr = f"{subs},{letters[:k + 1]}->{letters[0]}{letters[k]}"
    return np.einsum(expr, *mats, dd, optimize=True) if n else np.zeros((0, 0))


def duhamel_exp(H, N, eig=None):
    """``exp(-(H + N))`` for hermitian ``H`` and a nilpotent graded part ``N``.

    Every block of ``N`` must carry form degree at least one, so the Volterra
    series stops after ``N.degree`` terms.  The simplex integrals are evaluated
    exactly in the eigenbasis of ``H`` through divided differences of exp.
    A precomputed eigendecomposition can be passed as ``eig``.
    """
    H = np.asarray(H, dtype=complex)
    eig = hermitian_eigs(H) if eig is None else eig
    h, V = eig.values, eig.vectors
    Vh = V.conj().T
    comps = []
    for key, X in N.blocks.items():
        if len(key[0]) == 0:
            if np.any(X):
                raise ContractViolation("nilpotent part has a degree-0 block")
            continue
        if np.any(X):
            comps.append((key, Vh @ X @ V))
    out = CliffordFormMatrix(N.degree, H.shape[0])
    out[((), 0)] = (V * np.exp(-h)) @ Vh
    z = -h

    def extend(seq_keys, seq_mats, sign, key):
        if seq_keys:
            T = _chain_kernel(seq_mats, z)
            term = ((-1) ** len(seq_mats)) * sign * (V @ T @ Vh)
            out.blocks[key] = out.blocks[key] + term if key in out.blocks else term
        for ck, X in comps:
            if key is None:
                s2, k2 = 1, ck
            else:
                s2, k2 = _mul_keys(key, ck)
                if s2 == 0:
                    continue
            extend(seq_keys + [ck], seq_mats + [X], sign * s2, k2)

    extend([], [], 1, None)
    return out


def supertrace_even(X, kappa=KAPPA):
    """Even-degree supertrace: ``kappa * tr`` of the sigma coefficient.

    Returns a dict mapping each even multi-index ``I`` (including ``()``) to a
    complex number.
    """
    result = {}
    for r in range(0, X.degree + 1, 2):
        for I in itertools.combinations(range(X.degree), r):
            result[I] = kappa * complex(np.trace(X[(I, 1)]))
    return result
