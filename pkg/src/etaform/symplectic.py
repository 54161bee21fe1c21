"""Hermitian symplectic spaces and their Lagrangian subspaces.

Conventions: the inner product ``(u, v) = v^H u`` is linear in the first slot and
``Omega(x, y) = (I x, y)``.  A Lagrangian ``L`` is stored as an orthonormal
``2l x l`` frame; its graph unitary ``phi`` satisfies
``L = {v + phi v : v in V+}`` in the fixed frames of the ``+-i`` eigenspaces of ``I``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import unitary_group

from .config import TOLERANCES
from .errors import ContractViolation, Degenerate
from .numerics import hermitian_eigs


@dataclass(frozen=True)
class SymplecticSpace:
    """Complex Hilbert space ``C^{2l}`` with complex structure ``I``."""

    l: int
    I: np.ndarray = field(repr=False)
    Vplus: np.ndarray = field(repr=False)
    Vminus: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return 2 * self.l

    def omega(self, x, y):
        """``Omega(x, y) = y^H I x``; accepts vectors or column stacks."""
        return np.conj(y).T @ (self.I @ x)

    def residuals(self):
        n = self.dim
        I = self.I
        return {
            "anti_hermitian": float(np.linalg.norm(I + I.conj().T)),
            "square": float(np.linalg.norm(I @ I + np.eye(n))),
            "trace": float(abs(np.trace(I))),
            "frames": float(
                np.linalg.norm(np.hstack([self.Vplus, self.Vminus]).conj().T @ np.hstack([self.Vplus, self.Vminus]) - np.eye(n))
            ),
        }


def standard_space(l: int) -> SymplecticSpace:
    """``V = C^{2l}`` with ``I = diag(i 1_l, -i 1_l)``."""
    if l < 1:
        raise ContractViolation("half dimension must be positive")
    I = np.diag(np.concatenate([np.full(l, 1j), np.full(l, -1j)]))
    E = np.eye(2 * l, dtype=complex)
    return SymplecticSpace(l, I, E[:, :l], E[:, l:])


def space_from_complex_structure(I, tol=1e-10) -> SymplecticSpace:
    """Build a space from an arbitrary complex structure (``I^H = -I``, ``I^2 = -1``, ``tr I = 0``)."""
    I = np.asarray(I, dtype=complex)
    n = I.shape[0]
    if n % 2 or I.shape != (n, n):
        raise ContractViolation(f"complex structure must be square of even size, got {I.shape}")
    bad = {
        "anti_hermitian": np.linalg.norm(I + I.conj().T),
        "square": np.linalg.norm(I @ I + np.eye(n)),
        "trace": abs(np.trace(I)),
    }
    for name, r in bad.items():
        if r > tol * max(1.0, n):
            raise ContractViolation(f"complex structure fails {name} check (residual {r:.3e})")
    # -iI is hermitian with eigenvalues -1 (on V-) and +1 (on V+)
    eig = hermitian_eigs(-1j * I)
    l = n // 2
    return SymplecticSpace(l, I, eig.vectors[:, l:], eig.vectors[:, :l])


def _space_for(F, space):
    return standard_space(F.shape[0] // 2) if space is None else space


def orthonormal_frame(M):
    """Orthonormal basis of the column span of ``M`` (full column rank assumed)."""
    Q, _ = np.linalg.qr(np.asarray(M, dtype=complex))
    return Q


def projector(F):
    return F @ F.conj().T


def subspace_distance(F, G):
    """Spectral norm of the difference of orthogonal projectors."""
    return float(np.linalg.norm(projector(F) - projector(G), 2))


def is_lagrangian(space, F, tol=1e-9):
    """Return ``(flag, residual)`` where residual is ``||F^H I F||``."""
    F = np.asarray(F, dtype=complex)
    if F.shape != (space.dim, space.l):
        return False, float("inf")
    orth = np.linalg.norm(F.conj().T @ F - np.eye(space.l))
    if orth > 1e-8:
        raise ContractViolation(f"frame columns are not orthonormal (residual {orth:.3e})")
    res = float(np.linalg.norm(F.conj().T @ (space.I @ F)))
    return res <= tol, res


def check_lagrangian(space, F, name="L", tol=1e-9):
    ok, res = is_lagrangian(space, F, tol)
    if not ok:
        raise ContractViolation(f"{name} is not Lagrangian (residual {res:.3e})")
    return F


def complex_rotate(space, F):
    """Frame of ``I L``."""
    return space.I @ F


def transversality_gap(L0, L1):
    """Smallest singular value of ``[F0 | F1]``; zero iff the subspaces meet."""
    return float(np.linalg.svd(np.hstack([L0, L1]), compute_uv=False)[-1])


def graph_unitary(space, L):
    """Graph unitary ``phi`` with ``L = {v + phi v : v in V+}``."""
    a = space.Vplus.conj().T @ L
    c = space.Vminus.conj().T @ L
    return np.linalg.solve(a.T, c.T).T


def lagrangian_from_graph(space, phi):
    phi = np.asarray(phi, dtype=complex).reshape(space.l, space.l)
    return (space.Vplus + space.Vminus @ phi) / np.sqrt(2)


def transport_unitary(space, L_from, L_to):
    """Unitary commuting with ``I`` mapping ``L_from`` onto ``L_to``.

    Acts as the identity on ``V+`` and as ``phi_to phi_from^H`` on ``V-``.
    """
    u = graph_unitary(space, L_to) @ graph_unitary(space, L_from).conj().T
    return space.Vplus @ space.Vplus.conj().T + space.Vminus @ u @ space.Vminus.conj().T


def transport_unitary_alt(space, L_from, L_to):
    """Alternative transport acting as ``phi_to^H phi_from`` on ``V+`` and trivially on ``V-``."""
    u = graph_unitary(space, L_to).conj().T @ graph_unitary(space, L_from)
    return space.Vplus @ u @ space.Vplus.conj().T + space.Vminus @ space.Vminus.conj().T


def projection_along(L, Lp, tol=None):
    """Projection onto ``Lp`` with kernel ``L``."""
    tol = TOLERANCES["transversality"] if tol is None else tol
    gap = transversality_gap(L, Lp)
    if gap < tol:
        raise Degenerate(f"subspaces are not transverse (gap {gap:.3e})", residual=gap)
    k = Lp.shape[1]
    M = np.hstack([Lp, L])
    return Lp @ np.linalg.inv(M)[:k, :]


def q_form(L, Lp, space=None):
    """Matrix of ``Q(x, y) = Omega(P x, y) - Omega(x, y)/2`` where ``P`` projects onto ``Lp`` along ``L``.

    The form is ``Q(x, y) = y^H Q x``; it is hermitian for Lagrangian inputs.
    """
    space = _space_for(L, space)
    P = projection_along(L, Lp)
    return space.I @ (P - 0.5 * np.eye(space.dim))


def lagrangian_from_qform(L, Q, space=None, tol=1e-8):
    """Recover ``Lp`` from ``Q = q_form(L, Lp)``.

    The projection is ``P = 1/2 - I Q`` and ``Lp`` is its range.
    """
    space = _space_for(L, space)
    Q = np.asarray(Q, dtype=complex)
    herm = np.linalg.norm(Q - Q.conj().T)
    if herm > tol * max(1.0, np.linalg.norm(Q)):
        raise ContractViolation(f"Q is not hermitian (residual {herm:.3e})")
    yu1 = np.linalg.norm(Q @ L + 0.5 * space.I @ L)
    if yu1 > tol * max(1.0, np.linalg.norm(Q)):
        raise ContractViolation(f"Q does not restrict to -Omega/2 on L (residual {yu1:.3e})")
    P = 0.5 * np.eye(space.dim) - space.I @ Q
    U, s, _ = np.linalg.svd(P)
    l = space.l
    if s[l - 1] < 1e-6 or (len(s) > l and s[l] > 1e-6 * s[0]) or np.linalg.norm(P @ P - P) > 1e-6 * max(1.0, s[0]):
        raise Degenerate("recovered projection has no rank-l unit eigenspace")
    return U[:, :l]


def affine_path(L, Lp0, Lp1, r, space=None):
    """Point ``r`` of the straight segment between ``Lp0`` and ``Lp1`` among Lagrangians transverse to ``L``."""
    space = _space_for(L, space)
    Q = (1 - r) * q_form(L, Lp0, space) + r * q_form(L, Lp1, space)
    return lagrangian_from_qform(L, 0.5 * (Q + Q.conj().T), space)


def graph_over_il0(L0, L2, space=None, tol=None):
    """Write ``L2 = {B x + x : x in I L0}`` and return ``BI`` restricted to ``L0``.

    The result is the ``l x l`` matrix of ``BI`` in the frame ``L0``; it is
    hermitian whenever ``L2`` is Lagrangian.  ``L2`` must be transverse to ``L0``.
    """
    space = _space_for(L0, space)
    tol = TOLERANCES["transversality"] if tol is None else tol
    IL0 = space.I @ L0
    gap = transversality_gap(L0, L2)
    if gap < tol:
        raise Degenerate(f"L2 meets L0 (gap {gap:.3e}); no graph over I L0", residual=gap)
    a = L0.conj().T @ L2
    c = IL0.conj().T @ L2
    # columns of L2 are L0 a + (I L0) c, so B (I L0) c = L0 a and BI = a c^{-1} on L0
    return np.linalg.solve(c.T, a.T).T


def lagrangian_from_bi(L0, M, space=None):
    """Inverse of :func:`graph_over_il0`: ``L2 = span(L0 M + I L0)``."""
    space = _space_for(L0, space)
    return orthonormal_frame(L0 @ M + space.I @ L0)


def haar_unitary(n, rng):
    return np.atleast_2d(unitary_group.rvs(n, random_state=rng)) if n > 1 else np.exp(2j * np.pi * rng.random()) * np.ones((1, 1))


def random_lagrangian(space, seed):
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return lagrangian_from_graph(space, haar_unitary(space.l, rng))


def random_transverse_triple(space, seed, min_gap=0.05, max_draws=1000):
    """Three Lagrangians with pairwise transversality gaps at least ``min_gap``."""
    rng = np.random.default_rng(seed)
    for _ in range(max_draws):
        Ls = [random_lagrangian(space, rng) for _ in range(3)]
        gaps = [transversality_gap(Ls[i], Ls[j]) for i, j in ((0, 1), (1, 2), (2, 0))]
        if min(gaps) >= min_gap:
            return tuple(Ls)
    raise Degenerate(f"no triple with gap >= {min_gap} after {max_draws} draws")


def direct_sum(spaces_frames):
    """Block direct sum of Lagrangians living in standard spaces."""
    l = sum(F.shape[1] for F in spaces_frames)
    out = np.zeros((2 * l, l), dtype=complex)
    off = 0
    for F in spaces_frames:
        k = F.shape[1]
        out[off:off + k, off:off + k] = F[:k]
        out[l + off:l + off + k, off:off + k] = F[k:]
        off += k
    return out
