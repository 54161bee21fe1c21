"""Triple index of three Lagrangians and related bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TOLERANCES
from .errors import Ambiguous, ContractViolation, Degenerate
from .numerics import hermitian_eigs, signature
from .symplectic import (
    _space_for,
    graph_over_il0,
    graph_unitary,
    lagrangian_from_bi,
    projection_along,
    transversality_gap,
)


@dataclass(frozen=True)
class TripleIndex:
    n: int
    m: int
    q_matrix: np.ndarray

    @property
    def tau0(self):
        return self.n - self.m


@dataclass(frozen=True)
class SplitFrames:
    Fplus: np.ndarray
    Fminus: np.ndarray


def _check_transverse(Ls, tol=None):
    tol = TOLERANCES["transversality"] if tol is None else tol
    for i, j in ((0, 1), (1, 2), (2, 0)):
        gap = transversality_gap(Ls[i], Ls[j])
        if gap < tol:
            raise Degenerate(f"L{i} and L{j} are not transverse (gap {gap:.3e})", residual=gap)


def triple_form(L0, L1, L2, space=None):
    """Matrix of ``Q(x0) = Omega(x1, x2)`` on ``L0`` where ``x0 = x1 + x2``, ``xi in Li``.

    ``q_matrix[i, j]`` is the sesquilinear form evaluated on frame columns so
    that ``Q(L0 a) = a^H q_matrix a``.
    """
    space = _space_for(L0, space)
    _check_transverse((L0, L1, L2))
    X1 = projection_along(L2, L1) @ L0
    X2 = L0 - X1
    Q = X2.conj().T @ (space.I @ X1)
    asym = np.linalg.norm(Q - Q.conj().T)
    if asym > 1e-8 * max(1.0, np.linalg.norm(Q)):
        raise ContractViolation(f"triple form is not hermitian (residual {asym:.3e}); inputs not Lagrangian?")
    Q = 0.5 * (Q + Q.conj().T)
    n, m = signature(Q)
    return TripleIndex(n, m, Q)


def maslov_index(L0, L1, L2, space=None):
    return triple_form(L0, L1, L2, space).tau0


def split_l0(L0, L1, L2, space=None):
    """Frames of the positive and negative eigenspaces of the triple form inside ``L0``."""
    t = triple_form(L0, L1, L2, space)
    eig = hermitian_eigs(t.q_matrix)
    V = L0 @ eig.vectors
    return SplitFrames(V[:, eig.values > 0], V[:, eig.values < 0])


@dataclass(frozen=True)
class NormalizationTrace:
    params: np.ndarray
    indices: list
    min_gaps: list
    A_final: np.ndarray


def _triple_from_a(L0, A1, A2, space):
    # L_i = {x + A_i I x : x in I L0} corresponds to BI = -A_i on L0
    return L0, lagrangian_from_bi(L0, -A1, space), lagrangian_from_bi(L0, -A2, space)


def normalize_triple(L0, L1, L2, steps=20, space=None):
    """Homotope a triple to the form ``A1 = -A2 = A`` with ``A**2 = 1``.

    ``L1, L2`` are written as ``{x + A_i I x : x in I L0}``.  The first stage is
    ``A_i(t) = (1 - t) (A_i - A_{3-i}) / 2 + t A_i`` run from ``t = 1`` down to
    ``t = 0``; the second stage deforms ``A`` radially to ``A |A|^{-1}``.
    Returns the index and minimal transversality gap at every sampled step;
    ``params`` runs over ``[0, 1]`` in the first stage and ``(1, 2]`` in the second.
    """
    space = _space_for(L0, space)
    _check_transverse((L0, L1, L2))
    A1 = -graph_over_il0(L0, L1, space)
    A2 = -graph_over_il0(L0, L2, space)
    A1 = 0.5 * (A1 + A1.conj().T)
    A2 = 0.5 * (A2 + A2.conj().T)
    params, indices, gaps = [], [], []

    def record(param, B1, B2):
        Ls = _triple_from_a(L0, B1, B2, space)
        g = min(transversality_gap(Ls[i], Ls[j]) for i, j in ((0, 1), (1, 2), (2, 0)))
        if g < TOLERANCES["transversality"]:
            raise Degenerate(f"normalization path lost transversality at step {param}", residual=g)
        params.append(param)
        indices.append(maslov_index(*Ls, space=space))
        gaps.append(g)

    for t in np.linspace(1.0, 0.0, steps + 1):
        B1 = (1 - t) * 0.5 * (A1 - A2) + t * A1
        B2 = (1 - t) * 0.5 * (A2 - A1) + t * A2
        record(1.0 - t, B1, B2)
    A = 0.5 * (A1 - A2)
    eig = hermitian_eigs(A)
    absinv = (eig.vectors / np.abs(eig.values)) @ eig.vectors.conj().T
    for r in np.linspace(0.0, 1.0, steps + 1)[1:]:
        B = A @ ((1 - r) * np.eye(len(A)) + r * absinv)
        record(1.0 + r, B, -B)
    A_final = A @ absinv
    A_final = 0.5 * (A_final + A_final.conj().T)
    return NormalizationTrace(np.asarray(params), indices, gaps, A_final)


def circle_parameter(L, space=None):
    """Angle ``theta`` in ``[0, 2 pi)`` with ``L = C(e^{i theta}, 1)`` (``l = 1`` only)."""
    space = _space_for(L, space)
    if space.l != 1:
        raise ContractViolation("circle parameter is defined for l = 1 only")
    phi = graph_unitary(space, L)[0, 0]
    return float(np.mod(-np.angle(phi), 2 * np.pi))


def winding_number(thetas):
    """Winding number of a closed loop given by circle parameters sampled in order."""
    thetas = np.asarray(thetas, dtype=float)
    steps = np.diff(np.append(thetas, thetas[0]))
    steps = np.mod(steps + np.pi, 2 * np.pi) - np.pi
    if np.any(np.abs(steps) >= np.pi / 2):
        raise Ambiguous("loop step of at least pi/2; refine the sampling")
    return int(round(steps.sum() / (2 * np.pi)))


def component_class(L0, L1, L2, space=None, tol=1e-8):
    """``+1`` if the circle parameters are in cyclic order ``theta0 < theta1 < theta2``, else ``-1``."""
    t = [circle_parameter(L, space) for L in (L0, L1, L2)]
    d1 = np.mod(t[1] - t[0], 2 * np.pi)
    d2 = np.mod(t[2] - t[0], 2 * np.pi)
    if min(d1, d2, abs(d1 - d2), 2 * np.pi - max(d1, d2)) < tol:
        raise Degenerate("coincident circle parameters")
    return 1 if d1 < d2 else -1


def model_triple():
    """Frames of the one-dimensional model triple spanned by (1,1), (-1,1), (-i,1)."""
    gens = [np.array([[1], [1]]), np.array([[-1], [1]]), np.array([[-1j], [1]])]
    return tuple(g.astype(complex) / np.sqrt(2) for g in gens)

