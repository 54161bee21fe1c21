"""Spectrum and eta invariant of ``D = I d/dt`` on ``[0, 1]`` with Lagrangian boundary conditions.

With graph unitaries ``phi0, phi1`` of the boundary Lagrangians, eigenfunctions
are ``f(t) = exp(-I lam t) w`` with ``exp(2 i lam)`` an eigenvalue of
``phi0^H phi1``.  Each eigenvalue ``u_j = exp(2 i theta_j)``, ``theta_j in (0, pi)``,
contributes the lattice ``theta_j + k pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.special import erfc

from .config import DEFAULTS, TOLERANCES
from .errors import Degenerate
from .numerics import hermitian_eigs, unitary_eigs
from .symplectic import _space_for, graph_unitary, lagrangian_from_graph
from .zeta import eta_lattice


@dataclass(frozen=True)
class BoundaryPhases:
    thetas: np.ndarray
    vectors: np.ndarray  # eigenvectors of phi0^H phi1 (columns, in V+ coordinates)
    phi0: np.ndarray


def boundary_phases(L0, L1, space=None, tol=None):
    space = _space_for(L0, space)
    tol = TOLERANCES["phase_degenerate"] if tol is None else tol
    phi0 = graph_unitary(space, L0)
    phi1 = graph_unitary(space, L1)
    u, v = unitary_eigs(phi0.conj().T @ phi1)
    if np.any(np.abs(u - 1) < tol):
        raise Degenerate(
            "boundary conditions are not transverse (eigenvalue 1 of phi0^H phi1)",
            residual=float(np.min(np.abs(u - 1))),
        )
    thetas = np.mod(np.angle(u), 2 * np.pi) / 2
    order = np.argsort(thetas, kind="stable")
    return BoundaryPhases(thetas[order], v[:, order], phi0)


def eta_from_phases(thetas):
    return float(np.sum(1 - 2 * np.asarray(thetas) / math.pi))


def eta_closed_form(L0, L1, space=None):
    """Eta invariant ``sum_j (1 - 2 theta_j / pi)``."""
    return eta_from_phases(boundary_phases(L0, L1, space).thetas)


def eta_zeta_oracle(L0, L1, z=0.0, space=None):
    """Continued eta function of the exact spectrum evaluated at ``z``."""
    return eta_lattice(z, boundary_phases(L0, L1, space).thetas)


def _lattice(thetas, kmax):
    k = np.arange(-kmax, kmax + 1)
    return (np.asarray(thetas)[:, None] + math.pi * k[None, :]).ravel()


def heat_integrand(lams, s):
    """``pi^{-1/2} s^{-1/2} sum lam exp(-s lam^2)`` for each ``s``."""
    s = np.atleast_1d(s)
    out = np.empty(s.shape)
    for i, si in enumerate(s):
        out[i] = np.sum(lams * np.exp(-si * lams**2)) / math.sqrt(math.pi * si)
    return out


def _heat_integral(lams, s_min, s_max, points):
    s = np.geomspace(s_min, s_max, points)
    f = heat_integrand(lams, s)
    # integrate in log s: ds = s dlog s
    body = simpson(f * s, x=np.log(s))
    tail = np.sum(np.sign(lams) * erfc(math.sqrt(s_max) * np.abs(lams)))
    return body + tail


def eta_heat_oracle(L0, L1, s_min=1e-4, s_max=50.0, points=200, kmax=10_000, space=None, richardson=True):
    """Eta invariant from the heat representation over the truncated lattice.

    The large-``s`` tail beyond ``s_max`` is added in closed form per eigenvalue
    (``sign(lam) erfc(sqrt(s_max) |lam|)``).  With ``richardson`` the result at
    ``s_min`` and ``s_min / 2`` is extrapolated linearly to ``s_min -> 0``.
    """
    lams = _lattice(boundary_phases(L0, L1, space).thetas, kmax)
    a = _heat_integral(lams, s_min, s_max, points)
    if not richardson:
        return float(a)
    b = _heat_integral(lams, s_min / 2, s_max, points)
    return float(2 * b - a)


@dataclass(frozen=True)
class ReferenceBasis:
    """Truncated eigenbasis of the reference operator ``I d/dt`` with boundary pair ``(L0, L1)``.

    Basis functions are ``exp(-I lam t) w_j`` for ``lam = theta_j + k pi``,
    ``|k| <= K``, ordered phase-major.
    """

    space: object
    thetas: np.ndarray
    w: np.ndarray  # 2l x l, column j spans the phase-j boundary vector at t = 0
    K: int

    @property
    def size(self):
        return len(self.thetas) * (2 * self.K + 1)

    @property
    def lambdas(self):
        return _lattice(self.thetas, self.K)

    @property
    def phase_index(self):
        return np.repeat(np.arange(len(self.thetas)), 2 * self.K + 1)

    def values(self, t):
        """Basis functions sampled at ``t``; shape ``(len(t), 2l, size)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        sp = self.space
        Pp = sp.Vplus @ sp.Vplus.conj().T
        Pm = sp.Vminus @ sp.Vminus.conj().T
        j = self.phase_index
        wp = (Pp @ self.w)[:, j]
        wm = (Pm @ self.w)[:, j]
        ph = np.exp(-1j * np.outer(t, self.lambdas))  # (nt, size)
        return wp[None] * ph[:, None, :] + wm[None] * np.conj(ph)[:, None, :]


def reference_basis(L0, L1, K, space=None):
    space = _space_for(L0, space)
    bp = boundary_phases(L0, L1, space)
    w = lagrangian_from_graph(space, bp.phi0) @ bp.vectors
    return ReferenceBasis(space, bp.thetas, w, K)


def gauss_nodes(intervals, nodes=None, panels=None):
    """Composite Gauss-Legendre rule over a union of intervals."""
    nodes = DEFAULTS["galerkin_nodes"] if nodes is None else nodes
    panels = DEFAULTS["galerkin_panels"] if panels is None else panels
    x, w = np.polynomial.legendre.leggauss(nodes)
    ts, ws = [], []
    for a, b in intervals:
        edges = np.linspace(a, b, panels + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            ts.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
            ws.append(0.5 * (hi - lo) * w)
    return np.concatenate(ts), np.concatenate(ws)


def galerkin_matrix(basis, potential, intervals=((0.0, 1.0),), nodes=None, panels=None):
    """Matrix of ``I d/dt + M(t)`` in the reference basis.

    ``potential`` maps an array of times to an array of hermitian matrices of
    shape ``(len(t), 2l, 2l)``; it is integrated by composite Gauss-Legendre
    quadrature over ``intervals`` (which must contain its support).
    """
    t, wq = gauss_nodes(intervals, nodes, panels)
    E = basis.values(t)
    M = np.asarray(potential(t), dtype=complex)
    ME = M @ E
    n = basis.size
    G = (np.conj(E) * wq[:, None, None]).reshape(-1, n).T @ ME.reshape(-1, n)
    G = 0.5 * (G + G.conj().T)
    return np.diag(basis.lambdas).astype(complex) + G


def galerkin_spectrum_oracle(L0ref, L1ref, potential, K, count=10, intervals=((0.0, 1.0),), space=None):
    """Eigenvalues of smallest modulus of the Galerkin matrix, sorted ascending."""
    basis = reference_basis(L0ref, L1ref, K, space)
    ev = hermitian_eigs(galerkin_matrix(basis, potential, intervals)).values
    return np.sort(ev[np.argsort(np.abs(ev))[:count]])


def lattice_low(thetas, count=10, kmax=50):
    lams = _lattice(thetas, kmax)
    return np.sort(lams[np.argsort(np.abs(lams))[:count]])


def eta_cocycle_sum(L0, L1, L2, space=None):
    """``eta(L0, L1) + eta(L1, L2) + eta(L2, L0)``."""
    return eta_closed_form(L0, L1, space) + eta_closed_form(L1, L2, space) + eta_closed_form(L2, L0, space)


def _midpoint_reference(L0, L1, space):
    # same eigenvectors as the actual pair, every phase moved to pi/2
    bp = boundary_phases(L0, L1, space)
    V = bp.vectors
    phi_ref = -bp.phi0 @ V @ V.conj().T
    return lagrangian_from_graph(space, phi_ref)


def eta_galerkin(L0, L1, K=None, space=None, cutoff=None):
    """Eta invariant from a Galerkin discretization in a non-adapted basis.

    The operator with boundary pair ``(L0, L1)`` is conjugated to one with
    pair ``(L0, R)``, where ``R`` has all phases equal to ``pi/2``; the
    conjugation turns into a potential ``-chi1'(t) I log U`` supported near
    ``t = 1``.  The phases are read off from the Galerkin eigenvalues in
    ``[0, pi)`` and inserted in :func:`eta_from_phases`.
    """
    from .families import CutoffPair
    from .numerics import unitary_log
    from .symplectic import transport_unitary

    space = _space_for(L0, space)
    K = DEFAULTS["basis_K"] if K is None else K
    cutoff = CutoffPair() if cutoff is None else cutoff
    R = _midpoint_reference(L0, L1, space)
    A = unitary_log(transport_unitary(space, L1, R))
    IA = space.I @ A

    def potential(t):
        return -cutoff.dchi1(t)[:, None, None] * IA[None]

    basis = reference_basis(L0, R, K, space)
    ev = hermitian_eigs(galerkin_matrix(basis, potential, (cutoff.supports[1],))).values
    low = np.sort(ev[(ev > -1e-9) & (ev < math.pi - 1e-9)])
    if len(low) != space.l:
        raise Degenerate(f"found {len(low)} Galerkin phases in [0, pi), expected {space.l}")
    return eta_from_phases(low), low
