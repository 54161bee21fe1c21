"""Parametrized families of Lagrangian triples, gauge data and characteristic forms.

Two lattice types are supported:

* :class:`FamilyChart`: a regular grid over a box in ``R^d`` (``d <= 3``).
* :class:`SurfaceFamily`: a cell-centred latitude-longitude grid on the sphere
  with coordinates ``(theta, phi)``.  Finite differences across a pole use the
  reflected row, since ``(-theta, phi)`` and ``(theta, phi + pi)`` are the same
  point; this needs an even number of longitudes.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .config import DEFAULTS, TOLERANCES
from .errors import ContractViolation, Degenerate, LargeResidual, OutOfDomain
from .maslov import maslov_index, split_l0
from .numerics import unitary_log
from .symplectic import (
    SymplecticSpace,
    lagrangian_from_bi,
    lagrangian_from_graph,
    orthonormal_frame,
    projector,
    random_transverse_triple,
    space_from_complex_structure,
    standard_space,
    subspace_distance,
    transport_unitary,
    transport_unitary_alt,
    transversality_gap,
)

# --------------------------------------------------------------------------
# cutoffs


def _mollifier(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _mollifier_prime(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos]) / x[pos] ** 2
    return out


def smoothstep(x):
    """``psi(x)``: 0 for ``x <= 0``, 1 for ``x >= 1``, smooth in between."""
    a, b = _mollifier(x), _mollifier(1 - np.asarray(x, dtype=float))
    return a / (a + b)


def smoothstep_prime(x):
    x = np.asarray(x, dtype=float)
    a, b = _mollifier(x), _mollifier(1 - x)
    da, db = _mollifier_prime(x), _mollifier_prime(1 - x)
    return (da * b + a * db) / (a + b) ** 2


@dataclass(frozen=True)
class CutoffPair:
    """``chi0`` falls from 1 to 0 on ``[a, b]``; ``chi1(t) = chi0(1 - t)``."""

    a: float = 0.2
    b: float = 0.4

    def __post_init__(self):
        if not 0.2 <= self.a < self.b <= 0.4:
            raise ContractViolation("cutoff transition must lie inside [1/5, 2/5]")

    def chi0(self, t):
        return smoothstep((self.b - np.asarray(t, dtype=float)) / (self.b - self.a))

    def chi1(self, t):
        return self.chi0(1 - np.asarray(t, dtype=float))

    def dchi0(self, t):
        w = self.b - self.a
        return -smoothstep_prime((self.b - np.asarray(t, dtype=float)) / w) / w

    def dchi1(self, t):
        return -self.dchi0(1 - np.asarray(t, dtype=float))

    @property
    def supports(self):
        return ((self.a, self.b), (1 - self.b, 1 - self.a))


def cutoffs(a=0.2, b=0.4) -> CutoffPair:
    return CutoffPair(a, b)


# --------------------------------------------------------------------------
# lattices of triples


def _check_frames(space, frames, min_gap):
    gaps = []
    for idx in np.ndindex(frames.shape[:-3]):
        F = frames[idx]
        gaps.append(min(transversality_gap(F[i], F[j]) for i, j in ((0, 1), (1, 2), (2, 0))))
    g = float(min(gaps))
    if g < min_gap:
        raise Degenerate(f"family has a vertex with transversality gap {g:.3e} < {min_gap}", residual=g)
    return g


@dataclass(frozen=True, eq=False)
class FamilyChart:
    """Triples sampled on a regular grid ``origin + index * h``.

    ``frames`` has shape ``shape + (3, 2l, l)``.
    """

    space: SymplecticSpace
    frames: np.ndarray = field(repr=False)
    h: tuple
    origin: tuple
    basepoint: tuple
    name: str = "chart"
    generator: Optional[Callable] = field(default=None, repr=False)

    @property
    def dim(self):
        return len(self.h)

    @property
    def shape(self):
        return self.frames.shape[: self.dim]

    def coords(self, idx):
        return np.asarray(self.origin) + np.asarray(idx) * np.asarray(self.h)

    def vertices(self):
        return list(np.ndindex(self.shape))

    def is_interior(self, idx, width=1):
        return all(width <= i < n - width for i, n in zip(idx, self.shape))

    def interior_vertices(self, width=1):
        return [v for v in self.vertices() if self.is_interior(v, width)]

    def frame(self, idx, i):
        idx = tuple(idx)
        if any(k < 0 or k >= n for k, n in zip(idx, self.shape)):
            raise OutOfDomain(f"vertex {idx} is outside the chart")
        return self.frames[idx + (i,)]

    def shifted(self, idx, mu, step):
        idx = list(idx)
        idx[mu] += step
        return tuple(idx)

    def min_gap(self):
        return _check_frames(self.space, self.frames, 0.0)


@dataclass(frozen=True, eq=False)
class SurfaceFamily:
    """Triples on the cell centres ``theta_i = (i + 1/2) pi / n_theta``, ``phi_j = 2 pi j / n_phi``."""

    space: SymplecticSpace
    frames: np.ndarray = field(repr=False)
    name: str = "sphere"
    generator: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if self.frames.shape[1] % 2:
            raise ContractViolation("sphere meshes need an even number of longitudes")

    dim = 2

    @property
    def shape(self):
        return self.frames.shape[:2]

    @property
    def h(self):
        nt, nphi = self.shape
        return (math.pi / nt, 2 * math.pi / nphi)

    @property
    def origin(self):
        return (0.5 * self.h[0], 0.0)

    def coords(self, idx):
        return np.array([(idx[0] + 0.5) * self.h[0], idx[1] * self.h[1]])

    def vertices(self):
        return list(np.ndindex(self.shape))

    interior_vertices = vertices

    def is_interior(self, idx, width=1):
        return True

    def canonical(self, idx):
        i, j = idx
        nt, nphi = self.shape
        if i < 0:
            i, j = -1 - i, j + nphi // 2
        elif i >= nt:
            i, j = 2 * nt - 1 - i, j + nphi // 2
        return i, j % nphi

    def frame(self, idx, i):
        return self.frames[self.canonical(idx) + (i,)]

    def shifted(self, idx, mu, step):
        idx = list(idx)
        idx[mu] += step
        return tuple(idx)

    def area_weights(self):
        th = (np.arange(self.shape[0]) + 0.5) * self.h[0]
        return np.outer(np.sin(th) * self.h[0] * self.h[1], np.ones(self.shape[1]))

    def min_gap(self):
        return _check_frames(self.space, self.frames, 0.0)


# --------------------------------------------------------------------------
# gauge data


@dataclass(frozen=True)
class GaugeData:
    U: np.ndarray
    A: np.ndarray


def transport_function(kind="standard"):
    if kind == "standard":
        return transport_unitary
    if kind == "alt":
        return transport_unitary_alt
    raise ContractViolation(f"unknown transport choice {kind!r}")


def gauge_at(fam, idx, i, base=None, transport="standard"):
    """``U_i(b)`` with ``U_i(b) L_i(b) = L_i(base)`` and its logarithm."""
    base = fam.basepoint if base is None else base
    T = transport_function(transport)
    U = T(fam.space, fam.frame(idx, i), fam.frame(base, i))
    A = unitary_log(U, margin=1e-3)
    return U, A


def build_gauge(fam, i, transport="standard"):
    """Gauge data for Lagrangian ``i`` over all vertices of a chart."""
    n = fam.space.dim
    U = np.zeros(fam.shape + (n, n), dtype=complex)
    A = np.zeros_like(U)
    for v in fam.vertices():
        U[v], A[v] = gauge_at(fam, v, i, transport=transport)
    return GaugeData(U, A)


# --------------------------------------------------------------------------
# finite-difference exterior calculus


def form_basis(d, p):
    return list(itertools.combinations(range(d), p))


def fd_exterior_derivative(field, h, p, vertex=None, periodic=None):
    """Exterior derivative of a sampled ``p``-form by central differences.

    ``field`` has shape ``grid + (C(d, p),) + extra`` with components ordered as
    :func:`form_basis`.  Without ``vertex`` the result covers all interior
    vertices (shape ``[n - 2 for n in grid] + (C(d, p+1),) + extra``).  With a
    vertex the value there is returned and boundary vertices raise
    :class:`OutOfDomain`.
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    d = len(h)
    grid = field.shape[:d]
    src = {I: k for k, I in enumerate(form_basis(d, p))}
    out_basis = form_basis(d, p + 1)

    def deriv(mu, comp):
        arr = field[(slice(None),) * d + (comp,)]
        lo = [slice(1, -1)] * d
        hi = [slice(1, -1)] * d
        lo[mu] = slice(0, -2)
        hi[mu] = slice(2, None)
        return (arr[tuple(hi)] - arr[tuple(lo)]) / (2 * h[mu])

    if vertex is not None:
        if any(v < 1 or v > n - 2 for v, n in zip(vertex, grid)):
            raise OutOfDomain(f"vertex {vertex} has no central-difference stencil")
        sl = tuple(slice(v - 1, v + 2) for v in vertex)
        sub = fd_exterior_derivative(field[sl], h, p)
        return sub[(0,) * d]

    if any(n < 3 for n in grid):
        raise OutOfDomain("grid too small for central differences")
    parts = []
    for J in out_basis:
        acc = 0
        for pos, mu in enumerate(J):
            rest = J[:pos] + J[pos + 1:]
            acc = acc + (-1) ** pos * deriv(mu, src[rest])
        parts.append(acc)
    return np.stack(parts, axis=d)


# --------------------------------------------------------------------------
# splitting bundle and characteristic forms


def split_projectors(F0, F1, F2, space=None):
    s = split_l0(F0, F1, F2, space)
    return projector(s.Fplus), projector(s.Fminus)


def split_bundle(fam):
    """Projector fields onto ``L0^+`` and ``L0^-`` over all vertices (shape ``grid + (2l, 2l)``)."""
    n = fam.space.dim
    Pp = np.zeros(fam.shape + (n, n), dtype=complex)
    Pm = np.zeros_like(Pp)
    ranks = set()
    for v in fam.vertices():
        s = split_l0(*(fam.frame(v, i) for i in range(3)), space=fam.space)
        ranks.add((s.Fplus.shape[1], s.Fminus.shape[1]))
        Pp[v] = projector(s.Fplus)
        Pm[v] = projector(s.Fminus)
    if len(ranks) != 1:
        raise Degenerate(f"splitting ranks jump over the family: {sorted(ranks)}")
    return Pp, Pm


def _neighbour_field(fam, field, v, mu, step):
    if isinstance(fam, SurfaceFamily):
        return field[fam.canonical(fam.shifted(v, mu, step))]
    w = fam.shifted(v, mu, step)
    if any(k < 0 or k >= n for k, n in zip(w, fam.shape)):
        raise OutOfDomain(f"vertex {v} has no central-difference stencil")
    return field[w]


def projector_derivatives(fam, P, v):
    return [
        (_neighbour_field(fam, P, v, mu, 1) - _neighbour_field(fam, P, v, mu, -1)) / (2 * fam.h[mu])
        for mu in range(fam.dim)
    ]


def chern_form_at(P, dP):
    """Degree-2 Chern form ``(i / 2 pi) tr(P [dP_mu, dP_nu])`` for ``mu < nu``."""
    d = len(dP)
    return np.array(
        [
            (1j / (2 * math.pi)) * np.trace(P @ (dP[m] @ dP[n] - dP[n] @ dP[m]))
            for m, n in form_basis(d, 2)
        ]
    )


def chern_character_form(fam, P):
    """Degree-0 (rank) and degree-2 Chern character components at every evaluable vertex.

    Returns ``(rank, vertices, c2)`` where ``c2[k]`` holds the real components
    for ``vertices[k]``.
    """
    ranks = {int(round(np.trace(P[v]).real)) for v in fam.vertices()}
    if len(ranks) != 1:
        raise Degenerate("projector rank is not constant")
    verts = fam.interior_vertices()
    vals = []
    for v in verts:
        c = chern_form_at(P[v], projector_derivatives(fam, P, v))
        vals.append(c.real)
    return ranks.pop(), verts, np.array(vals)


def integrate_sphere_form(fam, values):
    """Midpoint-rule integral of the ``dtheta ^ dphi`` component over the sphere."""
    vals = np.asarray(values).reshape(fam.shape)
    return float(np.sum(vals) * fam.h[0] * fam.h[1])


def split_chern_integral(fam):
    """Integral over the sphere of ``ch(L0^+) - ch(L0^-)`` in degree 2."""
    Pp, Pm = split_bundle(fam)
    out = 0.0
    for P, sign in ((Pp, 1.0), (Pm, -1.0)):
        _, verts, c2 = chern_character_form(fam, P)
        field = np.zeros(fam.shape)
        for v, c in zip(verts, c2):
            field[v] = c[0]
        out += sign * integrate_sphere_form(fam, field)
    return out


def _link(Fa, Fb):
    return np.linalg.det(Fa.conj().T @ Fb)


def lattice_chern_number(fam, frames, max_phase=None, max_residual=None):
    """First Chern number of a subbundle over a sphere mesh from plaquette phases.

    ``frames`` has shape ``(n_theta, n_phi, 2l, r)`` (orthonormal frames of the
    subbundle).  Quadrilaterals between neighbouring latitude rings are
    traversed counter-clockwise in ``(theta, phi)``; the polar caps are closed
    by the first and last ring.  Returns ``(integer, raw_value, residual)``.
    """
    max_phase = TOLERANCES["plaquette_phase_max"] if max_phase is None else max_phase
    max_residual = TOLERANCES["lattice_rounding_residual"] if max_residual is None else max_residual
    nt, nphi = frames.shape[:2]
    phases = []
    for i in range(nt - 1):
        for j in range(nphi):
            jn = (j + 1) % nphi
            w = (
                _link(frames[i, j], frames[i + 1, j])
                * _link(frames[i + 1, j], frames[i + 1, jn])
                * _link(frames[i + 1, jn], frames[i, jn])
                * _link(frames[i, jn], frames[i, j])
            )
            phases.append(np.angle(w))
    north = np.prod([_link(frames[0, j], frames[0, (j + 1) % nphi]) for j in range(nphi)])
    south = np.prod([_link(frames[nt - 1, (j + 1) % nphi], frames[nt - 1, j]) for j in range(nphi)])
    phases += [np.angle(north), np.angle(south)]
    phases = np.asarray(phases)
    worst = float(np.max(np.abs(phases)))
    if worst > max_phase:
        raise LargeResidual(f"plaquette phase {worst:.3f} exceeds {max_phase:.3f}; refine the mesh")
    raw = -float(np.sum(phases)) / (2 * math.pi)
    n = int(round(raw))
    res = abs(raw - n)
    if res > max_residual:
        raise LargeResidual(f"lattice Chern sum {raw:.4f} is not close to an integer")
    return n, raw, res


# --------------------------------------------------------------------------
# built-in families


def sphere_mesh(n_theta, n_phi):
    th = (np.arange(n_theta) + 0.5) * math.pi / n_theta
    ph = np.arange(n_phi) * 2 * math.pi / n_phi
    return th, ph


def tautological_frame(theta, phi):
    """Unit vector spanning the line ``[cos(theta/2) : e^{i phi} sin(theta/2)]`` of ``CP^1``."""
    return np.array([[math.cos(theta / 2)], [np.exp(1j * phi) * math.sin(theta / 2)]])


def cp2_triple(theta, phi):
    """Triple over ``CP^1 subset CP^2``: ``L0``, ``I L0`` and ``L2`` with ``BI = 2 P_T - 1`` on ``L0``."""
    space = standard_space(2)
    L0 = lagrangian_from_graph(space, np.eye(2))
    z = tautological_frame(theta, phi)
    Q = 2 * (z @ z.conj().T) - np.eye(2)
    return L0, space.I @ L0, lagrangian_from_bi(L0, Q, space)


def cp2_tautological_l0_frame(theta, phi):
    """The line ``T_b`` as a subspace of ``L0``."""
    space = standard_space(2)
    L0 = lagrangian_from_graph(space, np.eye(2))
    return L0 @ tautological_frame(theta, phi)


def cp2_example(n_theta=16, n_phi=32):
    space = standard_space(2)
    th, ph = sphere_mesh(n_theta, n_phi)
    frames = np.zeros((n_theta, n_phi, 3, 4, 2), dtype=complex)
    for i, t in enumerate(th):
        for j, p in enumerate(ph):
            frames[i, j] = np.stack(cp2_triple(t, p))
    return SurfaceFamily(space, frames, name="cp2", generator=lambda b: cp2_triple(*b))


def rotating_l1(n=21, half_width=0.5, alphas=(0.0, 2.2, 4.1), betas=(0.7, -0.4, 0.25)):
    """One-parameter ``l = 1`` family ``L_i(b) = C(exp(i (alpha_i + beta_i b)), 1)``."""
    space = standard_space(1)
    alphas, betas = np.asarray(alphas, float), np.asarray(betas, float)

    def gen(b):
        b = float(np.atleast_1d(b)[0])
        return tuple(lagrangian_from_graph(space, np.exp(-1j * (a + s * b))) for a, s in zip(alphas, betas))

    h = 2 * half_width / (n - 1)
    bs = -half_width + h * np.arange(n)
    frames = np.stack([np.stack(gen(b)) for b in bs])
    fam = FamilyChart(space, frames, (h,), (-half_width,), (n // 2,), name="rotating-l1", generator=gen)
    _check_frames(space, frames, 0.1)
    return fam


def _block_generator(l, rng, scale):
    X = np.zeros((2 * l, 2 * l), dtype=complex)
    for sl in (slice(0, l), slice(l, 2 * l)):
        M = rng.normal(size=(l, l)) + 1j * rng.normal(size=(l, l))
        X[sl, sl] = scale * (M - M.conj().T) / 2
    return X


def three_param_generator(seed=4, l=2, scale=0.6):
    """Analytic family ``L_i(b) = exp(sum_mu b_mu X_{i mu}) L_i^0`` with ``X`` commuting with ``I``."""
    import scipy.linalg

    space = standard_space(l)
    base = random_transverse_triple(space, seed, min_gap=0.3)
    rng = np.random.default_rng(seed + 1000)
    X = [[_block_generator(l, rng, scale) for _ in range(3)] for _ in range(3)]

    def gen(b):
        b = np.asarray(b, dtype=float)
        return tuple(
            scipy.linalg.expm(sum(b[m] * X[i][m] for m in range(3))) @ base[i] for i in range(3)
        )

    return space, gen


def three_param_test(n=5, h=0.05, seed=4, center=(0.0, 0.0, 0.0)):
    """Three-parameter chart of :func:`three_param_generator` centred at ``center``."""
    space, gen = three_param_generator(seed)
    origin = tuple(np.asarray(center, float) - h * (n // 2))
    frames = np.zeros((n, n, n, 3, space.dim, space.l), dtype=complex)
    for idx in np.ndindex(n, n, n):
        frames[idx] = np.stack(gen(np.asarray(origin) + h * np.asarray(idx)))
    _check_frames(space, frames, 0.1)
    return FamilyChart(space, frames, (h,) * 3, origin, (n // 2,) * 3, name="three-param-test", generator=gen)


def chart_from_generator(space, gen, center, h, n=3, name="chart", min_gap=0.0):
    """Sample ``gen(b) -> (F0, F1, F2)`` on an ``n**d`` grid centred at ``center``."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    d = len(center)
    h = tuple(float(x) for x in np.broadcast_to(np.asarray(h, dtype=float), (d,)))
    origin = center - np.asarray(h) * (n // 2)
    frames = np.zeros((n,) * d + (3, space.dim, space.l), dtype=complex)
    for idx in np.ndindex(*(n,) * d):
        frames[idx] = np.stack(gen(origin + np.asarray(h) * np.asarray(idx)))
    if min_gap:
        _check_frames(space, frames, min_gap)
    return FamilyChart(space, frames, h, tuple(origin), (n // 2,) * d, name=name, generator=gen)


def constant_chart(F, shape=(5,), h=0.1, space=None):
    """Chart whose triple does not depend on the parameter."""
    F = np.stack(F)
    space = standard_space(F.shape[-1]) if space is None else space
    d = len(shape)
    frames = np.broadcast_to(F, tuple(shape) + F.shape).copy()
    return FamilyChart(space, frames, (h,) * d, (0.0,) * d, tuple(n // 2 for n in shape), name="constant")


BUILTINS = {
    "cp2": cp2_example,
    "rotating-l1": rotating_l1,
    "three-param-test": three_param_test,
}


def builtin_family(name, **params):
    if name not in BUILTINS:
        raise ContractViolation(f"unknown family {name!r}; choose from {sorted(BUILTINS)}")
    return BUILTINS[name](**params)


# --------------------------------------------------------------------------
# serialization


def complex_to_json(a):
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def complex_from_json(x):
    try:
        a = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ContractViolation(f"malformed complex array: {exc}") from exc
    if a.ndim == 0 or a.shape[-1] != 2:
        raise ContractViolation("complex entries must be [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def family_to_dict(fam):
    doc = {
        "kind": "sphere" if isinstance(fam, SurfaceFamily) else "chart",
        "name": fam.name,
        "dim": fam.dim,
        "shape": list(fam.shape),
        "h": list(fam.h),
        "origin": list(fam.origin),
        "I": complex_to_json(fam.space.I),
        "frames": complex_to_json(fam.frames),
    }
    if isinstance(fam, FamilyChart):
        doc["basepoint"] = list(fam.basepoint)
    return doc


def family_from_dict(doc):
    try:
        space = space_from_complex_structure(complex_from_json(doc["I"]))
        frames = complex_from_json(doc["frames"])
        shape = tuple(doc["shape"])
        kind = doc.get("kind", "chart")
    except KeyError as exc:
        raise ContractViolation(f"family document lacks field {exc}") from exc
    if frames.shape[: len(shape)] != shape or frames.shape[len(shape):] != (3, space.dim, space.l):
        raise ContractViolation(f"frames array has shape {frames.shape}, expected {shape} + (3, {space.dim}, {space.l})")
    for v in np.ndindex(shape):
        for i in range(3):
            F = frames[v + (i,)]
            res = np.linalg.norm(F.conj().T @ (space.I @ F))
            if res > 1e-8:
                raise ContractViolation(f"frame {i} at vertex {v} is not Lagrangian (residual {res:.3e})")
            if np.linalg.norm(F.conj().T @ F - np.eye(space.l)) > 1e-12:
                frames[v + (i,)] = orthonormal_frame(F)
    if kind == "sphere":
        return SurfaceFamily(space, frames, name=doc.get("name", "sphere"))
    return FamilyChart(
        space,
        frames,
        tuple(float(x) for x in doc["h"]),
        tuple(float(x) for x in doc.get("origin", [0.0] * len(shape))),
        tuple(int(x) for x in doc["basepoint"]),
        name=doc.get("name", "chart"),
    )


def save_family(fam, path):
    with open(path, "w") as fh:
        json.dump(family_to_dict(fam), fh)


def load_family(path):
    with open(path) as fh:
        return family_from_dict(json.load(fh))


def pointwise_maslov(fam):
    return {v: maslov_index(*(fam.frame(v, i) for i in range(3)), space=fam.space) for v in fam.vertices()}


def adjacent_projector_distance(fam, i=0):
    worst = 0.0
    for v in fam.vertices():
        for mu in range(fam.dim):
            w = fam.shifted(v, mu, 1)
            try:
                G = fam.frame(w, i)
            except OutOfDomain:
                continue
            worst = max(worst, subspace_distance(fam.frame(v, i), G))
    return worst
