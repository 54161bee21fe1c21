"""Eta forms of families of interval Dirac operators.

For a pair ``(Li, Lj)`` of a family, the operator ``I d/dt`` with boundary
conditions ``f(0) in Li(b)``, ``f(1) in Lj(b)`` is conjugated to a fixed domain
by ``W(t, b) = exp(chi0(t) A_i(b) + chi1(t) A_j(b))``:

    Dt(b) = I d/dt - chi0' I A_i(b) - chi1' I A_j(b)

acting on the reference domain at the base point.  It is represented in the
truncated eigenbasis of the reference operator.  The superconnection uses the
flat connection ``W d W^*``; then ``A_s^2 = s Dt^2 + sqrt(s) sum_mu db_mu sigma N_mu``
where ``N_mu`` is the boundary form

    N_mu = e(1)^H I Om_mu(1) e(1) - e(0)^H I Om_mu(0) e(0),   Om_mu = U d_mu U^*

(the interior part of ``d Dt + [W dW^*, Dt]`` vanishes identically).  The eta
form is

    eta = sum_k (2 pi i)^{-k} (1 / (2 sqrt(pi))) int_0^inf s^{-1/2} str_sigma(sigma Dt e^{-A_s^2})_{[2k]} ds.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import simpson
from scipy.special import erfc, polygamma

from .config import DEFAULTS, KAPPA, TOLERANCES
from .errors import ContractViolation, OutOfDomain, PoorFit
from .families import CutoffPair, form_basis, gauge_at, integrate_sphere_form, transport_function
from .numerics import CliffordFormMatrix, duhamel_exp, hermitian_eigs, supertrace_even
from .spectral_eta import gauss_nodes, reference_basis
from .symplectic import transversality_gap

PAIRS = ((0, 1), (1, 2), (2, 0))


# --------------------------------------------------------------------------
# discretized operator family


def _fourier_cutoff(dchi, interval, omegas, nodes=None, panels=None):
    """``c(omega) = int -chi'(t) exp(i omega t) dt`` over the support interval."""
    t, w = gauss_nodes([interval], nodes, panels)
    weights = -dchi(t) * w
    return np.exp(1j * np.outer(omegas, t)) @ weights


@dataclass(eq=False)
class DiscretizedFamilyOperator:
    """Conjugated family of one boundary pair in the reference eigenbasis.

    Matrices are computed on demand and cached per vertex.
    """

    family: object
    pair: tuple
    K: int
    base: tuple
    cutoff: CutoffPair = field(default_factory=CutoffPair)
    transport: str = "standard"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        fam = self.family
        i, j = self.pair
        F0, F1 = fam.frame(self.base, i), fam.frame(self.base, j)
        gap = transversality_gap(F0, F1)
        if gap < TOLERANCES["transversality"]:
            from .errors import Degenerate

            raise Degenerate(f"reference pair is not transverse (gap {gap:.3e})", residual=gap)
        self.basis = reference_basis(F0, F1, self.K, fam.space)
        sp = fam.space
        Pp = sp.Vplus @ sp.Vplus.conj().T
        self._wp = Pp @ self.basis.w
        self._wm = self.basis.w - self._wp
        th = self.basis.thetas
        l = len(th)
        self._dtheta = th[:, None] - th[None, :]
        self._c = None
        jj = self.basis.phase_index
        kk = np.tile(np.arange(-self.K, self.K + 1), l)
        self._jj = jj
        self._kk = kk
        self._mi = kk[:, None] - kk[None, :] + 2 * self.K

    def _cutoff_coefficients(self):
        # frequencies lambda_a - lambda_b = theta_j - theta_j' + m pi, |m| <= 2K
        if self._c is None:
            l = len(self.basis.thetas)
            m = np.arange(-2 * self.K, 2 * self.K + 1)
            om = (self._dtheta[:, :, None] + math.pi * m[None, None, :]).ravel()
            s0, s1 = self.cutoff.supports
            self._c = []
            for dchi, sup in ((self.cutoff.dchi0, s0), (self.cutoff.dchi1, s1)):
                cp = _fourier_cutoff(dchi, sup, om).reshape(l, l, -1)
                cm = _fourier_cutoff(dchi, sup, -om).reshape(l, l, -1)
                self._c.append((cp, cm))
        return self._c

    @property
    def size(self):
        return self.basis.size

    @property
    def lambdas(self):
        return self.basis.lambdas

    def gauge(self, v, which):
        key = ("gauge", tuple(v), which)
        if key not in self._cache:
            self._cache[key] = gauge_at(self.family, v, self.pair[which], base=self.base, transport=self.transport)
        return self._cache[key]

    def matrix(self, v):
        """Hermitian matrix of ``Dt(v)``; exactly diagonal at the base point."""
        key = ("D", tuple(v))
        if key in self._cache:
            return self._cache[key]
        I = self.family.space.I
        D = np.diag(self.lambdas).astype(complex)
        if tuple(v) != tuple(self.base):
            jj, mi = self._jj, self._mi
            for which in (0, 1):
                _, A = self.gauge(v, which)
                X = I @ A
                Xp = self._wp.conj().T @ X @ self._wp
                Xm = self._wm.conj().T @ X @ self._wm
                cp, cm = self._cutoff_coefficients()[which]
                D += Xp[jj[:, None], jj[None, :]] * cp[jj[:, None], jj[None, :], mi]
                D += Xm[jj[:, None], jj[None, :]] * cm[jj[:, None], jj[None, :], mi]
            D = 0.5 * (D + D.conj().T)
        self._cache[key] = D
        return D

    def connection_at_ends(self, v):
        """``Om_mu = U d_mu U^*`` at ``t = 0`` (pair member 0) and ``t = 1`` (member 1), per direction."""
        key = ("Om", tuple(v))
        if key in self._cache:
            return self._cache[key]
        fam = self.family
        out = []
        for which in (0, 1):
            U, _ = self.gauge(v, which)
            oms = []
            for mu in range(fam.dim):
                if not fam.is_interior(v):
                    raise OutOfDomain(f"vertex {v} has no central-difference stencil")
                vp, vm = fam.shifted(v, mu, 1), fam.shifted(v, mu, -1)
                Up, _ = self._transport_only(vp, which)
                Um, _ = self._transport_only(vm, which)
                dUs = (Up - Um).conj().T / (2 * fam.h[mu])
                om = U @ dUs
                # U dU^* is anti-hermitian; the difference quotient only to O(h^2)
                oms.append(0.5 * (om - om.conj().T))
            out.append(oms)
        self._cache[key] = out
        return out

    def _transport_only(self, v, which):
        T = transport_function(self.transport)
        fam = self.family
        i = self.pair[which]
        return T(fam.space, fam.frame(v, i), fam.frame(self.base, i)), None

    def boundary_blocks(self, v):
        """Phase-pair blocks ``(A, B)`` per direction with ``N_ab = A_jj' + (-1)^(k-k') B_jj'``."""
        I = self.family.space.I
        w = self.basis.w
        om0, om1 = self.connection_at_ends(v)
        sp = self.family.space
        Pp = sp.Vplus @ sp.Vplus.conj().T
        Pm = sp.Vminus @ sp.Vminus.conj().T
        blocks = []
        for mu in range(self.family.dim):
            X0 = I @ om0[mu]
            X1 = I @ om1[mu]
            A = -(w.conj().T @ X0 @ w)
            # e^{I theta} acts as e^{i theta} on V+ and e^{-i theta} on V-
            Bp = (Pp @ w).conj().T @ X1 @ (Pp @ w) * np.exp(1j * self._dtheta)
            Bm = (Pm @ w).conj().T @ X1 @ (Pm @ w) * np.exp(-1j * self._dtheta)
            blocks.append((A, Bp + Bm))
        return blocks

    def boundary_forms(self, v):
        """Hermitian matrices ``N_mu`` in the reference basis."""
        key = ("N", tuple(v))
        if key in self._cache:
            return self._cache[key]
        jj = self._jj
        sign = (-1.0) ** (self._kk[:, None] - self._kk[None, :])
        Ns = []
        for A, B in self.boundary_blocks(v):
            Ns.append(A[jj[:, None], jj[None, :]] + sign * B[jj[:, None], jj[None, :]])
        self._cache[key] = Ns
        return Ns


def discretize_family(fam, K=None, pair=(0, 1), base=None, cutoff=None, transport="standard"):
    """Conjugated operator family of one boundary pair with basis truncation ``|k| <= K``."""
    K = DEFAULTS["basis_K"] if K is None else K
    base = getattr(fam, "basepoint", None) if base is None else base
    if base is None:
        raise ContractViolation("a base vertex is required")
    return DiscretizedFamilyOperator(fam, tuple(pair), K, tuple(base), cutoff or CutoffPair(), transport)


def connection_matrices(opfam, v, nodes=None, panels=None):
    """Galerkin matrices of the flat connection ``W d_mu W^*`` (for cross-checks).

    The derivative in ``b`` is a central difference of ``W`` built from the
    neighbouring vertices' logarithms.
    """
    import scipy.linalg

    fam = opfam.family
    cut = opfam.cutoff
    s0, s1 = cut.supports
    intervals = [(0.0, s0[1]), (s1[0], 1.0)]
    t, wq = gauss_nodes(intervals, nodes, panels)
    E = opfam.basis.values(t)

    def logs(u):
        return [gauge_at(fam, u, opfam.pair[k], base=opfam.base, transport=opfam.transport)[1] for k in (0, 1)]

    def W_of(As, tt):
        return np.array([scipy.linalg.expm(cut.chi0(x) * As[0] + cut.chi1(x) * As[1]) for x in tt])

    W = W_of(logs(v), t)
    mats = []
    for mu in range(fam.dim):
        Wp = W_of(logs(fam.shifted(v, mu, 1)), t)
        Wm = W_of(logs(fam.shifted(v, mu, -1)), t)
        dWs = np.conj(np.swapaxes(Wp - Wm, 1, 2)) / (2 * fam.h[mu])
        om = W @ dWs
        n = opfam.size
        G = (np.conj(E) * wq[:, None, None]).reshape(-1, n).T @ (om @ E).reshape(-1, n)
        mats.append(G)
    return mats


# --------------------------------------------------------------------------
# curvature and integrand


def curvature(opfam, v, s):
    """``A_s^2`` as a form-valued matrix: ``s Dt^2`` plus ``sqrt(s) db_mu sigma N_mu``."""
    D = opfam.matrix(v)
    d = opfam.family.dim
    X = CliffordFormMatrix(d, opfam.size)
    X[((), 0)] = s * (D @ D)
    for mu, N in enumerate(opfam.boundary_forms(v)):
        X[((mu,), 1)] = math.sqrt(s) * N
    return X


def bianchi_residual(opfam, v):
    """Relative residual of ``[A_s, A_s^2] = 0`` in degree one on the low block.

    In degree one the identity reads ``nabla(Dt^2) = N Dt + Dt N`` (the powers
    of ``s`` factor out); the covariant derivative uses the Galerkin connection
    matrices and the comparison is restricted to ``|k| <= K/4`` to avoid
    truncation edges.  Finite differences in ``b`` make the residual ``O(h^2)``.
    """
    fam = opfam.family
    D = opfam.matrix(v)
    D2 = D @ D
    Om = connection_matrices(opfam, v)
    Ns = opfam.boundary_forms(v)
    low = np.ix_(*(np.abs(opfam._kk) <= opfam.K // 4,) * 2)
    worst = 0.0
    for mu in range(fam.dim):
        Dp = opfam.matrix(fam.shifted(v, mu, 1))
        Dm = opfam.matrix(fam.shifted(v, mu, -1))
        dD2 = (Dp @ Dp - Dm @ Dm) / (2 * fam.h[mu])
        lhs = dD2 + Om[mu] @ D2 - D2 @ Om[mu]
        rhs = Ns[mu] @ D + D @ Ns[mu]
        worst = max(worst, float(np.max(np.abs((lhs - rhs)[low])) / np.max(np.abs(rhs[low]))))
    return worst


def _normalize(d):
    """Per-degree form normalization ``(2 pi i)^{-k}`` for degree ``2k``."""
    return {I: (2j * math.pi) ** (-(len(I) // 2)) for I in form_basis(d, 0) + form_basis(d, 2)}


def eta_integrand_duhamel(opfam, v, s, kappa=KAPPA):
    """Integrand via the generic Duhamel engine (dense; small bases only)."""
    X = curvature(opfam, v, s)
    H = X[((), 0)]
    N = CliffordFormMatrix(X.degree, X.size, {k: b for k, b in X.blocks.items() if k != ((), 0)})
    E = duhamel_exp(H, N)
    sD = CliffordFormMatrix.scalar(opfam.matrix(v), X.degree, clifford=1)
    st = supertrace_even(sD @ E, kappa)
    norm = _normalize(X.degree)
    pref = 1.0 / (2 * math.sqrt(math.pi) * math.sqrt(s))
    return {I: pref * norm[I] * val for I, val in st.items() if len(I) in (0, 2)}


def dd2_repeated(x, y, s):
    """``exp[z_x, z_x, z_y]`` with ``z = -s x``, elementwise and overflow-safe."""
    x, y, s = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(s, float))
    shape = x.shape
    x, y, s = (np.atleast_1d(a) for a in (x, y, s))
    w = -s * (y - x)
    ex = np.exp(-s * x)
    ey = np.exp(-s * y)
    with np.errstate(all="ignore"):
        r = (ey - ex - w * ex) / w**2
    small = np.abs(w) < 1e-2
    if np.any(small):
        ws = w[small]
        r[small] = ex[small] * (0.5 + ws / 6 + ws**2 / 24 + ws**3 / 120 + ws**4 / 720 + ws**5 / 5040)
    return r.reshape(shape) if shape else float(r[0])


@dataclass
class SpectralData:
    """Eigenvalues of ``Dt(v)`` and boundary forms in its eigenbasis."""

    lam: np.ndarray
    N: list  # per direction, in eigenbasis

    @property
    def dim(self):
        return len(self.N)

    def pair_products(self):
        """``M[mu,nu]_ab = N_mu,ab N_nu,ba - N_nu,ab N_mu,ba`` for ``mu < nu``."""
        return {
            (m, n): self.N[m] * self.N[n].T - self.N[n] * self.N[m].T for m, n in form_basis(self.dim, 2)
        }


def spectral_data(opfam, v):
    D = opfam.matrix(v)
    if tuple(v) == tuple(opfam.base):
        return SpectralData(np.real(np.diag(D)).copy(), [N.copy() for N in opfam.boundary_forms(v)])
    eig = hermitian_eigs(D)
    V = eig.vectors
    return SpectralData(eig.values, [V.conj().T @ N @ V for N in opfam.boundary_forms(v)])


def integrand_from_spectrum(sd, s, kappa=KAPPA, products=None):
    """Degree-0 and degree-2 integrand values at scale ``s`` (fast eigenbasis formula)."""
    lam = sd.lam
    g0 = kappa / (2 * math.sqrt(math.pi)) * np.sum(lam * np.exp(-s * lam**2)) / math.sqrt(s)
    out = {(): complex(g0)}
    x = lam**2
    products = sd.pair_products() if products is None else products
    if products:
        K2 = dd2_repeated(x[:, None], x[None, :], s)
        for key, Mp in products.items():
            tr = np.sum(lam[:, None] * Mp * K2)
            out[key] = (kappa / (2 * math.sqrt(math.pi))) * math.sqrt(s) * (-tr) / (2j * math.pi)
    return out


def eta_integrand(opfam, v, s, kappa=KAPPA):
    """Even-form integrand at scale ``s``: dict multi-index -> complex."""
    return integrand_from_spectrum(spectral_data(opfam, v), s, kappa)


def _tail_degree2(lam, Mp, s_max, kappa, nodes=32):
    """Exact contribution of ``s > s_max`` to one degree-2 component.

    Only pairs involving an eigenvalue with ``s_max lam^2 < 40`` contribute;
    each term is integrated by Gauss-Laguerre after rescaling by its slowest rate.
    """
    x = lam**2
    act = np.where(x * s_max < 40)[0]
    rest = np.where(x * s_max >= 40)[0]
    if len(act) == 0:
        return 0.0
    r, wr = np.polynomial.laguerre.laggauss(nodes)
    total = 0.0
    for ia, ib in ((act, np.arange(len(lam))), (rest, act)):
        if len(ia) == 0 or len(ib) == 0:
            continue
        xa = x[ia][:, None]
        xb = x[ib][None, :]
        m = np.minimum(xa, xb)
        acc = 0.0
        for rk, wk in zip(r, wr):
            sk = s_max + rk / m
            acc = acc + wk * np.exp(rk) * np.sqrt(sk) * dd2_repeated(xa, xb, sk) / m
        total += np.sum(lam[ia][:, None] * Mp[np.ix_(ia, ib)] * acc)
    return (kappa / (2 * math.sqrt(math.pi))) * (-total) / (2j * math.pi)


def mellin_degree2(sd, kappa=KAPPA):
    """Degree-2 components with the ``s``-integral done termwise in closed form.

    ``int_0^inf s^{1/2} exp[-s x, -s x, -s y] ds = sqrt(pi) / (|a| (|a| + |b|)^2)``
    for ``x = a^2``, ``y = b^2``.
    """
    al = np.abs(sd.lam)
    Fk = math.sqrt(math.pi) / (al[:, None] * (al[:, None] + al[None, :]) ** 2)
    out = {}
    for key, Mp in sd.pair_products().items():
        tr = np.sum(sd.lam[:, None] * Mp * Fk)
        out[key] = (kappa / (2 * math.sqrt(math.pi))) * (-tr) / (2j * math.pi)
    return out


# --------------------------------------------------------------------------
# exact lattice sums for a diagonal (germ) operator

_LATTICE_TERMS = (512, 1024, 2048)


def _trigamma(y):
    return polygamma(1, y)


def _g0(x, beta):
    return (_trigamma((x + beta) / math.pi) + _trigamma((x + math.pi - beta) / math.pi)) / math.pi**2


def _alt(y):
    return 0.25 * (_trigamma(y / 2) - _trigamma((y + 1) / 2))


def _g1(x, beta):
    return (_alt((x + beta) / math.pi) - _alt((x + math.pi - beta) / math.pi)) / math.pi**2


def _partial_s0(alpha, beta, M):
    m = np.arange(M) * math.pi
    return np.cumsum(_g0(alpha + m, beta) - _g0(math.pi - alpha + m, beta))


def lattice_sums(alpha, beta):
    """``S0 = sum sign(a)/(|a|+|b|)^2`` and the ``(-1)^(k-k')``-weighted ``S1`` over the full lattice.

    ``a = alpha + k pi``, ``b = beta + k' pi``.  Inner sums are trigamma closed
    forms; the outer sum of ``S0`` is Richardson-extrapolated in the number of
    terms and the alternating ``S1`` is averaged over consecutive partial sums.
    """
    Ms = _LATTICE_TERMS
    cs = _partial_s0(alpha, beta, Ms[-1])
    v = np.array([cs[M - 1] for M in Ms])
    # error ~ c1/M + c2/M^2 with M doubling
    r1 = 2 * v[1:] - v[:-1]
    s0 = (4 * r1[1] - r1[0]) / 3
    m = np.arange(Ms[-1]) * math.pi
    sgn = (-1.0) ** np.arange(Ms[-1])
    c1 = np.cumsum(sgn * (_g1(alpha + m, beta) + _g1(math.pi - alpha + m, beta)))
    s1 = 0.5 * (c1[-1] + c1[-2])
    return float(s0), float(s1)


def lattice_degree2(opfam, v, kappa=KAPPA):
    """Untruncated degree-2 eta form at the base vertex (the operator must be diagonal there)."""
    if tuple(v) != tuple(opfam.base):
        raise ContractViolation("exact lattice sums need the vertex to be the base point")
    th = opfam.basis.thetas
    l = len(th)
    S0 = np.zeros((l, l))
    S1 = np.zeros((l, l))
    for j in range(l):
        for jp in range(l):
            S0[j, jp], S1[j, jp] = lattice_sums(th[j], th[jp])
    blocks = opfam.boundary_blocks(v)
    out = {}
    for m, n in form_basis(opfam.family.dim, 2):
        Am, Bm = blocks[m]
        An, Bn = blocks[n]
        P = Am * An.T + Bm * Bn.T - (An * Am.T + Bn * Bm.T)
        R = Am * Bn.T + Bm * An.T - (An * Bm.T + Bn * Am.T)
        tot = np.sum(P * S0 + R * S1)
        out[(m, n)] = -(kappa / 2) * tot / (2j * math.pi)
    return out


# --------------------------------------------------------------------------
# finite-part integration


@dataclass
class EtaFormValue:
    f0: float
    f2: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"f0": self.f0, "f2": [float(x) for x in self.f2], "diagnostics": self.diagnostics}


def finite_part_fit(s, g):
    """Least-squares fit ``g ~ c_- s^{-1/2} + c_0 + c_1 s^{1/2}``; returns coefficients and rms residual."""
    A = np.stack([s**-0.5, np.ones_like(s), s**0.5], axis=1)
    coef, *_ = np.linalg.lstsq(A, g, rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - g) ** 2)))
    return coef, res


def _integrate_component(s, g, window, scale):
    body = simpson(g * s, x=np.log(s))
    coef, res = finite_part_fit(s[:window], g[:window])
    s0 = s[0]
    head = 2 * coef[0] * math.sqrt(s0) + coef[1] * s0 + (2.0 / 3.0) * coef[2] * s0**1.5
    # absolute floor keeps identically vanishing integrands from tripping the check
    rel = res / max(scale, 1e-9)
    return body + head, {"fit": coef.tolist(), "fit_residual": res, "fit_relative": rel, "head": head}


def eta_form(
    opfam,
    v,
    method="quadrature",
    s_min=None,
    s_max=None,
    points=None,
    pf_window=None,
    kappa=KAPPA,
    strict=True,
):
    """Eta form of the pair at vertex ``v``.

    Parameters
    ----------
    method : {"quadrature", "mellin", "lattice"}
        ``quadrature`` integrates on a log-spaced ``s`` grid with a small-``s``
        finite-part fit and exact large-``s`` tails.  ``mellin`` integrates the
        degree-2 part termwise in closed form.  ``lattice`` (base vertex only)
        removes the basis truncation through exact lattice sums.  The degree-0
        part always comes from the ``s`` grid.
    strict : bool
        Raise :class:`PoorFit` when a small-``s`` fit residual exceeds the
        configured relative tolerance.
    """
    s_min = DEFAULTS["s_min"] if s_min is None else s_min
    s_max = DEFAULTS["s_max"] if s_max is None else s_max
    points = DEFAULTS["s_points"] if points is None else points
    window = DEFAULTS["pf_window"] if pf_window is None else pf_window
    if s_min > 1e-3 or s_max < 30:
        raise ContractViolation("s grid must cover [1e-3, 30]")
    d = opfam.family.dim
    sd = spectral_data(opfam, v)
    s = np.geomspace(s_min, s_max, points)
    keys2 = form_basis(d, 2)
    with_grid2 = method == "quadrature" and keys2
    products = sd.pair_products() if with_grid2 else {}
    vals = {(): np.zeros(points, dtype=complex)}
    for key in products:
        vals[key] = np.zeros(points, dtype=complex)
    for k, sk in enumerate(s):
        g = integrand_from_spectrum(sd, sk, kappa, products=products)
        for key in vals:
            vals[key][k] = g[key]
    diag = {"method": method, "s_min": s_min, "s_max": s_max, "points": points, "window": window}
    # degree 0
    g0 = vals[()].real
    f0, info = _integrate_component(s, g0, window, float(np.max(np.abs(g0))))
    tail0 = 0.5 * kappa * float(np.sum(np.sign(sd.lam) * erfc(math.sqrt(s_max) * np.abs(sd.lam))))
    f0 += tail0
    diag["degree0"] = dict(info, tail=tail0)
    worst = info["fit_relative"]
    f2 = np.zeros(len(keys2))
    imag = 0.0
    if keys2:
        if method == "quadrature":
            for n, key in enumerate(keys2):
                g = vals[key]
                re, info_r = _integrate_component(s, g.real, window, float(np.max(np.abs(g.real))))
                im, _ = _integrate_component(s, g.imag, window, float(np.max(np.abs(g.real))))
                tail = _tail_degree2(sd.lam, products[key], s_max, kappa)
                f2[n] = re + tail.real
                imag = max(imag, abs(im + tail.imag))
                worst = max(worst, info_r["fit_relative"])
                diag[f"degree2_{key[0]}{key[1]}"] = dict(info_r, tail=float(tail.real))
        elif method == "mellin":
            m2 = mellin_degree2(sd, kappa)
            for n, key in enumerate(keys2):
                f2[n] = m2[key].real
                imag = max(imag, abs(m2[key].imag))
        elif method == "lattice":
            m2 = lattice_degree2(opfam, v, kappa)
            for n, key in enumerate(keys2):
                f2[n] = m2[key].real
                imag = max(imag, abs(m2[key].imag))
        else:
            raise ContractViolation(f"unknown method {method!r}")
    diag["imag_residual"] = imag
    diag["fit_relative_max"] = worst
    if strict and worst > TOLERANCES["fit_relative_residual"]:
        raise PoorFit(f"small-s fit residual {worst:.2e} exceeds tolerance")
    return EtaFormValue(float(f0), f2, diag)


# --------------------------------------------------------------------------
# family-level drivers


def germ_eta_form(fam, v, pair, K, method="lattice", **kw):
    """Eta form of ``pair`` at ``v`` with the gauge based at ``v`` itself."""
    op = discretize_family(fam, K, pair=pair, base=v)
    return eta_form(op, v, method=method, **kw)


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def cocycle_forms(fam, vertices, K, method="lattice", threads=1, **kw):
    """Sum over the three cyclic pairs of the germ eta forms at each vertex.

    Returns ``(f0_sum, f2_sum)`` arrays aligned with ``vertices``.
    """

    def work(v):
        vals = [germ_eta_form(fam, v, p, K, method=method, **kw) for p in PAIRS]
        return sum(x.f0 for x in vals), np.sum([x.f2 for x in vals], axis=0)

    res = _map(work, vertices, threads)
    return np.array([r[0] for r in res]), np.array([r[1] for r in res])


def cocycle_closedness(fam, K=64, method="lattice", threads=1, **kw):
    """Exterior derivative of the summed eta 2-forms on a 3-parameter chart.

    The sum is evaluated on the vertices with a full stencil and its derivative
    on the vertices one further inside.  Returns a dict of diagnostics with
    ``max_d`` the largest absolute component of ``d(sum eta)``.
    """
    from .families import fd_exterior_derivative
    from .maslov import maslov_index

    if fam.dim != 3:
        raise ContractViolation("closedness of 2-forms needs a 3-parameter chart")
    shape = fam.shape
    inner = [v for v in fam.vertices() if fam.is_interior(v, 1)]
    f0, f2 = cocycle_forms(fam, inner, K, method=method, threads=threads, **kw)
    sub = tuple(n - 2 for n in shape)
    field2 = np.zeros(sub + (3,))
    field0 = np.zeros(sub)
    for v, a, b in zip(inner, f0, f2):
        w = tuple(x - 1 for x in v)
        field2[w] = b
        field0[w] = a
    d = fd_exterior_derivative(field2, fam.h, 2)
    mas = {v: maslov_index(*(fam.frame(v, i) for i in range(3)), space=fam.space) for v in inner}
    return {
        "max_d": float(np.max(np.abs(d))),
        "f0_spread": float(np.ptp(field0)),
        "f0_mean": float(np.mean(field0)),
        "f0_integer_distance": float(np.max(np.abs(field0 - np.round(field0)))),
        "maslov": sorted(set(mas.values())),
        "f0_matches_maslov": bool(all(abs(a - mas[v]) < 1e-2 for v, a in zip(inner, f0))),
        "max_f2": float(np.max(np.abs(field2))),
    }


def surface_cocycle_integral(fam, K=64, method="lattice", threads=1, progress=None, **kw):
    """Integral over the sphere of the summed degree-2 eta forms."""
    verts = fam.vertices()
    out = np.zeros(len(verts))
    f0s = np.zeros(len(verts))

    def work(v):
        return cocycle_forms(fam, [v], K, method=method, **kw)

    chunks = _map(work, verts, threads)
    for n, (a, b) in enumerate(chunks):
        f0s[n] = a[0]
        out[n] = b[0][0]
        if progress is not None:
            progress(n + 1, len(verts))
    return {
        "integral": integrate_sphere_form(fam, out),
        "density": out.reshape(fam.shape),
        "f0_sum": f0s.reshape(fam.shape),
    }


def write_integrand_csv(opfam, v, path, s_min=None, s_max=None, points=None, kappa=KAPPA):
    """CSV trace of the integrand components on the ``s`` grid."""
    s_min = DEFAULTS["s_min"] if s_min is None else s_min
    s_max = DEFAULTS["s_max"] if s_max is None else s_max
    points = DEFAULTS["s_points"] if points is None else points
    sd = spectral_data(opfam, v)
    keys = [()] + form_basis(opfam.family.dim, 2)
    products = sd.pair_products()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["s"] + ["g" + "".join(map(str, k)) for k in keys])
        for sk in np.geomspace(s_min, s_max, points):
            g = integrand_from_spectrum(sd, sk, kappa, products=products)
            wr.writerow([f"{sk:.10e}"] + [f"{g[k].real:.12e}" for k in keys])
