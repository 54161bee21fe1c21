"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The sphere-integral criterion is marked ``slow`` and runs only with ``-m slow``.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from conftest import brute_exp, random_hermitian
from etaform.cli import suite_closedness
from etaform.families import (
    CutoffPair,
    cp2_example,
    cp2_tautological_l0_frame,
    lattice_chern_number,
    rotating_l1,
    split_chern_integral,
    three_param_test,
)
from etaform.maslov import maslov_index, model_triple
from etaform.numerics import CliffordFormMatrix, duhamel_exp
from etaform.spectral_eta import (
    boundary_phases,
    eta_closed_form,
    eta_cocycle_sum,
    eta_galerkin,
    eta_heat_oracle,
    eta_zeta_oracle,
    lattice_low,
)
from etaform.superconnection import PAIRS, discretize_family, eta_form, surface_cocycle_integral
from etaform.symplectic import random_transverse_triple, standard_space


def record(name, ok, detail):
    line = f"[{name}] {'PASS' if ok else 'FAIL'}: {detail}"
    print("\n" + line)
    assert ok, line


def _triples(count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        l = int(rng.integers(1, 5))
        space = standard_space(l)
        yield space, random_transverse_triple(space, int(rng.integers(2**31)))


def test_c1_model_triple_identity():
    t0 = time.perf_counter()
    L = model_triple()
    total = eta_cocycle_sum(*L)
    tau = maslov_index(*L)
    dt = time.perf_counter() - t0
    ok = abs(total - tau) <= 1e-8 and abs(tau) == 1 and dt < 1
    record("C1 model triple", ok, f"eta sum {total:.12f}, index {tau}, {dt:.3f} s")


def test_c2_random_triples():
    t0 = time.perf_counter()
    worst, sym_ok = 0.0, True
    for space, (L0, L1, L2) in _triples(200, 1):
        tau = maslov_index(L0, L1, L2, space)
        worst = max(worst, abs(eta_cocycle_sum(L0, L1, L2, space) - tau))
        sym_ok &= maslov_index(L1, L2, L0, space) == tau == maslov_index(L2, L0, L1, space)
        sym_ok &= maslov_index(L1, L0, L2, space) == -tau
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and sym_ok and dt < 10
    record("C2 random triples", ok, f"max |eta sum - index| {worst:.2e}, symmetries {sym_ok}, {dt:.2f} s")


def test_c3_oracle_agreement():
    t0 = time.perf_counter()
    zeta_err = 0.0
    for space, (L0, L1, _) in _triples(500, 2):
        zeta_err = max(zeta_err, abs(eta_closed_form(L0, L1, space) - eta_zeta_oracle(L0, L1, 0.0, space)))
    heat_err = 0.0
    for space, (L0, L1, _) in _triples(10, 3):
        heat_err = max(heat_err, abs(eta_closed_form(L0, L1, space) - eta_heat_oracle(L0, L1, space=space)))
    gal_err = 0.0
    for space, (L0, L1, _) in _triples(5, 4):
        _, low = eta_galerkin(L0, L1, K=128, space=space)
        gal_err = max(gal_err, float(np.max(np.abs(low - boundary_phases(L0, L1, space).thetas))))
    # conjugated family operator away from its reference vertex
    fam = three_param_test()
    v = (4, 1, 3)
    op = discretize_family(fam, K=128, pair=(2, 0))
    ev = np.linalg.eigvalsh(op.matrix(v))
    low = np.sort(ev[np.argsort(np.abs(ev))[:10]])
    th = boundary_phases(fam.frame(v, 2), fam.frame(v, 0), fam.space).thetas
    gal_err = max(gal_err, float(np.max(np.abs(low - lattice_low(th, 10)))))
    dt = time.perf_counter() - t0
    ok = zeta_err <= 1e-12 and heat_err <= 1e-3 and gal_err <= 1e-4 and dt < 60
    record("C3 oracles", ok, f"zeta {zeta_err:.1e}, heat {heat_err:.1e}, galerkin {gal_err:.1e}, {dt:.1f} s")


def test_c4_duhamel_engine():
    import itertools

    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        d = int(rng.integers(0, 3))
        H = random_hermitian(n, rng, scale=float(rng.uniform(0.2, 3.0)))
        N = CliffordFormMatrix(d, n)
        for r in range(1, d + 1):
            for I in itertools.combinations(range(d), r):
                for c in (0, 1):
                    N[(I, c)] = random_hermitian(n, rng, scale=0.5)
        ref = brute_exp(H, N)
        worst = max(worst, (duhamel_exp(H, N) - ref).norm() / max(1.0, ref.norm()))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 30
    record("C4 Duhamel", ok, f"max relative difference {worst:.1e} over 100 instances, {dt:.1f} s")


def test_c5_cp2_characteristic_classes():
    t0 = time.perf_counter()
    coarse = cp2_example(16, 32)
    T = np.stack(
        [np.stack([cp2_tautological_l0_frame(*coarse.coords((i, j))) for j in range(32)]) for i in range(16)]
    )
    n, raw, res = lattice_chern_number(coarse, T)
    integral = split_chern_integral(cp2_example(64, 128))
    dt = time.perf_counter() - t0
    ok = n == -1 and res < 0.05 and abs(integral + 2) <= 0.02 and dt < 60
    record("C5 CP2 classes", ok, f"lattice c1(T) {n} (raw {raw:.4f}), split integral {integral:.5f}, {dt:.1f} s")


def test_c6_degree0_calibration():
    t0 = time.perf_counter()
    fam = rotating_l1()
    v = fam.basepoint
    worst = 0.0
    for pair in PAIRS:
        op = discretize_family(fam, K=128, pair=pair)
        f0 = eta_form(op, v, s_min=1e-3, s_max=30.0, points=200).f0
        worst = max(worst, abs(f0 - eta_closed_form(fam.frame(v, pair[0]), fam.frame(v, pair[1]))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-2 and dt < 120
    record("C6 degree-0 calibration", ok, f"max |f0 - eta| {worst:.2e}, {dt:.1f} s")


def test_c7_gauge_independence():
    t0 = time.perf_counter()
    choices = [(CutoffPair(), "standard"), (CutoffPair(0.25, 0.35), "alt")]
    d0 = d2 = 0.0
    for fam, v in ((rotating_l1(), (13,)), (three_param_test(), (3, 2, 2))):
        for pair in PAIRS:
            vals = [
                eta_form(discretize_family(fam, K=128, pair=pair, cutoff=c, transport=t), v, method="quadrature")
                for c, t in choices
            ]
            d0 = max(d0, abs(vals[0].f0 - vals[1].f0))
            d2 = max(d2, float(np.max(np.abs(vals[0].f2 - vals[1].f2), initial=0.0)))
    dt = time.perf_counter() - t0
    ok = d0 <= 1e-6 and d2 <= 1e-4 and dt < 300
    record("C7 gauge independence", ok, f"f0 diff {d0:.1e}, f2 diff {d2:.1e}, {dt:.1f} s")


def test_c8_closedness():
    t0 = time.perf_counter()
    passed, res = suite_closedness(seed=4, n=5, h=0.04, refinements=2, K=64)
    dt = time.perf_counter() - t0
    ds = ", ".join(f"{r['max_d']:.2e}" for r in res["runs"])
    orders = ", ".join(f"{o:.2f}" for o in res["orders"])
    run0 = res["runs"][0]
    ok = passed and dt < 900
    record(
        "C8 closedness",
        ok,
        f"max|d| [{ds}], orders [{orders}], f0 spread {res['f0_spread']:.1e}, "
        f"index {run0['maslov']}, f0 mean {run0['f0_mean']:.6f}, {dt:.0f} s",
    )


@pytest.mark.slow
def test_c9_sphere_integral():
    t0 = time.perf_counter()
    coarse = surface_cocycle_integral(cp2_example(16, 32), K=64, threads=4)["integral"]
    fine = surface_cocycle_integral(cp2_example(32, 64), K=64, threads=4)["integral"]
    dt = time.perf_counter() - t0
    ok = abs(coarse + 2) <= 0.2 and abs(fine + 2) < abs(coarse + 2) and dt < 1800
    record("C9 sphere integral", ok, f"16x32 {coarse:.5f}, 32x64 {fine:.5f} (target -2), {dt:.0f} s")
