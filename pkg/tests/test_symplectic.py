from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_triple
from etaform.errors import ContractViolation, Degenerate
from etaform.symplectic import (
    affine_path,
    check_lagrangian,
    direct_sum,
    graph_over_il0,
    graph_unitary,
    haar_unitary,
    is_lagrangian,
    lagrangian_from_bi,
    lagrangian_from_graph,
    lagrangian_from_qform,
    orthonormal_frame,
    projection_along,
    q_form,
    random_lagrangian,
    space_from_complex_structure,
    standard_space,
    subspace_distance,
    transport_unitary,
    transport_unitary_alt,
    transversality_gap,
)

seeds = st.integers(0, 10_000)
dims = st.integers(1, 4)


def test_standard_space_residuals():
    for l in (1, 2, 5):
        assert all(r < 1e-14 for r in standard_space(l).residuals().values())


def test_space_from_rotated_structure(rng):
    sp = standard_space(2)
    U = haar_unitary(4, rng)
    I = U @ sp.I @ U.conj().T
    space = space_from_complex_structure(I)
    np.testing.assert_allclose(I @ space.Vplus, 1j * space.Vplus, atol=1e-12)
    np.testing.assert_allclose(I @ space.Vminus, -1j * space.Vminus, atol=1e-12)
    ok, res = is_lagrangian(space, random_lagrangian(space, 3))
    assert ok and res < 1e-12


@pytest.mark.parametrize(
    "I",
    [np.eye(2), np.diag([1j, 1j]), np.diag([2j, -0.5j])],
    ids=["hermitian", "traceful", "not-square-minus-one"],
)
def test_bad_complex_structure(I):
    with pytest.raises(ContractViolation):
        space_from_complex_structure(I)


def test_non_lagrangian_rejected():
    sp = standard_space(1)
    F = np.array([[1.0], [0.0]], dtype=complex)  # V+ is not Lagrangian
    assert not is_lagrangian(sp, F)[0]
    with pytest.raises(ContractViolation):
        check_lagrangian(sp, F)


@settings(max_examples=40, deadline=None)
@given(dims, seeds)
def test_graph_roundtrip(l, seed):
    sp = standard_space(l)
    phi = haar_unitary(l, np.random.default_rng(seed))
    L = lagrangian_from_graph(sp, phi)
    assert is_lagrangian(sp, L)[0]
    np.testing.assert_allclose(graph_unitary(sp, L), phi, atol=1e-10)
    # a different frame of the same subspace gives the same graph
    W = haar_unitary(l, np.random.default_rng(seed + 1))
    np.testing.assert_allclose(graph_unitary(sp, L @ W), phi, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(dims, seeds)
def test_transports(l, seed):
    sp, (L0, L1, _) = random_triple(l, seed)
    for T in (transport_unitary, transport_unitary_alt):
        U = T(sp, L0, L1)
        np.testing.assert_allclose(U.conj().T @ U, np.eye(2 * l), atol=1e-10)
        np.testing.assert_allclose(U @ sp.I, sp.I @ U, atol=1e-10)
        assert subspace_distance(U @ L0, L1) < 1e-9


@settings(max_examples=30, deadline=None)
@given(dims, seeds)
def test_qform_roundtrip(l, seed):
    sp, (L0, L1, _) = random_triple(l, seed)
    Q = q_form(L0, L1, sp)
    np.testing.assert_allclose(Q, Q.conj().T, atol=1e-9)
    # restricted to L0 the form is -Omega/2 = 0 for Lagrangian L0, and the graph is recovered
    assert subspace_distance(lagrangian_from_qform(L0, Q, sp), L1) < 1e-8


def test_projection_along(rng):
    sp, (L0, L1, _) = random_triple(2, 11)
    P = projection_along(L0, L1)
    np.testing.assert_allclose(P @ P, P, atol=1e-10)
    np.testing.assert_allclose(P @ L0, 0, atol=1e-10)
    np.testing.assert_allclose(P @ L1, L1, atol=1e-10)
    with pytest.raises(Degenerate):
        projection_along(L0, L0)


def test_affine_path_endpoints_and_transversality():
    sp, (L0, L1, L2) = random_triple(3, 5)
    assert subspace_distance(affine_path(L0, L1, L2, 0.0, sp), L1) < 1e-8
    assert subspace_distance(affine_path(L0, L1, L2, 1.0, sp), L2) < 1e-8
    for r in np.linspace(0, 1, 7):
        M = affine_path(L0, L1, L2, r, sp)
        assert is_lagrangian(sp, M)[0]
        assert transversality_gap(L0, M) > 1e-6


@settings(max_examples=30, deadline=None)
@given(dims, seeds)
def test_graph_over_il0_roundtrip(l, seed):
    sp, (L0, _, L2) = random_triple(l, seed)
    BI = graph_over_il0(L0, L2, sp)
    np.testing.assert_allclose(BI, BI.conj().T, atol=1e-8 * max(1, np.linalg.norm(BI)))
    assert subspace_distance(lagrangian_from_bi(L0, BI, sp), L2) < 1e-8


def test_graph_over_il0_needs_transversality():
    sp = standard_space(1)
    L = random_lagrangian(sp, 0)
    with pytest.raises(Degenerate):
        graph_over_il0(L, L, sp)


def test_direct_sum_is_lagrangian():
    a = random_lagrangian(standard_space(1), 1)
    b = random_lagrangian(standard_space(2), 2)
    F = direct_sum([a, b])
    assert is_lagrangian(standard_space(3), orthonormal_frame(F))[0]
