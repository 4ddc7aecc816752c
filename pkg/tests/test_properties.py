"""Randomised invariants over SIAM parameters."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from impurity_vqdmft import oracle
from impurity_vqdmft.circuits import AnsatzSpec, hva_ansatz, hva_trotter_params, trotter_step
from impurity_vqdmft.greens import ExactEvolution, greens_time_series, lehmann_to_matsubara, self_energy
from impurity_vqdmft.model import MatsubaraGrid, SiamParams, hybridization_matsubara, mapping_cost
from impurity_vqdmft.pauli import QubitLayout, commutes, jwt_siam, siam_parts, to_dense, total_z
from impurity_vqdmft.sim import circuit_unitary

energy = st.floats(-2.5, 2.5, allow_nan=False)
coupling = st.floats(0.05, 1.2, allow_nan=False)


@st.composite
def siams(draw, B=None, U=None):
    B = draw(st.integers(0, 2)) if B is None else B
    U = draw(st.floats(0, 6)) if U is None else U
    mu = draw(st.floats(-1, 4))
    bath = [(draw(energy), draw(coupling)) for _ in range(B)]
    return SiamParams(U, mu, tuple(bath))


@given(siams())
@settings(max_examples=25, deadline=None)
def test_jwt_equivalence(s):
    assert np.max(np.abs(to_dense(jwt_siam(s)) - oracle.fock_hamiltonian(s))) < 1e-12


@given(siams())
@settings(max_examples=25, deadline=None)
def test_parts_conserve_excitations(s):
    lay = QubitLayout(s.B)
    z = total_z(lay)
    assert all(commutes(p, z) for p in siam_parts(s, lay).values())


@given(siams(B=1))
@settings(max_examples=15, deadline=None)
def test_hva_at_step_angles_equals_trotter(s):
    U = hva_ansatz(AnsatzSpec(1, 1)).unitary(hva_trotter_params(s, 0.1, 1))
    assert np.allclose(U, circuit_unitary(trotter_step(s, 0.1), 4), atol=1e-12)


@given(siams(B=1), st.floats(0.02, 0.2))
@settings(max_examples=15, deadline=None)
def test_trotter_error_is_third_order(s, dt):
    H = to_dense(jwt_siam(s))

    def err(h):
        U = circuit_unitary(trotter_step(s, h), 4)
        E = expm(-1j * H * h)
        tr = np.trace(E.conj().T @ U)
        return np.linalg.norm(U - tr / abs(tr) * E, 2)

    e1, e2 = err(dt), err(dt / 2)
    if e1 < 1e-10:  # commuting case, exact up to rounding
        return
    assert 6 <= e1 / e2 <= 10


@given(siams())
@settings(max_examples=20, deadline=None)
def test_g_at_zero_is_one(s):
    spec = oracle.siam_spectrum(s)
    ser = greens_time_series(spec.ground_state(), ExactEvolution(spec, 0.1), QubitLayout(s.B), 2)
    assert abs(ser.values[0] - 1) < 1e-6


@given(siams(U=0.0))
@settings(max_examples=20, deadline=None)
def test_u0_sigma_vanishes(s):
    grid = MatsubaraGrid(beta=200, n_max=60)
    lset = oracle.exact_lehmann(oracle.siam_spectrum(s), QubitLayout(s.B))
    g = lehmann_to_matsubara(lset, grid)
    assert np.max(np.abs(self_energy(g, s, grid).values)) < 1e-8


@given(siams())
@settings(max_examples=20, deadline=None)
def test_lehmann_sum_rule(s):
    lset = oracle.exact_lehmann(oracle.siam_spectrum(s), QubitLayout(s.B))
    assert abs(lset.total_weight - 1) < 1e-10


@given(siams(B=2))
@settings(max_examples=20, deadline=None)
def test_mapping_cost_zero_on_own_target(s):
    grid = MatsubaraGrid(beta=200, n_max=80)
    assert mapping_cost(s, hybridization_matsubara(s, grid)) < 1e-25
