"""The exact-diagonalization oracle checked against closed forms first,
since every other test leans on it."""

import numpy as np
import pytest
from conftest import HALF_FILLED, random_siam, random_state

from impurity_vqdmft import oracle
from impurity_vqdmft.greens import lehmann_to_matsubara
from impurity_vqdmft.model import MatsubaraGrid, SiamParams
from impurity_vqdmft.pauli import PauliSum, QubitLayout, jwt_siam, to_dense


def test_atomic_limit_energies():
    spec = oracle.siam_spectrum(SiamParams(4.0, 2.0))
    assert np.allclose(spec.energies, [-2, -2, 0, 0], atol=1e-12)


def test_identity_only_spectrum():
    spec = oracle.diagonalize(PauliSum(3, identity_coeff=0.7))
    assert np.allclose(spec.energies, 0.7)


def test_u0_energies_are_sums_of_single_particle_levels(rng):
    s = random_siam(rng, 2, U=0.0)
    # one spin species: impurity + bath single-particle matrix
    h1 = np.diag(np.concatenate([[-s.mu], s.eps]))
    h1[0, 1:] = h1[1:, 0] = s.V
    lev = np.linalg.eigvalsh(h1)
    sums = []
    for mask_a in range(1 << 3):
        for mask_b in range(1 << 3):
            sums.append(sum(lev[k] for k in range(3) if mask_a >> k & 1) + sum(lev[k] for k in range(3) if mask_b >> k & 1))
    spec = oracle.siam_spectrum(s)
    assert np.allclose(np.sort(sums), spec.energies, atol=1e-10)


def test_fock_builder_hermitian_and_number_conserving(rng):
    s = random_siam(rng, 2)
    H = oracle.fock_hamiltonian(s)
    assert np.allclose(H, H.conj().T)
    spec = oracle.siam_spectrum(s)
    for k in range(len(spec.energies)):
        v = spec.states[:, k]
        big = np.abs(v) > 1e-8
        secs = {tuple(x) for x in _sectors(QubitLayout(2))[big]}
        assert len(secs) == 1


def _sectors(layout):
    from impurity_vqdmft.sim import occupation_counts

    up, dn = occupation_counts(layout)
    return np.stack([up, dn], axis=1)


def test_propagate_group_property(rng):
    spec = oracle.siam_spectrum(random_siam(rng, 1))
    psi = random_state(rng, 4)
    a = oracle.exact_propagate(spec, oracle.exact_propagate(spec, psi, 0.3), 0.9)
    b = oracle.exact_propagate(spec, psi, 1.2)
    assert np.allclose(a, b, atol=1e-12)
    assert np.allclose(oracle.exact_propagate(spec, psi, 0.0), psi)


def test_propagate_eigenstate_is_phase_only(rng):
    spec = oracle.siam_spectrum(random_siam(rng, 1))
    v = spec.states[:, 3]
    out = oracle.exact_propagate(spec, v, 2.5)
    assert abs(abs(np.vdot(v, out)) - 1) < 1e-12


def test_lehmann_sum_rule_and_free_impurity():
    lset = oracle.exact_lehmann(oracle.siam_spectrum(SiamParams(0.0, 0.0)), QubitLayout(0))
    assert lset.total_weight == pytest.approx(1.0, abs=1e-12)
    assert len(lset.omegas) == 1 and abs(lset.omegas[0]) < 1e-12


@pytest.mark.parametrize("B", [1, 2, 3])
def test_lehmann_roots_at_bath_energies(rng, B):
    s = random_siam(rng, B)
    lset = oracle.exact_lehmann(oracle.siam_spectrum(s), QubitLayout(B))
    assert lset.total_weight == pytest.approx(1.0, abs=1e-10)
    assert np.max(np.abs(lset.real_axis(s.eps))) < 1e-8


def test_lehmann_matches_resolvent(grid):
    # G(iw) from the dense resolvent of the ground state, independent of the pole bookkeeping
    s = HALF_FILLED
    lay = QubitLayout(2)
    spec = oracle.siam_spectrum(s)
    H = to_dense(jwt_siam(s))
    cdag = oracle.creation_matrix(lay, 0)
    g0 = spec.ground_state("single")
    E0 = spec.ground_energy
    dim = H.shape[0]
    ref = []
    for w in grid.iw[:20]:
        p, h = cdag @ g0, cdag.conj().T @ g0
        part = np.vdot(p, np.linalg.solve((w + E0) * np.eye(dim) - H, p))
        hole = np.vdot(h, np.linalg.solve((w - E0) * np.eye(dim) + H, h))
        ref.append(part + hole)
    got = lehmann_to_matsubara(oracle.exact_lehmann(spec, lay, 0), grid)[:20]
    assert np.max(np.abs(got - np.array(ref))) < 1e-10


def test_particle_hole_symmetric_superposition():
    spec = oracle.siam_spectrum(HALF_FILLED)
    assert spec.ground_degenerate
    lset = oracle.exact_lehmann(spec, QubitLayout(2), 0, "superposition")
    pos = lset.omegas > 1e-9
    # alpha(w) = beta(w) pole by pole
    assert np.allclose(lset.alphas[pos], lset.betas[pos], atol=1e-10)


def test_reference_dmft_u0_converges():
    from impurity_vqdmft.model import HubbardParams

    hist = oracle.reference_dmft(HubbardParams(0.0, 0.0), 2, MatsubaraGrid(beta=200, n_max=100))
    assert hist.converged and len(hist.records) <= 2
    assert np.max(np.abs(hist.final.sigma)) < 1e-8
