import numpy as np
import pytest
from conftest import HALF_FILLED, REFERENCE

from impurity_vqdmft import oracle
from impurity_vqdmft.greens import (
    ExactEvolution, GreensSeries, LehmannSet, SelfEnergySamples, TrotterEvolution, damped_ft,
    fft_seed, greens_time_series, lehmann_fit, lehmann_to_matsubara, lehmann_to_realfreq,
    quasiparticle_weight, realfreq_from_ft, self_energy, spectral_function, z_from_lehmann,
)
from impurity_vqdmft.model import MatsubaraGrid, SiamParams, weiss_function
from impurity_vqdmft.pauli import QubitLayout

T = np.arange(501) * 0.1


def _series(lset, t=T):
    return GreensSeries(t, lset.time_series(t))


def test_lehmann_set_validation():
    with pytest.raises(ValueError):
        LehmannSet.from_arrays([1.0], [-0.5], [0.0])
    with pytest.raises(ValueError):
        LehmannSet.from_arrays([1.0, 2.0], [0.5], [0.0])


def test_g_at_zero_and_free_mode():
    spec = oracle.siam_spectrum(REFERENCE)
    lay = QubitLayout(2)
    s = greens_time_series(spec.ground_state(), ExactEvolution(spec, 0.1), lay, 5)
    assert abs(s.values[0] - 1) < 1e-6
    free = oracle.siam_spectrum(SiamParams(0.0, 0.0))
    s = greens_time_series(free.ground_state(), ExactEvolution(free, 0.5), QubitLayout(0), 40)
    assert np.allclose(s.values, 1.0, atol=1e-12)


@pytest.mark.parametrize("spin", [0, 1])
def test_exact_series_matches_oracle_lehmann(spin):
    spec = oracle.siam_spectrum(REFERENCE)
    lay = QubitLayout(2)
    s = greens_time_series(spec.ground_state(), ExactEvolution(spec, 0.1), lay, 200, spin=spin)
    ref = oracle.exact_lehmann(spec, lay, spin).time_series(s.times)
    assert np.max(np.abs(s.values - ref)) < 1e-8


def test_hadamard_protocol_reproduces_values():
    spec = oracle.siam_spectrum(HALF_FILLED)
    s = greens_time_series(spec.ground_state(), ExactEvolution(spec, 0.3), QubitLayout(2), 6, hadamard_check=True)
    assert s.values.size == 7


def test_trotter_series_converges_to_exact():
    spec = oracle.siam_spectrum(REFERENCE)
    lay = QubitLayout(2)
    gs = spec.ground_state()
    ex = greens_time_series(gs, ExactEvolution(spec, 0.1), lay, 50).values
    errs = [
        np.max(np.abs(greens_time_series(gs, TrotterEvolution(REFERENCE, 0.1, k), lay, 50).values - ex))
        for k in (1, 2)
    ]
    assert errs[1] < errs[0] / 3


def test_fft_seed_single_and_double_pole():
    bin_w = 2 * np.pi / 50
    one = LehmannSet.from_arrays([1.5], [1.0], [0.0])
    c = fft_seed(_series(one))
    assert min(abs(np.array(c) - 1.5)) < bin_w
    two = LehmannSet.from_arrays([0.6, 0.6 + 4 * bin_w], [0.5, 0.5], [0.0, 0.0])
    c = np.array(fft_seed(_series(two)))
    assert min(abs(c - 0.6)) < bin_w and min(abs(c - 0.6 - 4 * bin_w)) < bin_w
    assert fft_seed(GreensSeries(T, np.zeros_like(T))) == []
    with pytest.raises(ValueError):
        fft_seed(GreensSeries(T[:10], np.ones(10)))


@pytest.mark.parametrize("siam,deg", [(REFERENCE, "single"), (HALF_FILLED, "superposition")])
def test_lehmann_fit_roundtrip(siam, deg, grid):
    lset = oracle.exact_lehmann(oracle.siam_spectrum(siam), QubitLayout(2), 0, deg)
    fit = lehmann_fit(_series(lset), siam)
    f = fit.lehmann
    assert fit.sum_rule_error <= 1e-2
    assert f.omegas.size == lset.omegas.size
    assert np.max(np.abs(f.omegas - lset.omegas)) < 1e-3
    assert np.max(np.abs((f.alphas + f.betas) - (lset.alphas + lset.betas))) < 1e-3
    assert np.max(np.abs(lehmann_to_matsubara(f, grid) - lehmann_to_matsubara(lset, grid))) < 1e-3


def test_single_pole_fit():
    one = LehmannSet.from_arrays([0.8], [0.7], [0.3])
    fit = lehmann_fit(_series(one), None)
    assert fit.lehmann.omegas.size == 1
    assert fit.residual < 1e-10
    assert fit.lehmann.omegas[0] == pytest.approx(0.8, abs=1e-8)


def test_matsubara_closed_forms(grid):
    zero = LehmannSet.from_arrays([0.0], [0.4], [0.6])
    assert np.allclose(lehmann_to_matsubara(zero, grid), 1 / grid.iw)
    # delta-weight spectral integral
    ls = LehmannSet.from_arrays([0.3, 1.7], [0.2, 0.1], [0.5, 0.2])
    poles = np.concatenate([ls.omegas, -ls.omegas])
    weights = np.concatenate([ls.alphas, ls.betas])
    ref = np.sum(weights[None, :] / (grid.iw[:, None] - poles[None, :]), axis=1)
    assert np.allclose(lehmann_to_matsubara(ls, grid), ref, atol=1e-14)


def test_realfreq_lorentzian_and_sum_rule():
    w = np.linspace(-20, 20, 40001)
    one = LehmannSet.from_arrays([1.0], [1.0], [0.0])
    A = spectral_function(one, w, 0.1)
    assert np.allclose(A, 0.1 / np.pi / ((w - 1) ** 2 + 0.01))
    lset = oracle.exact_lehmann(oracle.siam_spectrum(REFERENCE), QubitLayout(2))
    integral = np.trapezoid(spectral_function(lset, w, 0.1), w)
    assert abs(integral - 1) < 2 * 0.1 / np.pi * 1.0 / 10  # Lorentzian tails beyond |w| = 20
    with pytest.raises(ValueError):
        lehmann_to_realfreq(one, w, 0.0)


def test_realfreq_peaks_mirror_pole_structure():
    lset = oracle.exact_lehmann(oracle.siam_spectrum(HALF_FILLED), QubitLayout(2), 0, "superposition")
    w = np.linspace(-8, 8, 16001)
    A = spectral_function(lset, w, 0.01)
    assert np.allclose(A, A[::-1], atol=1e-10)
    from scipy.signal import find_peaks

    peaks, _ = find_peaks(A)
    assert len(peaks) == 2 * lset.omegas.size


def test_damped_ft_against_realfreq():
    one = LehmannSet.from_arrays([1.5], [1.0], [0.0])
    omegas, g = realfreq_from_ft(_series(one), 0.1)
    keep = np.abs(omegas) < 6
    ref = lehmann_to_realfreq(one, omegas[keep], 0.1)
    assert np.max(np.abs(g[keep].imag - ref.imag)) / np.pi < 0.05
    w, F = damped_ft(_series(one), 0.1)
    assert abs(w[np.argmax(np.abs(F))] - 1.5) < 2 * np.pi / 50


def test_self_energy_u0_vanishes(grid):
    s = SiamParams.from_arrays(0.0, 0.3, [-0.8, 0.5], [0.6, 0.4])
    lset = oracle.exact_lehmann(oracle.siam_spectrum(s), QubitLayout(2))
    sig = self_energy(lehmann_to_matsubara(lset, grid), s, grid)
    assert np.max(np.abs(sig.values)) < 1e-8
    assert quasiparticle_weight(sig) == pytest.approx(1.0)


def test_self_energy_interacting_and_dyson(grid):
    lset = oracle.exact_lehmann(oracle.siam_spectrum(REFERENCE), QubitLayout(2))
    g = lehmann_to_matsubara(lset, grid)
    sig = self_energy(g, REFERENCE, grid)
    assert sig.values[0].imag < 0
    assert np.all(sig.values.imag <= 1e-6)
    back = 1 / (weiss_function(REFERENCE, grid) - sig.values)
    assert np.max(np.abs(back - g)) < 1e-10
    with pytest.raises(ZeroDivisionError):
        self_energy(np.zeros(len(grid)), REFERENCE, grid)


def test_quasiparticle_weight_line(grid):
    for c in (0.0, 0.5, 3.0):
        sig = SelfEnergySamples(grid, -1j * c * grid.omegas)
        assert quasiparticle_weight(sig, 2) == pytest.approx(1 / (1 + c))
        assert quasiparticle_weight(sig, 1) == pytest.approx(1 / (1 + c))
    with pytest.raises(ValueError):
        quasiparticle_weight(SelfEnergySamples(grid, 2j * grid.omegas), 2)
    with pytest.raises(ValueError):
        quasiparticle_weight(SelfEnergySamples(grid, 0 * grid.iw), 0)


def test_reference_z_is_a_fraction(grid):
    lset = oracle.exact_lehmann(oracle.siam_spectrum(REFERENCE), QubitLayout(2))
    z = z_from_lehmann(lset, REFERENCE, grid)
    assert 0 < z < 1
    assert z == pytest.approx(0.71996, abs=1e-4)


def test_csv_roundtrip(tmp_path):
    s = _series(LehmannSet.from_arrays([0.2, 1.1], [0.3, 0.2], [0.4, 0.1]))
    s.to_csv(tmp_path / "g.csv")
    back = GreensSeries.from_csv(tmp_path / "g.csv")
    assert np.array_equal(back.values, s.values) and np.array_equal(back.times, s.times)
    assert (tmp_path / "g.csv").read_text().splitlines()[0] == "t,ReG,ImG"
    ls = LehmannSet.from_arrays([0.2, 1.1], [0.3, 0.2], [0.4, 0.1])
    ls.to_csv(tmp_path / "l.csv")
    back = LehmannSet.from_csv(tmp_path / "l.csv")
    assert np.array_equal(back.omegas, ls.omegas) and np.array_equal(back.betas, ls.betas)
