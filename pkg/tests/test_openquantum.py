import warnings

import numpy as np
import pytest

from annealer_lab.model import thermal_energy_ghz
from annealer_lab.openquantum import (
    FROZEN,
    SLOWDOWN,
    THERMALIZED,
    GoldenRuleValidityWarning,
    NoiseParams,
    PointerRegimeAdvisory,
    RatePoint,
    classify_regimes,
    detailed_balance_up,
    equilibrium_p0,
    evolve_populations,
    gaussian_mrt_rate,
    golden_rule_rate,
    niba_rate,
    spectral_density,
)
from annealer_lab.spectrum import GapProfile


def make_params(**kw):
    base = dict(w_ghz=0.40, eta=0.24, tau_c_s=1e-12, temperature_mk=15.5)
    base.update(kw)
    return NoiseParams(**base)


def synthetic_profile(s, omega, a_elem, hamming):
    n = len(s)
    nan = np.full((n, 1), np.nan)
    return GapProfile(
        s=np.asarray(s, float),
        e0_ghz=np.zeros(n),
        e1_ghz=np.asarray(omega, float),
        omega10_ghz=np.asarray(omega, float),
        a_elem=np.asarray(a_elem, float),
        hamming=np.asarray(hamming, float),
        pol0=nan,
        pol1=nan,
        degenerate=np.zeros(n, bool),
    )


class TestNoiseParams:
    def test_epsilon_p_from_fluctuation_dissipation(self):
        p = make_params()
        # eps_p = hbar W^2 / (2 kB T), here in angular rad/ns
        expected = p.w_angular**2 * p.beta_ns / 2.0
        assert p.epsilon_p_angular == pytest.approx(expected, rel=1e-12)
        hotter = make_params(temperature_mk=31.0)
        assert hotter.epsilon_p_angular == pytest.approx(expected / 2.0, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            make_params(w_ghz=0.0)
        with pytest.raises(ValueError):
            make_params(eta=-0.1)
        with pytest.raises(ValueError):
            make_params(tau_c_s=0.0)
        with pytest.raises(ValueError):
            make_params(temperature_mk=0.0)


class TestSpectralDensity:
    def test_zero_frequency_limit_both_sides(self):
        p = make_params()
        expected = p.eta / p.beta_ns  # eta * kB T / hbar
        assert spectral_density(p, 1e-12) == pytest.approx(expected, rel=1e-6)
        assert spectral_density(p, -1e-12) == pytest.approx(expected, rel=1e-6)
        assert spectral_density(p, 0.0) == pytest.approx(expected, rel=1e-12)

    def test_kms_condition(self):
        p = make_params(temperature_mk=21.0)
        for om in (0.3, 1.0, 4.0, 11.0):
            ratio = spectral_density(p, om) / spectral_density(p, -om)
            # the cutoff factor contributes exp(-2 omega tau_c) on top of KMS
            assert ratio == pytest.approx(np.exp(om * p.beta_ns - 2 * om * p.tau_c_ns), rel=1e-9)
            assert ratio == pytest.approx(np.exp(om * p.beta_ns), rel=0.03)

    def test_thermal_frequency_ratio_is_e(self):
        # 0.324 GHz matches kB*15.5mK/h within 1%, so the KMS ratio is ~e
        p = make_params(temperature_mk=15.5)
        om = 2 * np.pi * 0.324
        ratio = spectral_density(p, om) / spectral_density(p, -om)
        assert ratio == pytest.approx(np.e, rel=0.02)
        assert spectral_density(p, om) > 0


class TestGoldenRule:
    def test_zero_matrix_element(self):
        assert golden_rule_rate(0.0, 2.0, make_params()) == 0.0

    def test_linearity_in_a(self):
        p = make_params()
        assert golden_rule_rate(2.0, 2.0, p) == pytest.approx(2 * golden_rule_rate(1.0, 2.0, p))

    def test_validity_warning(self):
        with pytest.warns(GoldenRuleValidityWarning):
            golden_rule_rate(1.0, 0.1, make_params(w_ghz=0.4))


class TestNibaRate:
    def test_eta_zero_matches_gaussian_closed_form(self):
        p = make_params(eta=0.0)
        for om in (0.1, 0.3, 0.6, 1.0, 2.0):
            for h in (1.0, 2.0, 4.0, 6.0, 8.0):
                num = niba_rate(om, h, 1.0, p)
                ana = gaussian_mrt_rate(om, h, 1.0, p)
                assert num == pytest.approx(ana, rel=0.01)

    def test_detailed_balance(self):
        p = make_params()
        kt = thermal_energy_ghz(p.temperature_mk)
        for h in (1.0, 8.0):
            for om in (0.05, 0.1, 0.2, 0.5, 1.0):
                ratio = niba_rate(om, h, 1.0, p) / niba_rate(-om, h, 1.0, p)
                assert ratio == pytest.approx(np.exp(om / kt), rel=0.02)

    def test_weak_coupling_golden_rule_limit(self):
        for eta in (0.002, 0.005, 0.01):
            for h in (1.0, 2.0, 4.0):
                p = make_params(w_ghz=0.02, eta=eta)
                for om in (0.5, 0.8):
                    nb = niba_rate(om, h, 1.0, p)
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", GoldenRuleValidityWarning)
                        gr = golden_rule_rate(1.0, om, p)
                    assert nb == pytest.approx(gr, rel=0.05)

    def test_barrier_width_suppression_in_line_core(self):
        # with the detuning inside the rescaled linewidth, wider barriers
        # strictly suppress the rate (the h^(-3/2) prefactor dominates)
        p = make_params(w_ghz=0.2, eta=0.0, temperature_mk=50.0)
        om_ghz = 2.8 / (2 * np.pi)
        rates = [gaussian_mrt_rate(om_ghz, h, 1.0, p) for h in (2.0, 4.0, 8.0)]
        assert rates[0] > rates[1] > rates[2]
        numeric = [niba_rate(om_ghz, h, 1.0, p) for h in (2.0, 4.0, 8.0)]
        assert numeric[0] > numeric[1] > numeric[2]

    def test_rate_scales_with_a_elem(self):
        p = make_params()
        r1 = niba_rate(0.5, 4.0, 1.0, p)
        r2 = niba_rate(0.5, 4.0, 2.5, p)
        assert r2 == pytest.approx(2.5 * r1, rel=1e-9)

    def test_hamming_guard(self):
        with pytest.raises(ValueError):
            niba_rate(0.5, 0.0, 1.0, make_params())


class TestRatePoints:
    def test_detailed_balance_up(self):
        kt = thermal_energy_ghz(15.5)
        up = detailed_balance_up(1e6, 0.5, 15.5)
        assert up == pytest.approx(1e6 * np.exp(-0.5 / kt), rel=1e-12)

    def test_negative_rates_rejected(self):
        with pytest.raises(ValueError):
            RatePoint(s=0.5, gamma_down=-1.0, gamma_up=0.0)


class TestEvolvePopulations:
    def test_quasi_static_limit(self):
        s = np.linspace(0, 1, 201)
        omega = 0.3 + 2.0 * s
        prof = synthetic_profile(s, omega, np.ones_like(s), np.ones_like(s))
        params = make_params(temperature_mk=20.0)
        huge = [
            RatePoint(s=float(si), gamma_down=1e12, gamma_up=detailed_balance_up(1e12, float(om), 20.0))
            for si, om in zip(s, omega)
        ]
        trace = evolve_populations(prof, params, t_qa_s=2e-5, rate_points=huge)
        eq = equilibrium_p0(omega, 20.0)
        assert np.max(np.abs(trace.p0 - eq)) < 1e-3
        assert np.all(np.abs(trace.p0 + trace.p1 - 1.0) < 1e-9)

    def test_frozen_limit(self):
        s = np.linspace(0, 1, 51)
        omega = 0.3 + 2.0 * s
        prof = synthetic_profile(s, omega, np.ones_like(s), np.ones_like(s))
        zero = [RatePoint(s=float(si), gamma_down=0.0, gamma_up=0.0) for si in s]
        trace = evolve_populations(prof, make_params(), t_qa_s=2e-5, rate_points=zero)
        assert trace.p0[-1] == pytest.approx(trace.p0[0], abs=1e-12)

    def test_profile_coverage_required(self):
        s = np.linspace(0.2, 1.0, 20)
        prof = synthetic_profile(s, np.ones_like(s), np.ones_like(s), np.ones_like(s))
        with pytest.raises(ValueError):
            evolve_populations(prof, make_params(), t_qa_s=2e-5, rate_points=[])

    def test_pointer_advisory(self):
        s = np.linspace(0, 1, 21)
        omega = np.full_like(s, 0.1)  # below W = 0.4 GHz
        prof = synthetic_profile(s, omega, np.ones_like(s), np.ones_like(s))
        pts = [RatePoint(s=float(si), gamma_down=0.0, gamma_up=0.0) for si in s]
        with pytest.warns(PointerRegimeAdvisory):
            evolve_populations(prof, make_params(), t_qa_s=2e-5, rate_points=pts)

    def test_population_csv(self):
        s = np.linspace(0, 1, 11)
        prof = synthetic_profile(s, np.ones_like(s), np.ones_like(s), np.ones_like(s))
        pts = [RatePoint(s=float(si), gamma_down=0.0, gamma_up=0.0) for si in s]
        trace = evolve_populations(prof, make_params(), t_qa_s=2e-5, rate_points=pts)
        lines = trace.to_csv().splitlines()
        assert lines[0] == "s,p0,p1,p0_eq"
        assert len(lines) == 12


class TestClassifyRegimes:
    def test_boundary_tie_break(self):
        t_qa = 1.0
        pts = [RatePoint(s=0.0, gamma_down=10.0, gamma_up=0.0)]
        annotated, _ = classify_regimes(pts, t_qa)
        assert annotated[0].regime == THERMALIZED  # closed boundary on the upper class

    def test_monotone_decay_two_boundaries(self):
        s = np.linspace(0, 1, 101)
        gammas = 1e8 * np.exp(-40 * s)  # decays through both thresholds
        pts = [RatePoint(s=float(si), gamma_down=float(g), gamma_up=0.0) for si, g in zip(s, gammas)]
        annotated, boundaries = classify_regimes(pts, t_qa_s=2e-5)
        assert [b[1:] for b in boundaries] == [(THERMALIZED, SLOWDOWN), (SLOWDOWN, FROZEN)]
        regimes = [p.regime for p in annotated]
        assert regimes == sorted(regimes, key=[THERMALIZED, SLOWDOWN, FROZEN].index)

    def test_constant_large_rate_single_region(self):
        pts = [RatePoint(s=float(si), gamma_down=1e9, gamma_up=0.0) for si in np.linspace(0, 1, 11)]
        annotated, boundaries = classify_regimes(pts, t_qa_s=2e-5)
        assert boundaries == []
        assert all(p.regime == THERMALIZED for p in annotated)
