"""Qualitative behavior of the shipped experiment scenarios."""

import numpy as np
from dataclasses import replace

from capspec.analysis import (
    average_periodograms,
    nmse,
    nyquist_ap,
    whitenoise_variance_closed_form,
    whitenoise_variance_report,
)
from capspec.patterns import CosetPattern
from capspec.scenarios import (
    CORRELATED_UB_BASELINE,
    VARIANCE_EXTRA_PATTERNS,
    extend_pattern,
    load_fixture,
)
from capspec.sensing import (
    ScenarioConfig,
    dbm_to_linear,
    extract_coset_observations,
    linear_density,
    synthesize_observations,
)
from capspec.estimator import estimate_correlated_bins, estimate_multicluster


def band_mask(thetas, lo, hi):
    return (thetas >= lo) & (thetas < hi)


class TestMultibandScenario:
    def test_cap_tracks_nap_with_elevated_bands(self):
        config = load_fixture("table2.ini")
        sensed = synthesize_observations(config, seed=(42, 0), keep_full_rate=True)
        _, cap = estimate_multicluster(sensed.sets)
        nap = average_periodograms([nyquist_ap(s.full_rate) for s in sensed.sets])
        assert nmse(cap, nap) < 0.05
        sigma2 = dbm_to_linear(config.noise_dbm)
        thetas = cap.thetas
        for user in config.users:
            mask = band_mask(thetas, user.band[0] + 0.005, user.band[1] - 0.005)
            mean_pl = np.mean([dbm_to_linear(p) for p in user.path_loss_db])
            expected = linear_density(user.power_dbm) * mean_pl
            assert expected > 5 * sigma2  # occupied bands sit well above the floor
            assert cap.values[mask].mean() > 4 * sigma2
            assert 0.5 < cap.values[mask].mean() / (expected + sigma2) < 2.0
        quiet = band_mask(thetas, 0.45, 0.55)
        assert cap.values[quiet].mean() < 5 * sigma2

    def test_some_leakage_but_no_negative_blowup(self):
        config = load_fixture("table2.ini")
        sensed = synthesize_observations(config, seed=(42, 1))
        _, cap = estimate_multicluster(sensed.sets)
        assert cap.negative_count < cap.values.size * 0.5
        assert cap.values.min() > -np.max(cap.values)


class TestWidebandCorrelatedScenario:
    def test_pair_cover_estimator_beats_circulant_assumption(self):
        config = load_fixture("table5.ini")
        config = replace(config, sensors_per_group=8)  # desk scale
        sensed = synthesize_observations(config, seed=(7, 0), keep_full_rate=True)
        cap_cb = estimate_correlated_bins(sensed.sets)
        nap = average_periodograms([nyquist_ap(s.full_rate) for s in sensed.sets])

        full = np.vstack([s.full_rate for s in sensed.sets])
        ub_pattern = CosetPattern(40, CORRELATED_UB_BASELINE)
        _, cap_ub = estimate_multicluster([extract_coset_observations(full, ub_pattern)])

        err_cb = nmse(cap_cb, nap)
        err_ub = nmse(cap_ub, nap)
        assert err_cb < 0.2
        assert err_ub > 10 * err_cb


class TestPatternSetFixtures:
    def test_bases_are_minimal_rulers_and_extensions_stay_identifiable(self):
        from capspec.patterns import is_circular_sparse_ruler, minimal_circular_sparse_ruler
        from capspec.scenarios import PATTERN_SETS
        from capspec.structure import check_identifiability

        for pattern_set in PATTERN_SETS.values():
            for period, (base_marks, extras) in pattern_set.items():
                base = CosetPattern(period, base_marks)
                assert is_circular_sparse_ruler(base)
                assert base.size == minimal_circular_sparse_ruler(period).pattern.size
                for count in range(1, len(extras) + 1):
                    assert check_identifiability(extend_pattern(base, extras, count))


class TestScenarioFiles:
    def test_explicit_family_key(self, tmp_path):
        from capspec.scenarios import load_scenario

        path = tmp_path / "cb.ini"
        path.write_text(
            "[scenario]\nperiod = 5\nsamples_per_coset = 8\nnoise_dbm = 0\n"
            "bin_mode = correlated\nsensors_per_group = 3\n"
            "family = 0,1,2 | 0,3,4 | 1,3,4 | 2,3,4\n"
            "[user.1]\nband = 0.1,0.25\npower_dbm = 10\npath_loss_db = -5\n",
            encoding="utf-8",
        )
        config = load_scenario(path)
        assert config.family.size == 4
        assert config.family.marks_per_pattern == 3
        sensed = synthesize_observations(config, seed=1)
        cap = estimate_correlated_bins(sensed.sets)
        assert cap.values.size == 40


class TestVariancePatternFixtures:
    def test_equal_rate_patterns_have_distinct_ordered_nmse(self):
        # three ways to reach 9 of 18 cosets: the lag-count spread differs,
        # and the Monte Carlo error follows the closed form for each
        base = CosetPattern(18, (0, 1, 4, 7, 9))
        sigma2, tau, runs = dbm_to_linear(7.0), 20, 400
        analytical, empirical = [], []
        for extras in VARIANCE_EXTRA_PATTERNS.values():
            pattern = extend_pattern(base, extras, 4)
            assert pattern.size == 9
            closed = whitenoise_variance_closed_form(pattern, sigma2, tau)
            config = ScenarioConfig(
                period=18, samples_per_coset=170, users=(), noise_dbm=7.0,
                pattern=pattern, sensors_per_cluster=tau,
            )
            report = whitenoise_variance_report(config, runs=runs, seed=88)
            assert report.relative_gap < 0.1
            analytical.append(closed.nmse)
            empirical.append(report.empirical_nmse)
        assert len(set(np.round(analytical, 12))) == 3
        assert np.argsort(analytical).tolist() == np.argsort(empirical).tolist()
