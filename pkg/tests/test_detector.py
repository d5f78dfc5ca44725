import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emergency_response.detector import (
    Burr3,
    BurrParams,
    DetectorConfig,
    DetectorState,
    ExtrapolationDetector,
    burr3_cdf,
    burr3_logpdf,
    burr3_quantile,
    calibrate_threshold,
    calibration_report,
    empirical_quantile,
    extrapolate,
    fit_burr3,
    parse_error_file,
    push_and_check,
    trailing_exceedances,
)
from emergency_response.exceptions import DegenerateDataError, InsufficientDataError


def feed(values, cfg):
    state = DetectorState(window=cfg.window)
    out = None
    for v in values:
        out = push_and_check(state, cfg, v)
    return out


def burr_samples(c, d, loc, scale, n, seed):
    u = np.random.default_rng(seed).uniform(size=n)
    return loc + scale * (u ** (-1.0 / d) - 1.0) ** (-1.0 / c)


class TestPushAndCheck:
    def test_constant(self):
        fired, ext = feed([10.0] * 15, DetectorConfig(threshold=35.0))
        assert not fired
        np.testing.assert_allclose(ext, [10.0] * 7, atol=1e-9)

    def test_rising_ramp_fires(self):
        t = np.arange(1, 16)
        fired, ext = feed(30.0 + t, DetectorConfig(threshold=35.0))
        np.testing.assert_allclose(ext, np.arange(46, 53), atol=1e-9)
        assert trailing_exceedances(ext, 35.0) == 7
        assert fired

    def test_falling_ramp_quiet(self):
        t = np.arange(1, 16)
        fired, ext = feed(50.0 - 2 * t, DetectorConfig(threshold=35.0))
        np.testing.assert_allclose(ext, 50.0 - 2 * np.arange(16, 23), atol=1e-9)
        assert ext[0] == pytest.approx(18.0)
        assert not fired

    def test_buffer_filling(self):
        cfg = DetectorConfig()
        state = DetectorState(window=cfg.window)
        for k in range(14):
            fired, ext = push_and_check(state, cfg, 100.0 + k)
            assert not fired and ext.size == 0
        fired, ext = push_and_check(state, cfg, 114.0)
        assert fired and ext.size == 7

    def test_buffer_indices_contiguous(self):
        cfg = DetectorConfig()
        state = DetectorState(window=cfg.window)
        for k in range(40):
            push_and_check(state, cfg, float(k))
        steps = [s for s, _ in state.buffer]
        assert len(steps) == 15 and steps == list(range(25, 40))

    def test_non_finite(self):
        cfg = DetectorConfig()
        with pytest.raises(ValueError):
            push_and_check(DetectorState(), cfg, math.inf)

    def test_window_mismatch(self):
        with pytest.raises(ValueError):
            push_and_check(DetectorState(window=10), DetectorConfig(), 1.0)

    @pytest.mark.parametrize("kw", [{"min_exceed": 0}, {"min_exceed": 8}, {"window": 3}, {"degree": -1}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            DetectorConfig(**kw)

    def test_trailing_run_only(self):
        # the run must end at the last extrapolated value
        assert trailing_exceedances([40, 40, 40, 30], 35) == 0
        assert trailing_exceedances([30, 40, 40, 40], 35) == 3


@settings(max_examples=200, deadline=None)
@given(
    c0=st.floats(-50, 50), c1=st.floats(-5, 5), c2=st.floats(-0.5, 0.5),
    degree=st.sampled_from([0, 1, 2]),
)
def test_low_degree_buffers_extrapolate_exactly(c0, c1, c2, degree):
    coef = [c0, c1, c2][: degree + 1]
    poly = np.polynomial.Polynomial(coef)
    cfg = DetectorConfig()
    buf = poly(np.arange(1, 16))
    ext = extrapolate(buf, cfg)
    np.testing.assert_allclose(ext, poly(np.arange(16, 23)), rtol=0, atol=1e-6)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t1=st.floats(0, 60), t2=st.floats(0, 60))
def test_lower_threshold_never_unfires(seed, t1, t2):
    lo, hi = sorted((t1, t2))
    buf = np.random.default_rng(seed).normal(30, 5, 15)
    f_hi, _ = feed(buf, DetectorConfig(threshold=hi))
    f_lo, _ = feed(buf, DetectorConfig(threshold=lo))
    assert f_lo or not f_hi


class TestBurr:
    def test_cdf_at_loc(self):
        assert burr3_cdf(2.0, BurrParams(3.0, 2.0, loc=2.0)) == 0.0

    def test_cdf_log_logistic(self):
        assert burr3_cdf(1.0, BurrParams(1.0, 1.0)) == pytest.approx(0.5, abs=1e-15)

    def test_cdf_limit(self):
        assert burr3_cdf(1e12, BurrParams(2.0, 1.5)) == pytest.approx(1.0, abs=1e-12)

    def test_quantile_reference(self):
        q = burr3_quantile(0.995, BurrParams(16.926, 1.115, -0.103, 25.985))
        assert abs(q - 35.65) <= 0.01

    def test_quantile_median(self):
        assert burr3_quantile(0.5, BurrParams(1.0, 1.0)) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("p", [0.01, 0.5, 0.995])
    def test_roundtrip(self, p):
        params = BurrParams(16.926, 1.115, -0.103, 25.985)
        assert burr3_cdf(burr3_quantile(p, params), params) == pytest.approx(p, abs=1e-10)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.5])
    def test_quantile_domain(self, p):
        with pytest.raises(ValueError):
            burr3_quantile(p, BurrParams(1.0, 1.0))

    @pytest.mark.parametrize("kw", [{"c": 0.0, "d": 1.0}, {"c": 1.0, "d": -1.0}, {"c": 1.0, "d": 1.0, "scale": 0.0}])
    def test_param_validation(self, kw):
        with pytest.raises(ValueError):
            BurrParams(**kw)

    @settings(max_examples=100, deadline=None)
    @given(
        c=st.floats(0.5, 20), d=st.floats(0.2, 5), loc=st.floats(-5, 5), scale=st.floats(0.1, 30),
        xs=st.lists(st.floats(-10, 200), min_size=2, max_size=20),
    )
    def test_cdf_monotone_and_bounded(self, c, d, loc, scale, xs):
        p = BurrParams(c, d, loc, scale)
        xs = np.sort(xs)
        vals = burr3_cdf(xs, p)
        assert np.all(np.diff(vals) >= 0)
        assert np.all((vals >= 0) & (vals <= 1))
        # away from the support edge, where the cdf underflows to 0
        inside = ((xs - loc) / scale > 1e-2) & (vals < 1)
        assert np.all(vals[inside] > 0)

    def test_logpdf_matches_cdf_derivative(self):
        p = BurrParams(4.0, 1.5, 1.0, 3.0)
        x = np.linspace(1.5, 12, 30)
        h = 1e-6
        numeric = (burr3_cdf(x + h, p) - burr3_cdf(x - h, p)) / (2 * h)
        np.testing.assert_allclose(np.exp(burr3_logpdf(x, p)), numeric, rtol=1e-6)
        assert burr3_logpdf(np.array([0.5]), p)[0] == -np.inf

    def test_fit_recovers_tail_quantile(self):
        true = BurrParams(17.0, 1.1, 0.0, 26.0)
        x = burr_samples(17.0, 1.1, 0.0, 26.0, 5000, seed=11)
        fitted = fit_burr3(x)
        q_true = burr3_quantile(0.995, true)
        assert abs(burr3_quantile(0.995, fitted) - q_true) <= 0.05 * q_true
        assert fitted.c > 0 and fitted.d > 0 and fitted.scale > 0

    def test_fit_degenerate(self):
        with pytest.raises(DegenerateDataError):
            fit_burr3([20.0] * 100)

    def test_fit_too_few(self):
        with pytest.raises(InsufficientDataError):
            fit_burr3(np.arange(10.0))

    def test_fit_loc_must_be_below_min(self):
        with pytest.raises(ValueError):
            fit_burr3(np.linspace(1, 2, 100), loc=1.5)

    @pytest.mark.parametrize("seed", range(3))
    def test_fit_on_normal_data_is_valid(self, seed):
        x = np.random.default_rng(seed).normal(20, 0.5, 400)
        p = fit_burr3(x)
        assert p.c > 0 and p.d > 0 and p.scale > 0
        assert np.all(np.isfinite(burr3_logpdf(x, p)))

    def test_estimator(self):
        x = burr_samples(5.0, 2.0, 0.0, 3.0, 2000, seed=1)
        est = Burr3().fit(x)
        assert est.cdf(est.quantile(0.9)) == pytest.approx(0.9, abs=1e-10)
        assert est.score_samples(x).shape == x.shape


class TestCalibration:
    def test_empirical_nearest_rank(self):
        assert calibrate_threshold(np.arange(1, 1001), 0.995, "empirical") == (995.0, None)

    def test_empirical_median(self):
        x = np.random.default_rng(0).normal(10, 1, 1001)
        assert empirical_quantile(x, 0.5) == pytest.approx(np.median(x), abs=1e-12)

    def test_burr_method(self):
        x = burr_samples(17.0, 1.1, 0.0, 26.0, 5000, seed=11)
        truth = burr3_quantile(0.995, BurrParams(17.0, 1.1, 0.0, 26.0))
        ule, params = calibrate_threshold(x, 0.995, "burr")
        assert abs(ule - truth) <= 0.05 * truth
        assert isinstance(params, BurrParams)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            calibrate_threshold(np.arange(100.0), 0.9, "kde")

    def test_rho_domain(self):
        with pytest.raises(ValueError):
            calibrate_threshold(np.arange(100.0), 1.0)

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError):
            calibrate_threshold(np.arange(49.0), 0.9)

    def test_report_keys(self):
        text = calibration_report(21.5, 0.995, "burr", BurrParams(2.0, 1.0, 0.0, 3.0))
        keys = [line.split(" = ")[0] for line in text.splitlines()]
        assert keys == ["method", "rho", "c", "d", "loc", "scale", "ULe"]
        assert "ULe = 21.5" in text

    def test_parse_error_file(self, tmp_path):
        path = tmp_path / "errors.txt"
        path.write_text("# nominal run\n20.1\n\n19.9  # comment\n20.0\n")
        np.testing.assert_array_equal(parse_error_file(path), [20.1, 19.9, 20.0])
        path.write_text("20.1\nabc\n")
        with pytest.raises(ValueError, match=":2:"):
            parse_error_file(path)


class TestEstimator:
    def test_fit_predict(self):
        nominal = np.random.default_rng(0).normal(20, 0.5, 2000)
        det = ExtrapolationDetector().fit(nominal)
        assert det.threshold_ == empirical_quantile(nominal, 0.995)
        windows = np.stack([np.full(15, 20.0), 20.0 + np.arange(15.0)])
        np.testing.assert_array_equal(det.predict(windows), [False, True])
        assert det.decision_function(windows).shape == (2, 7)

    def test_fixed_threshold(self):
        det = ExtrapolationDetector(threshold=35.0).fit(None)
        assert det.threshold_ == 35.0
        assert det.predict(30.0 + np.arange(1, 16.0))[0]

    def test_predict_agrees_with_streaming(self):
        rng = np.random.default_rng(5)
        det = ExtrapolationDetector(threshold=21.0).fit(None)
        for _ in range(50):
            w = rng.normal(20, 1.0, 15)
            assert det.predict(w)[0] == feed(w, det.config_)[0]

    def test_window_shape(self):
        det = ExtrapolationDetector(threshold=1.0).fit(None)
        with pytest.raises(ValueError):
            det.predict(np.zeros((2, 10)))
