import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddsde.drift import (
    BilinearKernelDrift,
    ConvolutionalDrift,
    RegimeParams,
    StatisticDrift,
    TimeProfile,
    ZeroDrift,
    check_class,
    drift_from_dict,
    drift_to_dict,
    effective_field,
    probe_pairs,
    regime_gate,
)
from ddsde.errors import ContractError, DomainError
from ddsde.field import SpectralField, besov_norm, synth_besov_field
from ddsde.measure import EmpiricalMeasure

seeds = st.integers(0, 2**32)
X = np.linspace(-4, 4, 17)


def cloud(seed, n=6, d=1, weights=None):
    return EmpiricalMeasure(np.random.default_rng(seed).normal(size=(n, d)), weights)


class TestTimeProfile:
    def test_constant(self):
        assert TimeProfile()(3.0) == 1.0 and TimeProfile(2.0).is_constant

    def test_interpolates(self):
        h = TimeProfile(times=(0.0, 1.0), values=(0.0, 2.0))
        assert h(0.25) == 0.5 and h.scaled(3)(0.5) == 3.0

    def test_rejects_negative(self):
        with pytest.raises(DomainError):
            TimeProfile(-1.0)
        with pytest.raises(DomainError):
            TimeProfile(times=(0.0, 1.0), values=(1.0, -1.0))

    @pytest.mark.parametrize("h", [TimeProfile(0.5), TimeProfile(times=(0.0, 1.0), values=(1.0, 3.0))])
    def test_roundtrip(self, h):
        assert TimeProfile.from_dict(h.to_dict()) == h


class TestEffectiveField:
    def test_zero(self):
        assert effective_field(ZeroDrift(), cloud(0), 0.3).is_zero()

    def test_zero_kernel_gives_external(self):
        ext = synth_besov_field(0.0, 3, 1, 1)
        drift = ConvolutionalDrift(SpectralField.zeros(), ext)
        assert np.allclose(effective_field(drift, cloud(1), 0.0)(X), ext(X))
        assert np.allclose(effective_field(drift, cloud(2), 0.0)(X), ext(X))

    @given(st.floats(-5, 5))
    def test_mean_statistic_matches_convolution(self, y):
        base = synth_besov_field(0.5, 4, 1, 3)
        mu = EmpiricalMeasure.dirac(y)
        a = effective_field(StatisticDrift(base), mu, 0.0)(X)
        b = effective_field(ConvolutionalDrift(base), mu, 0.0)(X)
        assert np.allclose(a, b, atol=1e-12)
        assert np.allclose(a, base(X - y), atol=1e-12)

    def test_moment_statistic_shifts_first_axis(self):
        base = synth_besov_field(0.5, 2, 2, 3)
        mu = EmpiricalMeasure([[3.0, 4.0]])
        drift = StatisticDrift(base, "moment", 2.0)
        pts = np.array([[0.1, 0.2], [1.0, -1.0]])
        assert np.allclose(effective_field(drift, mu, 0.0)(pts), base(pts - [5.0, 0.0]), atol=1e-12)

    def test_bad_statistic(self):
        with pytest.raises(ContractError):
            StatisticDrift(SpectralField.zeros(), "median")

    def test_bilinear_product_kernel(self):
        # b(x, y) = cos(x - y) integrates to the convolution with cos
        k = SpectralField.from_half(2, 2 * np.pi, [[1, -1]], [0.5])
        mu = cloud(4)
        direct = (np.cos(X[:, None] - mu.points[:, 0][None, :]) * mu.weights).sum(axis=1)
        assert np.allclose(effective_field(BilinearKernelDrift(k), mu, 0.0)(X)[:, 0], direct, atol=1e-12)

    def test_bilinear_weighted_sum_of_slices(self):
        k = synth_besov_field(0.5, 2, 2, 7)
        mu = cloud(5, weights=np.full(6, 1 / 6))
        out = effective_field(BilinearKernelDrift(k), mu, 0.0)
        pts = np.array([[x, y] for x in X for y in mu.points[:, 0]])
        direct = k(pts)[:, 0].reshape(len(X), -1) @ mu.weights
        assert np.allclose(out(X)[:, 0], direct, atol=1e-12)

    def test_bilinear_needs_even_dimension(self):
        with pytest.raises(ContractError):
            BilinearKernelDrift(SpectralField.zeros(d=1))

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            effective_field(ZeroDrift(d=2), cloud(0), 0.0)

    @given(seeds, st.floats(0, 5))
    def test_homogeneous_in_profile(self, seed, c):
        k = synth_besov_field(0.0, 3, 1, seed)
        mu = cloud(seed % 1000)
        a = effective_field(ConvolutionalDrift(k, time_profile=TimeProfile(c)), mu, 0.2)(X)
        assert np.allclose(a, c * effective_field(ConvolutionalDrift(k), mu, 0.2)(X), atol=1e-12)

    @given(seeds, st.floats(0, 1))
    def test_affine_in_weights(self, seed, lam):
        k = synth_besov_field(0.0, 2, 2, seed)
        pts = np.random.default_rng(seed % 1000).normal(size=4)
        w1, w2 = np.array([0.7, 0.1, 0.1, 0.1]), np.array([0.25] * 4)
        for drift in (ConvolutionalDrift(synth_besov_field(0.0, 3, 1, seed)), BilinearKernelDrift(k)):
            f = lambda w: effective_field(drift, EmpiricalMeasure(pts, w), 0.0)(X)  # noqa: E731
            assert np.allclose(f(lam * w1 + (1 - lam) * w2), lam * f(w1) + (1 - lam) * f(w2), atol=1e-12)

    @given(seeds, st.floats(-3, 3))
    def test_translation_covariance(self, seed, h):
        drift = ConvolutionalDrift(synth_besov_field(0.3, 4, 1, seed))
        mu = cloud(seed % 1000)
        a = effective_field(drift, mu.translate(h), 0.0)(X + h)
        b = effective_field(drift, mu, 0.0)(X)
        assert np.allclose(a, b, atol=1e-12)


class TestSerialization:
    @pytest.mark.parametrize("drift", [
        ZeroDrift(2, 5.0, TimeProfile(0.5)),
        ConvolutionalDrift(synth_besov_field(0.0, 3, 1, 1), synth_besov_field(0.5, 2, 1, 2)),
        ConvolutionalDrift(synth_besov_field(0.0, 3, 1, 1), time_profile=TimeProfile(times=(0.0, 1.0), values=(1.0, 2.0))),
        BilinearKernelDrift(synth_besov_field(0.0, 2, 2, 1)),
        StatisticDrift(synth_besov_field(0.0, 3, 1, 1), "moment", 3.0),
    ])
    def test_roundtrip(self, drift):
        assert drift_from_dict(drift_to_dict(drift)) == drift

    def test_unknown_variant(self):
        with pytest.raises(ContractError):
            drift_from_dict({"variant": "quadratic"})


class TestRegimeGate:
    def test_low_hurst_admissible(self):
        dec = regime_gate(RegimeParams(0.25, -0.5))
        assert dec.admissible and dec.regime == "besov"
        assert dec.threshold == pytest.approx(-1.0) and dec.margin == pytest.approx(0.5)

    def test_finite_q_inadmissible(self):
        dec = regime_gate(RegimeParams(1 / 3, 0.2, q=4))
        assert not dec.admissible and dec.threshold == pytest.approx(0.25)

    def test_high_hurst(self):
        dec = regime_gate(RegimeParams(0.75, 0.4, beta=0.75))
        assert dec.admissible and dec.regime == "holder"
        assert dec.margin == pytest.approx(0.4 - 1 / 3)

    def test_beta_below_hurst(self):
        assert not regime_gate(RegimeParams(0.75, 0.9, beta=0.5)).admissible

    def test_q_at_most_two(self):
        assert not regime_gate(RegimeParams(0.3, 5.0, q=2)).admissible

    def test_hurst_domain(self):
        with pytest.raises(DomainError):
            RegimeParams(1.0, 0.0)

    @given(st.floats(0.05, 0.95), st.floats(-3, 3), st.floats(0, 2), st.floats(2.01, 100), st.floats(0, 50))
    def test_monotone(self, H, alpha, da, q, dq):
        lo = regime_gate(RegimeParams(H, alpha, q=q))
        assert not lo.admissible or regime_gate(RegimeParams(H, alpha + da, q=q)).admissible
        if H <= 0.5:
            assert not lo.admissible or regime_gate(RegimeParams(H, alpha, q=q + dq)).admissible
            assert not lo.admissible or regime_gate(RegimeParams(H, alpha, q=np.inf)).admissible


class TestCheckClass:
    def test_zero_drift_exactly_zero(self):
        for params in (RegimeParams(0.3, -0.5), RegimeParams(0.7, 0.5)):
            rep = check_class(ZeroDrift(), params, probe_pairs(1, 0, 12))
            assert rep.growth_ratio == 0 and rep.lipschitz_ratio == 0 and rep.certified

    def test_needs_ten_probes(self):
        with pytest.raises(ContractError):
            check_class(ZeroDrift(), RegimeParams(0.3, 0.0), probe_pairs(1, 0, 9))

    def test_convolutional_constant_stable(self):
        kernel = synth_besov_field(0.5, 5, 1, 4)
        assert besov_norm(kernel, 0.5) == pytest.approx(1.0)
        params = RegimeParams(0.3, 0.5)
        drift = ConvolutionalDrift(kernel)
        small = check_class(drift, params, probe_pairs(1, 1, 50))
        big = check_class(drift, params, probe_pairs(1, 1, 100))
        assert small.certified and big.lipschitz_ratio <= 2
        assert big.lipschitz_ratio <= 1.5 * small.lipschitz_ratio
        assert big.growth_ratio <= 1.0 + 1e-9

    def test_statistic_constant(self):
        drift = StatisticDrift(synth_besov_field(0.5, 5, 1, 4))
        rep = check_class(drift, RegimeParams(0.3, 0.5), probe_pairs(1, 2, 30))
        assert rep.certified and rep.lipschitz_ratio <= 2

    def test_holder_terms(self):
        drift = ConvolutionalDrift(synth_besov_field(0.8, 3, 1, 4),
                                   time_profile=TimeProfile(times=(0.0, 1.0), values=(1.0, 2.0)))
        rep = check_class(drift, RegimeParams(0.7, 0.8), probe_pairs(1, 3, 10), times=(0.0, 0.5, 1.0))
        for v in (rep.sup_bound, rep.x_holder, rep.measure_holder, rep.time_holder):
            assert v is not None and np.isfinite(v) and v > 0
        assert rep.constant == max(rep.growth_ratio, rep.lipschitz_ratio)

    def test_probe_families(self):
        pairs = probe_pairs(2, 5, 12)
        assert len(pairs) == 12
        assert pairs[0][0].n == 1 and pairs[1][0].n == 32 and pairs[2][0].n == 2
        assert all(mu.dim == 2 for mu, _ in pairs)
