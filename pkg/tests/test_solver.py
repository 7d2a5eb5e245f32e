import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddsde.drift import ConvolutionalDrift, RegimeParams, ZeroDrift
from ddsde.errors import ConfigurationError, ContractError, NumericalBlowUp
from ddsde.fbm import TimeGrid
from ddsde.field import TWO_PI, SpectralField, synth_besov_field
from ddsde.rng import RngStream
from ddsde.solver import (
    Ensemble,
    InitialLaw,
    SolverConfig,
    draw_inputs,
    flow_distance,
    frozen_ensemble,
    law_flow,
    looks_rough,
    particle_system,
    picard_iterate,
    solve_frozen_sde,
    zero_drift_flow,
)


def config(n=64, N=16, T=1.0, H=0.4, **kw):
    return SolverConfig(TimeGrid(T, n), N, hurst=H, **kw)


def lipschitz_kernel():
    return synth_besov_field(1.0, 3, 1, 5, zero_mean=True)


MU0 = InitialLaw("gaussian", (0.0,), 0.5)


class TestConfig:
    def test_auto_sampler(self):
        assert config(n=64).method == "cholesky"
        assert config(n=8192).method == "circulant"

    def test_thinned(self):
        assert list(config(n=64, thinning=4).thinned_indices()) == [0, 16, 32, 48, 64]
        assert list(config(n=10, thinning=4).thinned_indices()) == [0, 3, 6, 9, 10]

    def test_roundtrip(self):
        c = config(n=32, N=7, mollify_level=4, sampler="circulant", seed=9)
        assert SolverConfig.from_dict(c.to_dict()) == c

    @pytest.mark.parametrize("doc", [{"n_particles": 0}, {"sampler": "fft"}, {"nsteps": 3}, {"T": -1.0}, {"hurst": 1.0}])
    def test_rejects(self, doc):
        with pytest.raises(ConfigurationError):
            SolverConfig.from_dict(doc)

    def test_resolution(self):
        assert config(n=1 << 10, mollify_level=8).resolution_ok()
        assert not config(n=1 << 10, mollify_level=10).resolution_ok()


class TestInitialLaw:
    def test_point(self):
        assert np.array_equal(InitialLaw("point", (1.0, 2.0)).sample(3, RngStream(0)), [[1, 2]] * 3)

    def test_per_particle_streams(self):
        law = InitialLaw("uniform", (0.0,), 2.0)
        full = law.sample(5, RngStream(3))
        assert np.array_equal(law.sample(2, RngStream(3), labels=[4, 1]), full[[4, 1]])
        assert np.all(np.abs(full) <= 2.0)

    def test_shift_and_roundtrip(self):
        law = InitialLaw("gaussian", (1.0,), 0.3)
        assert law.shifted(0.5).loc == (1.5,)
        assert InitialLaw.from_dict(law.to_dict()) == law

    def test_rejects(self):
        with pytest.raises(ContractError):
            InitialLaw("cauchy")


class TestFrozenSDE:
    def test_zero_field(self):
        c = config()
        xi, W = draw_inputs(c, MU0)
        ens = solve_frozen_sde(SpectralField.zeros(), xi, W, c)
        assert np.array_equal(ens.trajectories, zero_drift_flow(xi, W))

    @given(st.floats(-3, 3))
    @settings(max_examples=10)
    def test_constant_field_exact(self, c0):
        c = config()
        xi, W = draw_inputs(c, MU0)
        ens = solve_frozen_sde(SpectralField.constant(c0), xi, W, c)
        expect = zero_drift_flow(xi, W) + c0 * c.grid.times[None, :, None]
        assert np.allclose(ens.trajectories, expect, rtol=0, atol=1e-13)

    def test_linear_drift_order_one(self):
        # -(L/2 pi) sin(2 pi x / L) ~ -x near the origin; its ODE is solvable in closed form
        L = 40.0
        b = SpectralField.single_mode([1], -L / TWO_PI, period=L, kind="sin")
        theta0 = TWO_PI / L
        exact = L / TWO_PI * 2 * np.arctan(np.tan(theta0 / 2) * np.exp(-1.0))
        assert exact == pytest.approx(np.exp(-1.0), rel=2e-3)
        errs = []
        levels = np.arange(4, 10)
        for k in levels:
            c = config(n=1 << k, N=1)
            W = np.zeros((1, 1, (1 << k) + 1))
            errs.append(abs(solve_frozen_sde(b, [[1.0]], W, c).trajectories[0, -1, 0] - exact))
        order = -np.polyfit(levels, np.log2(errs), 1)[0]
        assert 0.9 <= order <= 1.1

    def test_time_dependent_flow(self):
        c = config(n=8)
        xi, W = draw_inputs(c, MU0)
        fields = [SpectralField.constant(float(i)) for i in range(8)]
        ens = solve_frozen_sde(fields, xi, W, c)
        drift_part = np.concatenate([[0.0], np.cumsum(np.arange(8.0)) * c.grid.dt])
        assert np.allclose(ens.trajectories - zero_drift_flow(xi, W), drift_part[None, :, None], atol=1e-13)
        with pytest.raises(ContractError):
            solve_frozen_sde(fields[:5], xi, W, c)

    def test_rough_field_requires_cutoff(self):
        b = synth_besov_field(-0.3, 6, 1, 0)
        assert looks_rough(b) and not looks_rough(lipschitz_kernel())
        c = config()
        xi, W = draw_inputs(c, MU0)
        with pytest.raises(ConfigurationError):
            solve_frozen_sde(b, xi, W, c)
        ens = solve_frozen_sde(b, xi, W, config(mollify_level=3))
        assert np.all(np.isfinite(ens.trajectories))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_blow_up_reports_step(self):
        c = config(n=4, N=2, T=100.0)
        xi, W = draw_inputs(c, MU0)
        with pytest.raises(NumericalBlowUp) as exc:
            solve_frozen_sde(SpectralField.constant(1e308), xi, W, c)
        assert exc.value.step == 0

    def test_noise_shape(self):
        c = config()
        with pytest.raises(ContractError):
            solve_frozen_sde(SpectralField.zeros(), np.zeros((16, 1)), np.zeros((15, 1, 65)), c)

    def test_law_flow(self):
        c = config(n=8, N=5)
        ens = frozen_ensemble(lipschitz_kernel(), MU0, c)
        flow = law_flow(ens)
        assert len(flow) == 9 and flow[3].n == 5
        assert np.array_equal(flow[3].points, ens.trajectories[:, 3])

    def test_deterministic(self):
        c = config(seed=11)
        a = frozen_ensemble(lipschitz_kernel(), MU0, c).trajectories
        assert np.array_equal(a, frozen_ensemble(lipschitz_kernel(), MU0, c).trajectories)

    def test_ensemble_shape(self):
        with pytest.raises(ContractError):
            Ensemble(TimeGrid(1.0, 4), np.zeros((2, 4, 1)))


class TestPicard:
    def test_zero_drift_one_iteration(self):
        c = config()
        rep = picard_iterate(ZeroDrift(), MU0, c)
        xi, W = draw_inputs(c, MU0)
        assert rep.converged and rep.n_iter == 1 and rep.gaps[0] == 0
        assert np.array_equal(rep.final, zero_drift_flow(xi, W))

    def test_measure_independent_drift(self):
        c = config()
        drift = ConvolutionalDrift(SpectralField.zeros(), SpectralField.constant(0.7))
        rep = picard_iterate(drift, MU0, c)
        xi, W = draw_inputs(c, MU0)
        expect = zero_drift_flow(xi, W) + 0.7 * c.grid.times[None, :, None]
        assert rep.converged and np.allclose(rep.final, expect, atol=1e-13)
        assert rep.residual <= 1e-12

    def test_lipschitz_contraction(self):
        c = config(n=128, N=256, T=0.5, H=0.3)
        rep = picard_iterate(ConvolutionalDrift(lipschitz_kernel()), MU0, c, params=RegimeParams(0.3, 1.0))
        assert rep.converged and not rep.diverged
        assert np.all(rep.contraction_ratios < 1)
        assert np.ptp(rep.contraction_ratios[:-1]) <= 0.3
        assert rep.residual < 1e-9
        assert len(rep.iterates) == rep.n_iter + 1

    def test_initialization_independent(self):
        c = config(n=128, N=128, T=0.5, H=0.3)
        drift = ConvolutionalDrift(lipschitz_kernel())
        a = picard_iterate(drift, MU0, c)
        shifted = a.flows[0] + 1.0
        b = picard_iterate(drift, MU0, c, init_flow=shifted)
        assert flow_distance(a.final, b.final, c.thinned_indices()) < 1e-9

    def test_windows(self):
        c = config(n=128, N=64, T=0.5, H=0.3, n_windows=2)
        rep = picard_iterate(ConvolutionalDrift(lipschitz_kernel()), MU0, c)
        assert rep.converged and [w[0] for w in rep.windows] == [64, 128]

    def test_without_common_numbers(self):
        c = config(n=32, N=64, common_random_numbers=False)
        rep = picard_iterate(ConvolutionalDrift(lipschitz_kernel()), MU0, c, max_iter=4)
        assert rep.n_iter == 4 and not rep.converged

    def test_warns_outside_regime(self):
        with pytest.warns(RuntimeWarning):
            picard_iterate(ZeroDrift(), MU0, config(), params=RegimeParams(0.25, -2.0))

    def test_rough_kernel_rejected(self):
        with pytest.raises(ConfigurationError):
            picard_iterate(ConvolutionalDrift(synth_besov_field(-0.3, 6, 1, 0)), MU0, config())

    def test_init_flow_shape(self):
        with pytest.raises(ContractError):
            picard_iterate(ZeroDrift(), MU0, config(), init_flow=np.zeros((3, 3, 1)))

    def test_summary(self):
        s = picard_iterate(ZeroDrift(), MU0, config()).summary()
        assert set(s) == {"gaps", "ratios", "residual", "converged", "diverged", "tolerance", "windows"}


class TestParticles:
    def test_zero_drift(self):
        c = config()
        ens = particle_system(ZeroDrift(), MU0, c)
        xi, W = draw_inputs(c, MU0)
        assert np.array_equal(ens.trajectories, zero_drift_flow(xi, W))

    def test_single_particle_self_interaction(self):
        k = lipschitz_kernel()
        c = config(N=1)
        ens = particle_system(ConvolutionalDrift(k), MU0, c)
        xi, W = draw_inputs(c, MU0)
        expect = zero_drift_flow(xi, W) + k(np.zeros(1))[0] * c.grid.times[None, :, None]
        assert np.allclose(ens.trajectories, expect, atol=1e-12)

    def test_exchangeable(self):
        c = config(N=8)
        drift = ConvolutionalDrift(lipschitz_kernel())
        a = particle_system(drift, MU0, c, labels=range(8)).trajectories
        perm = [3, 1, 7, 0, 5, 2, 6, 4]
        b = particle_system(drift, MU0, c, labels=perm).trajectories
        assert np.allclose(b, a[perm], atol=1e-12)

    def test_labels_default(self):
        c = config(N=4)
        drift = ConvolutionalDrift(lipschitz_kernel())
        a = particle_system(drift, MU0, c)
        b = particle_system(drift, MU0, c, labels=range(4))
        assert np.allclose(a.trajectories, b.trajectories, atol=1e-13)

    def test_rough_requires_cutoff(self):
        drift = ConvolutionalDrift(synth_besov_field(-0.3, 6, 1, 0))
        with pytest.raises(ConfigurationError):
            particle_system(drift, MU0, config(N=4))
        assert np.all(np.isfinite(particle_system(drift, MU0, config(N=4, mollify_level=3)).trajectories))
