import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from robust_iswap.hamiltonians import ControlLayout, LayoutKind
from robust_iswap.objectives import cost, extended_robustness, frame_operator, iswap
from robust_iswap.optimize import (PLUS_PLUS, ControlProblem, OptimizationConfig,
                                   chebyshev_optimize, gradient, grape_optimize)
from robust_iswap.propagation import propagate_augmented

LAYOUTS = {
    "global": ControlLayout(LayoutKind.GLOBAL),
    "full-local": ControlLayout(LayoutKind.FULL_LOCAL),
    "detuned": ControlLayout(LayoutKind.DETUNED, delta=2.0),
}


def fd_gradient(problem, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (problem.cost(x + e).cost - problem.cost(x - e).cost) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


class TestProblem:
    @pytest.mark.parametrize("name", sorted(LAYOUTS))
    def test_cost_matches_objectives(self, name):
        prob = ControlProblem(LAYOUTS[name], 3.0, 12)
        x = prob.random_parameters(np.random.default_rng(0), 4.0)
        c = cost(prob.to_pulse(x))
        b = prob.cost(x)
        assert b.fidelity == pytest.approx(c.fidelity, abs=1e-12)
        assert b.robustness == pytest.approx(c.robustness, rel=1e-12)

    def test_bell_cost(self):
        prob = ControlProblem(LAYOUTS["global"], 3.0, 12, initial_states=PLUS_PLUS)
        x = prob.random_parameters(np.random.default_rng(1), 4.0)
        p = prob.to_pulse(x)
        out = propagate_augmented(p, initial=PLUS_PLUS)
        g = frame_operator(p.frames) @ iswap()
        f = abs(np.vdot(g @ PLUS_PLUS, out.zeroth)) ** 2
        b = prob.cost(x)
        assert b.fidelity == pytest.approx(f, abs=1e-12)
        assert b.robustness == pytest.approx(np.vdot(out.first, out.first).real, rel=1e-12)

    def test_native_bell_robustness(self):
        # only the |Psi+> half of |++> feels the noise: R = T^2 / 2
        prob = ControlProblem(LAYOUTS["global"], np.pi / 2, 1, initial_states=PLUS_PLUS)
        b = prob.cost(np.zeros(prob.n_params))
        assert b.fidelity == pytest.approx(1.0, abs=1e-14)
        assert b.robustness == pytest.approx(np.pi ** 2 / 8, abs=1e-13)

    def test_native_bell_phase_free(self):
        # |Psi+> component only picks up a phase: half of the plain value remains
        prob = ControlProblem(LAYOUTS["global"], np.pi / 2, 1, initial_states=PLUS_PLUS,
                              phase_free=True)
        b = prob.cost(np.zeros(prob.n_params))
        assert b.robustness == pytest.approx(np.pi ** 2 / 16, abs=1e-13)

    @pytest.mark.parametrize("seed", range(5))
    def test_phase_free_is_extended_minimum(self, seed):
        prob = ControlProblem(LAYOUTS["detuned"], 3.0, 12, initial_states=PLUS_PLUS,
                              phase_free=True)
        x = prob.random_parameters(np.random.default_rng(seed), 4.0)
        out = propagate_augmented(prob.to_pulse(x), initial=PLUS_PLUS)
        best = minimize_scalar(lambda a: extended_robustness([out.zeroth], [out.first], a)).fun
        assert prob.cost(x).robustness == pytest.approx(best, rel=1e-9, abs=1e-14)

    @pytest.mark.parametrize("name", sorted(LAYOUTS))
    def test_phase_free_gate_unchanged(self, name):
        # traceless noise operator: no common phase across the four basis states
        x = ControlProblem(LAYOUTS[name], 3.0, 12).random_parameters(np.random.default_rng(4), 4.0)
        a = ControlProblem(LAYOUTS[name], 3.0, 12).cost(x)
        b = ControlProblem(LAYOUTS[name], 3.0, 12, phase_free=True).cost(x)
        assert b.robustness == pytest.approx(a.robustness, rel=1e-10)

    def test_round_trip(self):
        prob = ControlProblem(LAYOUTS["full-local"], 3.0, 12)
        x = prob.random_parameters(np.random.default_rng(2), 5.0)
        np.testing.assert_allclose(prob.from_pulse(prob.to_pulse(x)), x, atol=1e-10)

    def test_amplitude_bound(self):
        prob = ControlProblem(ControlLayout(LayoutKind.FULL_LOCAL, omega_max=2.0), 3.0, 12)
        x = 1e3 * np.random.default_rng(3).normal(size=prob.n_params)
        assert np.max(np.abs(prob.channel_values(x)[0::2])) <= 2.0
        assert prob.amplitude_ok(x)

    def test_wrong_size(self):
        prob = ControlProblem(LAYOUTS["global"], 3.0, 12)
        with pytest.raises(ValueError):
            prob.cost(np.zeros(3))

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            ControlProblem(LAYOUTS["global"], 0.0, 12)
        with pytest.raises(ValueError):
            OptimizationConfig(restarts=0)


class TestGradient:
    @pytest.mark.parametrize("name", sorted(LAYOUTS))
    def test_piecewise_fd(self, name):
        prob = ControlProblem(LAYOUTS[name], 3.0, 10)
        rng = np.random.default_rng(10)
        for _ in range(100):
            x = prob.random_parameters(rng, 6.0)
            assert rel_err(gradient(prob, x), fd_gradient(prob, x)) < 1e-6

    def test_chebyshev_fd(self):
        prob = ControlProblem(LAYOUTS["full-local"], 4.5, 60, order=5)
        rng = np.random.default_rng(11)
        for _ in range(10):
            x = prob.random_parameters(rng, 4.0)
            assert rel_err(gradient(prob, x), fd_gradient(prob, x)) < 1e-6

    def test_bell_fd(self):
        prob = ControlProblem(LAYOUTS["global"], 3.0, 10, initial_states=PLUS_PLUS)
        rng = np.random.default_rng(12)
        for _ in range(10):
            x = prob.random_parameters(rng, 4.0)
            assert rel_err(gradient(prob, x), fd_gradient(prob, x)) < 1e-6

    @pytest.mark.parametrize("name", ["global", "detuned"])
    def test_bell_phase_free_fd(self, name):
        prob = ControlProblem(LAYOUTS[name], 3.0, 10, initial_states=PLUS_PLUS, phase_free=True)
        rng = np.random.default_rng(13)
        for _ in range(10):
            x = prob.random_parameters(rng, 4.0)
            assert rel_err(gradient(prob, x), fd_gradient(prob, x)) < 1e-6

    def test_frame_stationary_at_native(self):
        prob = ControlProblem(LAYOUTS["global"], np.pi / 2, 1)
        g = gradient(prob, np.zeros(prob.n_params))
        np.testing.assert_allclose(g[-3:], 0, atol=1e-14)


class TestDrivers:
    def test_deterministic(self):
        cfg = OptimizationConfig(restarts=2, seed=5, max_iterations=30)
        a = grape_optimize(LAYOUTS["full-local"], 3.0, 20, cfg)
        b = grape_optimize(LAYOUTS["full-local"], 3.0, 20, cfg)
        np.testing.assert_array_equal(a.pulse.basis.values, b.pulse.basis.values)
        assert a.cost_trace == b.cost_trace
        assert a.restart_costs == b.restart_costs

    def test_threads_agree(self):
        cfg = OptimizationConfig(restarts=3, seed=6, max_iterations=20,
                                 stop_at_first_converged=False)
        a = grape_optimize(LAYOUTS["global"], 3.0, 15, cfg)
        b = grape_optimize(LAYOUTS["global"], 3.0, 15, OptimizationConfig(
            restarts=3, seed=6, max_iterations=20, stop_at_first_converged=False, threads=2))
        np.testing.assert_allclose(a.restart_costs, b.restart_costs, rtol=1e-12)

    def test_monotone_trace(self):
        res = grape_optimize(LAYOUTS["full-local"], 3.0, 20,
                             OptimizationConfig(restarts=1, max_iterations=200))
        best = np.minimum.accumulate([b.cost for b in res.cost_trace])
        assert np.all(np.diff(best) <= 0)
        assert np.all(np.diff([b.cost for b in res.cost_trace]) <= 1e-15)

    def test_native_duration_fails(self):
        res = grape_optimize(LAYOUTS["full-local"], np.pi / 2, 30,
                             OptimizationConfig(restarts=3, max_iterations=2000))
        assert not res.converged
        assert res.cost > 1e-2

    def test_constant_chebyshev_fails(self):
        res = chebyshev_optimize(LAYOUTS["full-local"], 4.5, 0,
                                 OptimizationConfig(restarts=3, max_iterations=2000),
                                 sampling_steps=40)
        assert not res.converged

    def test_warm_start(self):
        p = grape_optimize(LAYOUTS["full-local"], 3.0, 20,
                           OptimizationConfig(restarts=1, max_iterations=50)).pulse
        res = grape_optimize(LAYOUTS["full-local"], 3.0, 20,
                             OptimizationConfig(restarts=1, max_iterations=1, warm_start=p))
        assert res.cost <= p.metadata["cost"] + 1e-12

    def test_metadata(self):
        res = grape_optimize(LAYOUTS["detuned"], 3.0, 20,
                             OptimizationConfig(restarts=1, max_iterations=5, seed=9))
        meta = res.pulse.metadata
        assert meta["seed"] == 9 and meta["basis"] == "piecewise"
        assert meta["cost"] == pytest.approx(res.cost)
        assert res.pulse.layout.delta == 2.0
