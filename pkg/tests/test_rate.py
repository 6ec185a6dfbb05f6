"""Action minimisation against closed-form and least-squares oracles."""

import json

import numpy as np
import pytest

from ansflow import (
    Control,
    EquationSpec,
    NoiseModel,
    RateOptions,
    RateResult,
    SolverConfig,
    SpectralField,
    field_from_modes,
    horizontal_shear,
    minimize_small_noise_rate,
    read_control_csv,
    small_time_rate,
    solve_skeleton,
    vertical_shear,
    write_control_csv,
)

HALF = 1.0 / np.sqrt(2.0)


def shear_template(grid, m, gamma):
    """Unit-H-norm-gamma template at mode (m, 0), second component only.

    These are steady states of the nonlinearity, so linear predictions stay
    exact even when the quadratic term is switched on.
    """
    return field_from_modes(grid, {(m, 0): (0.0, -1j * HALF * gamma)})


def lq_oracle(lam, gamma, a, b, t_end, dt, n_nodes):
    """Textbook minimum energy for the scalar controlled decay.

    One mode with per-step factor d = exp(-lam dt) and block-constant
    control: the terminal coordinate is linear in the node values with
    weights w_m = dt gamma sum_{j in block m} d^(N-j), so the cheapest
    control is the least-norm solution of one linear constraint.
    """
    n = round(t_end / dt)
    d = np.exp(-lam * dt)
    spb = n // n_nodes
    powers = d ** (n - np.arange(n))
    w = np.array(
        [dt * gamma * powers[m * spb : (m + 1) * spb].sum() for m in range(n_nodes)]
    )
    gap = b - d ** n * a
    node_dt = t_end / n_nodes
    return 0.5 * node_dt * gap ** 2 / float(np.sum(w ** 2))


class TestControl:
    def test_value_at_is_piecewise_constant(self):
        ctrl = Control(1.0, np.array([[1.0], [2.0], [3.0], [4.0]]))
        assert ctrl.n_nodes == 4 and ctrl.trunc == 1
        assert ctrl.node_dt == 0.25
        assert ctrl.value_at(0.0)[0] == 1.0
        assert ctrl.value_at(0.30)[0] == 2.0
        assert ctrl.value_at(0.999)[0] == 4.0
        assert ctrl.value_at(5.0)[0] == 4.0  # clamped past the horizon
        assert ctrl.value_at(-1.0)[0] == 1.0

    def test_energy(self):
        ctrl = Control(1.0, np.array([[1.0], [2.0], [3.0], [4.0]]))
        assert ctrl.energy == pytest.approx(0.5 * 0.25 * 30.0)
        assert ctrl.within_energy(3.75)
        assert not ctrl.within_energy(3.74)

    def test_validation(self):
        with pytest.raises(ValueError, match="n_nodes"):
            Control(1.0, np.zeros(4))
        with pytest.raises(ValueError, match="t_end"):
            Control(0.0, np.zeros((2, 1)))

    def test_values_frozen(self):
        ctrl = Control(1.0, np.ones((3, 2)))
        assert not ctrl.values.flags.writeable

    def test_csv_round_trip(self, tmp_path):
        ctrl = Control(2.0, np.array([[0.5, -1.0], [1.5, 2.0], [0.0, 3.0]]))
        path = tmp_path / "control.csv"
        write_control_csv(path, ctrl)
        back = read_control_csv(path)
        assert back.t_end == pytest.approx(2.0)
        assert np.array_equal(back.values, ctrl.values)

    def test_csv_needs_two_nodes(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("t,phi_0\n0,1.0\n")
        with pytest.raises(ValueError, match="at least two nodes"):
            read_control_csv(path)

    def test_csv_malformed(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t\n0\n1\n")
        with pytest.raises(ValueError, match="malformed"):
            read_control_csv(path)


class TestMinimizeSmallNoiseRate:
    CASES = [
        # (mode m, gamma, a, b, t_end)
        (1, 1.0, 0.0, 1.0, 1.0),
        (2, 0.5, 0.3, -0.4, 0.5),
        (1, 2.0, -1.0, 0.5, 2.0),
    ]

    def run_case(self, grid, m, gamma, a, b, t_end, **kw):
        template = shear_template(grid, m, gamma)
        unit = shear_template(grid, m, 1.0)
        model = NoiseModel.additive([template])
        u0 = SpectralField(grid, a * unit.coeffs)
        target = SpectralField(grid, b * unit.coeffs)
        cfg = SolverConfig(dt=0.01, t_end=t_end, save_every=10 ** 9)
        return (
            minimize_small_noise_rate(u0, target, model, cfg, n_nodes=10, **kw),
            model,
            u0,
            target,
            cfg,
        )

    def test_matches_scalar_lq_oracle(self, grid8):
        eq = EquationSpec(1.0, 0.0, 0.0, 1.0)
        for m, gamma, a, b, t_end in self.CASES:
            res, model, u0, target, cfg = self.run_case(
                grid8, m, gamma, a, b, t_end, eq=eq
            )
            want = lq_oracle(m ** 2, gamma, a, b, t_end, cfg.dt, 10)
            assert res.feasible, (m, gamma)
            assert res.value == pytest.approx(want, rel=1e-4), (m, gamma)
            assert res.control.n_nodes == 10
            assert res.target_error < 1e-6 * (1.0 + 2.0)

    def test_resimulation_hits_the_target(self, grid8):
        eq = EquationSpec(1.0, 0.0, 0.0, 1.0)
        res, model, u0, target, cfg = self.run_case(
            grid8, 1, 1.0, 0.0, 1.0, 1.0, eq=eq
        )
        traj = solve_skeleton(u0, res.control, model, cfg)
        gap = np.sqrt(np.sum(np.abs(traj.final_state.coeffs - target.coeffs) ** 2))
        assert gap < 2e-6

    def test_nonlinear_objective_agrees_on_shear_family(self, grid8):
        # shear states kill the quadratic term, so the generic penalty path
        # (default eq, finite differences) must find the same optimum
        template = shear_template(grid8, 1, 1.0)
        model = NoiseModel.additive([template])
        u0 = SpectralField(grid8, np.zeros((2, 8, 8), complex))
        target = SpectralField(grid8, 0.8 * template.coeffs)
        cfg = SolverConfig(dt=0.05, t_end=0.5, save_every=10 ** 9)
        res = minimize_small_noise_rate(u0, target, model, cfg, n_nodes=5)
        want = lq_oracle(1.0, 1.0, 0.0, 0.8, 0.5, cfg.dt, 5)
        assert res.feasible
        assert res.value == pytest.approx(want, rel=1e-3)

    def test_unreachable_target_is_infeasible(self, grid8):
        model = NoiseModel.additive([shear_template(grid8, 1, 1.0)])
        u0 = SpectralField(grid8, np.zeros((2, 8, 8), complex))
        target = vertical_shear(grid8, 0.5)  # orthogonal to the control range
        cfg = SolverConfig(dt=0.1, t_end=1.0, save_every=10 ** 9)
        eq = EquationSpec(1.0, 0.0, 0.0, 1.0)
        res = minimize_small_noise_rate(u0, target, model, cfg, n_nodes=5, eq=eq)
        assert not res.feasible
        assert np.isinf(res.value)
        assert res.target_error == pytest.approx(np.sqrt(0.125), rel=1e-6)
        assert res.control is not None  # best attempt still attached

    def test_validation(self, grid8, grid16):
        model = NoiseModel.additive([shear_template(grid8, 1, 1.0)])
        u0 = SpectralField(grid8, np.zeros((2, 8, 8), complex))
        cfg = SolverConfig(dt=0.1, t_end=1.0)
        with pytest.raises(ValueError, match="share one grid"):
            minimize_small_noise_rate(
                u0, vertical_shear(grid16, 1.0), model, cfg, n_nodes=5
            )
        with pytest.raises(ValueError, match="divide"):
            minimize_small_noise_rate(
                u0, vertical_shear(grid8, 1.0), model, cfg, n_nodes=3
            )
        bad = RateOptions(initial_control=Control(1.0, np.zeros((4, 1))))
        with pytest.raises(ValueError, match="wrong node"):
            minimize_small_noise_rate(
                u0, vertical_shear(grid8, 1.0), model, cfg, n_nodes=5, options=bad
            )


class TestSmallTimeRate:
    def test_linear_path_has_closed_form_cost(self, grid8):
        # u(t) = c t T with one unit template: h(t) = c, value = c^2 T / 2
        template = shear_template(grid8, 1, 1.0)
        model = NoiseModel.additive([template])
        c, t_end = 1.7, 0.8
        times = np.linspace(0.0, t_end, 9)
        states = [
            SpectralField(grid8, c * t * template.coeffs) for t in times
        ]
        res = small_time_rate(states, times, model)
        assert res.feasible
        assert res.value == pytest.approx(0.5 * c ** 2 * t_end, abs=1e-10)
        assert np.allclose(res.coefficients, c, atol=1e-10)
        assert np.max(res.residuals) < 1e-12

    def test_random_reachable_path_matches_lstsq_oracle(self, grid8, rng):
        # independent oracle: same finite differences, but each node solved
        # directly as a stacked real least squares problem
        templates = [
            shear_template(grid8, 1, 1.0),
            vertical_shear(grid8, np.sqrt(2.0)),
            field_from_modes(grid8, {(1, 1): (1j * HALF, -1j * HALF)}),
        ]
        model = NoiseModel.additive(templates)
        times = np.linspace(0.0, 0.5, 7)
        amps = rng.standard_normal((3, 7))
        stack = np.stack([t.coeffs for t in templates])
        states = [
            SpectralField(grid8, np.einsum("k,kcij->cij", amps[:, i], stack))
            for i in range(7)
        ]
        res = small_time_rate(states, times, model)

        dt = times[1] - times[0]
        coeffs = np.stack([s.coeffs for s in states])
        vel = np.empty_like(coeffs)
        vel[0] = (coeffs[1] - coeffs[0]) / dt
        vel[-1] = (coeffs[-1] - coeffs[-2]) / dt
        vel[1:-1] = (coeffs[2:] - coeffs[:-2]) / (2.0 * dt)
        flat = stack.reshape(3, -1)
        design = np.concatenate([flat.real, flat.imag], axis=1).T
        h = np.empty((7, 3))
        for i in range(7):
            v = vel[i].reshape(-1)
            rhs = np.concatenate([v.real, v.imag])
            h[i] = np.linalg.lstsq(design, rhs, rcond=None)[0]
        want = 0.5 * float(np.trapezoid(np.sum(h ** 2, axis=1), times))

        assert res.feasible
        assert res.value == pytest.approx(want, abs=1e-10)
        assert np.allclose(res.coefficients, h, atol=1e-8)

    def test_unrepresentable_velocity_is_infeasible(self, grid8):
        model = NoiseModel.additive([shear_template(grid8, 1, 1.0)])
        other = vertical_shear(grid8, 1.0)
        times = np.linspace(0.0, 0.4, 5)
        states = [SpectralField(grid8, t * other.coeffs) for t in times]
        res = small_time_rate(states, times, model)
        assert not res.feasible
        assert np.isinf(res.value)
        assert res.residuals.shape == (5,)
        assert np.all(res.residuals[1:-1] > 0.0)

    def test_duplicate_columns_warn_and_split_evenly(self, grid8):
        template = shear_template(grid8, 1, 1.0)
        model = NoiseModel.additive([template, template])
        c, t_end = 2.0, 0.5
        times = np.linspace(0.0, t_end, 6)
        states = [SpectralField(grid8, c * t * template.coeffs) for t in times]
        with pytest.warns(UserWarning, match="linearly dependent"):
            res = small_time_rate(states, times, model)
        assert res.feasible
        # minimum norm rep h = (c/2, c/2): value = c^2 T / 4
        assert res.value == pytest.approx(0.25 * c ** 2 * t_end, abs=1e-10)

    def test_validation(self, grid8):
        model = NoiseModel.additive([shear_template(grid8, 1, 1.0)])
        zero = SpectralField(grid8, np.zeros((2, 8, 8), complex))
        with pytest.raises(ValueError, match=">= 2 states"):
            small_time_rate([zero], [0.0], model)
        with pytest.raises(ValueError, match="uniform"):
            small_time_rate([zero, zero, zero], [0.0, 0.1, 0.3], model)
        with pytest.raises(ValueError, match="uniform"):
            small_time_rate([zero, zero], [0.1, 0.0], model)


class TestRateResultJson:
    def test_round_trip_finite(self, tmp_path):
        res = RateResult(
            value=0.25, feasible=True, target_error=1e-8, iterations=12, penalty=1e4
        )
        path = tmp_path / "rate.json"
        text = res.to_json(path)
        assert json.loads(path.read_text()) == json.loads(text)
        back = RateResult.from_json(text)
        assert back.value == 0.25 and back.feasible
        assert back.target_error == 1e-8
        assert back.iterations == 12 and back.penalty == 1e4

    def test_infinite_value_serialises_as_null(self):
        res = RateResult(value=float("inf"), feasible=False)
        payload = json.loads(res.to_json())
        assert payload["value"] is None
        assert payload["penalty"] is None  # nan -> null
        back = RateResult.from_json(res.to_json())
        assert np.isinf(back.value) and not back.feasible
        assert np.isnan(back.penalty)
