"""Tests for the trajectory integrators and their reproducibility contract."""

import math

import numpy as np
import pytest

from phaseflow import core, metrics, sde
from phaseflow.errors import DomainError, UnsupportedModelError


def amplifier_setup(p0=1.0, q0=1.0):
    model = core.amplifier_model()
    solution = core.amplifier_solution(p0, q0)
    sampler = sde.BoundarySampler(solution.p_marginal, solution.q_marginal)
    return model, solution, sampler


def noise_free_amplifier():
    # b = 0 turns both integrators into ODE solvers for the same drift field.
    return core.DiffusionModel(
        a1=lambda p, q, t: -p,
        a2=lambda p, q, t: q,
        b=lambda p, q, t: np.zeros_like(np.asarray(p, dtype=float) + q),
        name="amplifier_b0",
        product_form=True,
    )


# ---------------------------------------------------------------------------
# RandomSource


class TestRandomSource:
    def test_rejects_bad_seeds(self):
        with pytest.raises(DomainError):
            sde.RandomSource(-1)
        with pytest.raises(DomainError):
            sde.RandomSource(2**64)
        with pytest.raises(DomainError):
            sde.RandomSource(1.5)

    def test_stream_is_deterministic(self):
        a = sde.RandomSource(42).stream(3, 1).standard_normal(64)
        b = sde.RandomSource(42).stream(3, 1).standard_normal(64)
        assert np.array_equal(a, b)

    def test_streams_differ_by_index_and_role(self):
        src = sde.RandomSource(42)
        base = src.stream(0, 0).standard_normal(64)
        assert not np.array_equal(base, src.stream(1, 0).standard_normal(64))
        assert not np.array_equal(base, src.stream(0, 1).standard_normal(64))

    def test_increment_moments(self):
        dt = 1e-3
        z = sde.RandomSource(5).stream(0, 0).standard_normal(100_000)
        dw = math.sqrt(dt) * z
        # sd of the sample mean is sqrt(dt/n) = 1e-4
        assert abs(dw.mean()) < 4e-4
        assert abs(dw.var() - dt) < 0.015 * dt


# ---------------------------------------------------------------------------
# Containers


class TestTrajectory:
    def test_shape_and_states(self):
        grid = core.TimeGrid(0.0, 0.1, 0.05)
        traj = sde.Trajectory(grid, np.array([1.0, 2.0, 3.0]), np.array([0.0, 0.5, 1.0]))
        assert len(traj) == 3
        states = traj.states
        assert states[1] == core.PhaseState(2.0, 0.5)

    def test_rejects_length_mismatch(self):
        grid = core.TimeGrid(0.0, 0.1, 0.05)
        with pytest.raises(DomainError):
            sde.Trajectory(grid, np.array([1.0, 2.0]), np.array([0.0, 0.5]))

    def test_rejects_non_finite(self):
        grid = core.TimeGrid(0.0, 0.1, 0.05)
        with pytest.raises(DomainError):
            sde.Trajectory(grid, np.array([1.0, np.nan, 3.0]), np.array([0.0, 0.5, 1.0]))

    def test_arrays_are_read_only(self):
        grid = core.TimeGrid(0.0, 0.1, 0.05)
        traj = sde.Trajectory(grid, np.array([1.0, 2.0, 3.0]), np.array([0.0, 0.5, 1.0]))
        with pytest.raises(ValueError):
            traj.p[0] = 9.0


class TestEnsemble:
    def make(self, n_traj=4):
        grid = core.TimeGrid(0.0, 0.1, 0.05)
        p = np.arange(n_traj * 3, dtype=float).reshape(n_traj, 3)
        q = p + 0.5
        return sde.Ensemble(grid, p, q, "deterministic", "toy", 0)

    def test_accessors(self):
        ens = self.make()
        assert ens.n_traj == 4
        traj = ens.trajectory(2)
        assert np.array_equal(traj.p, ens.p[2])
        assert len(ens.trajectories) == 4
        assert np.array_equal(ens.q_at(0.05), ens.q[:, 1])
        assert np.array_equal(ens.p_at(0.1), ens.p[:, 2])

    def test_rejects_bad_mode(self):
        grid = core.TimeGrid(0.0, 0.1, 0.05)
        p = np.zeros((2, 3))
        with pytest.raises(DomainError):
            sde.Ensemble(grid, p, p, "sideways", "toy", 0)

    def test_rejects_column_mismatch(self):
        grid = core.TimeGrid(0.0, 0.1, 0.05)
        p = np.zeros((2, 4))
        with pytest.raises(DomainError):
            sde.Ensemble(grid, p, p, "retro", "toy", 0)

    def test_off_grid_time_rejected(self):
        ens = self.make()
        with pytest.raises(DomainError):
            ens.q_at(0.07)

    def test_csv_round_trip(self, tmp_path):
        ens = self.make()
        path = tmp_path / "ens.csv"
        ens.to_csv(path)
        grid, p, q = sde.load_ensemble_csv(path)
        assert grid.n_steps == ens.grid.n_steps
        assert np.array_equal(p, ens.p)
        assert np.array_equal(q, ens.q)

    def test_csv_rejects_ragged_ids(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "traj_id,t,p,q\n"
            "0,0.0,1.0,1.0\n"
            "0,0.1,1.0,1.0\n"
            "1,0.0,1.0,1.0\n"
        )
        with pytest.raises(DomainError):
            sde.load_ensemble_csv(path)


def test_boundary_sampler_requires_gaussian_marginals():
    g = core.GaussianMarginal(mean=lambda t: 0.0, variance=1.0)
    with pytest.raises(DomainError):
        sde.BoundarySampler(g, object())
    s = sde.BoundarySampler(g, g)
    assert s.draw(0.0, 2.0, 0.0, 0.0) == (0.0, 2.0)


# ---------------------------------------------------------------------------
# Reverse-time integrator


class TestRetro:
    def test_rejects_non_product_model(self):
        model = core.free_particle_model(1.0)
        grid = core.TimeGrid(0.0, 1.0, 1e-2)
        _, _, sampler = amplifier_setup()
        with pytest.raises(UnsupportedModelError):
            sde.integrate_retro(model, grid, sampler, sde.RandomSource(0), 0)

    def test_rejects_state_dependent_noise(self):
        model = core.DiffusionModel(
            a1=lambda p, q, t: -p,
            a2=lambda p, q, t: q,
            b=lambda p, q, t: 1.0 + 0.1 * np.abs(q),
            name="varb",
            product_form=True,
        )
        grid = core.TimeGrid(0.0, 1.0, 1e-2)
        _, _, sampler = amplifier_setup()
        with pytest.raises(UnsupportedModelError):
            sde.integrate_retro(model, grid, sampler, sde.RandomSource(0), 0)

    def test_noise_free_limit_matches_exact_flows(self):
        # With b = 0 the q leg is an ODE integrated backward from its value
        # at tf, and the p leg an ODE forward from t0.  Euler error is O(dt).
        model = noise_free_amplifier()
        grid = core.TimeGrid(0.0, 1.0, 1e-3)
        _, _, sampler = amplifier_setup()
        traj = sde.integrate_retro(model, grid, sampler, sde.RandomSource(17), 0)
        t = grid.times
        q_exact = traj.q[-1] * np.exp(-(grid.tf - t))
        p_exact = traj.p[0] * np.exp(-t)
        assert np.max(np.abs(traj.q - q_exact)) < 3e-3
        assert np.max(np.abs(traj.p - p_exact)) < 3e-3

    def test_determinism_and_seed_sensitivity(self):
        model, _, sampler = amplifier_setup()
        grid = core.TimeGrid(0.0, 0.5, 1e-2)
        a = sde.integrate_retro(model, grid, sampler, sde.RandomSource(99), 0)
        b = sde.integrate_retro(model, grid, sampler, sde.RandomSource(99), 0)
        c = sde.integrate_retro(model, grid, sampler, sde.RandomSource(100), 0)
        assert np.array_equal(a.q, b.q) and np.array_equal(a.p, b.p)
        assert not np.array_equal(a.q, c.q)


# ---------------------------------------------------------------------------
# Forward guided integrator


class TestForwardGuided:
    def test_noise_free_limit_matches_exact_flow(self):
        # The score correction carries a factor b^2, so with b = 0 the
        # guided drift reduces to the bare a2 and the exact flow is
        # q(t0) * exp(t), p(t0) * exp(-t).
        model = noise_free_amplifier()
        _, solution, sampler = amplifier_setup()
        grid = core.TimeGrid(0.0, 1.0, 1e-3)
        traj = sde.integrate_forward_guided(
            model, grid, sampler, solution.q_marginal, sde.RandomSource(4), 0
        )
        t = grid.times
        q_exact = traj.q[0] * np.exp(t)
        p_exact = traj.p[0] * np.exp(-t)
        assert np.max(np.abs(traj.q - q_exact)) < 4e-3
        assert np.max(np.abs(traj.p - p_exact)) < 3e-3

    def test_free_particle_is_exact_straight_line(self):
        # Zero noise and zero acceleration: p never changes, so repeated
        # Euler steps add the same increment and q stays on the line up to
        # float accumulation.
        mass = 2.0
        model = core.free_particle_model(mass)
        mu = core.GaussianMarginal(mean=lambda t: 0.0, variance=1.0)
        sampler = sde.BoundarySampler(mu, mu)
        grid = core.TimeGrid(0.0, 1.0, 1e-2)
        traj = sde.integrate_forward_guided(model, grid, sampler, None, sde.RandomSource(12), 0)
        assert np.all(traj.p == traj.p[0])
        line = traj.q[0] + traj.p[0] / mass * grid.times
        assert np.max(np.abs(traj.q - line)) < 1e-12

    def test_deviation_variance_is_stationary(self):
        # The gap between a guided path and the exact mean is an
        # Ornstein-Uhlenbeck process started in its stationary law, so its
        # variance stays near 1 at later times.
        model, solution, sampler = amplifier_setup()
        grid = core.TimeGrid(0.0, 1.0, 1e-3)
        ens = sde.simulate_ensemble(
            "forward_guided", model, grid, sampler, solution.q_marginal, 2000, 11
        )
        u = ens.q_at(1.0) - math.e
        assert abs(u.var() - 1.0) < 0.1


# ---------------------------------------------------------------------------
# Ensemble driver


class TestSimulateEnsemble:
    def test_mode_validation(self):
        model, solution, sampler = amplifier_setup()
        grid = core.TimeGrid(0.0, 0.5, 1e-2)
        with pytest.raises(DomainError):
            sde.simulate_ensemble("sideways", model, grid, sampler, None, 4, 0)
        with pytest.raises(DomainError):
            sde.simulate_ensemble("retro", model, grid, sampler, None, 0, 0)

    def test_single_trajectory_matches_direct_integrators(self):
        model, solution, sampler = amplifier_setup()
        grid = core.TimeGrid(0.0, 0.5, 1e-2)
        ens_r = sde.simulate_ensemble("retro", model, grid, sampler, None, 1, 5)
        direct_r = sde.integrate_retro(model, grid, sampler, sde.RandomSource(5), 0)
        assert np.array_equal(ens_r.q[0], direct_r.q)
        assert np.array_equal(ens_r.p[0], direct_r.p)

        ens_g = sde.simulate_ensemble(
            "forward_guided", model, grid, sampler, solution.q_marginal, 1, 5
        )
        direct_g = sde.integrate_forward_guided(
            model, grid, sampler, solution.q_marginal, sde.RandomSource(5), 0
        )
        assert np.array_equal(ens_g.q[0], direct_g.q)
        assert np.array_equal(ens_g.p[0], direct_g.p)

    def test_chunk_size_does_not_change_results(self):
        model, solution, sampler = amplifier_setup()
        grid = core.TimeGrid(0.0, 0.5, 1e-2)
        kw = dict(mu_if_guided=solution.q_marginal, n_traj=23, master_seed=8)
        a = sde.simulate_ensemble("forward_guided", model, grid, sampler, chunk_size=7, **kw)
        b = sde.simulate_ensemble("forward_guided", model, grid, sampler, chunk_size=64, **kw)
        assert np.array_equal(a.q, b.q) and np.array_equal(a.p, b.p)

    def test_csv_bytes_are_reproducible(self, tmp_path):
        model, solution, sampler = amplifier_setup()
        grid = core.TimeGrid(0.0, 0.2, 1e-2)
        paths = []
        for name in ("a.csv", "b.csv"):
            ens = sde.simulate_ensemble("retro", model, grid, sampler, None, 8, 77)
            path = tmp_path / name
            ens.to_csv(path)
            paths.append(path.read_bytes())
        assert paths[0] == paths[1]

    def test_deterministic_mode_halving_ratio(self):
        # Explicit Euler on the noise-free field: halving dt should halve
        # the endpoint error.
        model, solution, sampler = amplifier_setup()
        errs = []
        for dt in (1e-2, 5e-3):
            grid = core.TimeGrid(0.0, 1.0, dt)
            ens = sde.simulate_ensemble("deterministic", model, grid, sampler, None, 1, 13)
            q0 = ens.q[0, 0]
            errs.append(abs(ens.q[0, -1] - q0 * math.e))
        ratio = errs[0] / errs[1]
        assert 1.7 < ratio < 2.3

    def test_snapshots_match_full_path_columns(self):
        model, solution, sampler = amplifier_setup()
        grid = core.TimeGrid(0.0, 0.5, 1e-2)
        for mode, mu in (("retro", None), ("forward_guided", solution.q_marginal)):
            ens = sde.simulate_ensemble(mode, model, grid, sampler, mu, 40, 3)
            snaps = sde.simulate_snapshots(
                mode, model, grid, sampler, mu, 40, 3, times=[0.25, 0.5]
            )
            for t in (0.25, 0.5):
                p_snap, q_snap = snaps[t]
                assert np.array_equal(p_snap, ens.p_at(t))
                assert np.array_equal(q_snap, ens.q_at(t))

    def test_snapshot_times_must_lie_on_grid(self):
        model, solution, sampler = amplifier_setup()
        grid = core.TimeGrid(0.0, 0.5, 1e-2)
        with pytest.raises(DomainError):
            sde.simulate_snapshots("retro", model, grid, sampler, None, 4, 3, times=[0.123])


# ---------------------------------------------------------------------------
# Law-level agreement between the two stochastic pictures


class TestPictureAgreement:
    def test_moments_at_final_time(self):
        model, solution, sampler = amplifier_setup()
        grid = core.TimeGrid(0.0, 1.0, 1e-3)
        snaps = sde.simulate_snapshots(
            "forward_guided", model, grid, sampler, solution.q_marginal, 20_000, 11,
            times=[1.0],
        )
        p1, q1 = snaps[1.0]
        assert abs(q1.mean() - math.e) < 0.025
        assert abs(q1.var() - 1.0) < 0.035
        assert abs(p1.mean() - math.exp(-1.0)) < 0.02
        assert abs(p1.var() - 1.0) < 0.035

    def test_wasserstein_agreement_of_q_marginals(self):
        model, solution, sampler = amplifier_setup()
        grid = core.TimeGrid(0.0, 1.0, 1e-3)
        g = sde.simulate_snapshots(
            "forward_guided", model, grid, sampler, solution.q_marginal, 20_000, 11,
            times=[0.5, 1.0],
        )
        r = sde.simulate_snapshots(
            "retro", model, grid, sampler, None, 20_000, 1011, times=[0.5, 1.0]
        )
        for t in (0.5, 1.0):
            w = metrics.wasserstein1(r[t][1], g[t][1])
            assert w < 0.03
