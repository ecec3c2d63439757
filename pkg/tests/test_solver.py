import math

import numpy as np
import pytest

from eigengame import (ConfigError, Dataset, EigenState, Schedule, SolverConfig, aggregate_shards, apply_update,
                       init_state, jacobi_eigh, retract, run, step_size)
from eigengame.solver import THREADS_ENV, with_profile, worker_count
from eigengame.updates import Constraint
from helpers import spectrum_matrix


class TestStepSize:
    def test_examples(self):
        assert step_size(Schedule("constant", 0.1), 7) == 0.1
        assert step_size(Schedule("inverse_t", 1.0), 1) == 1.0
        assert step_size(Schedule("inv-t", 0.5), 4) == 0.125

    def test_rejects_t0(self):
        with pytest.raises(ConfigError):
            step_size(Schedule(), 0)

    def test_rejects_negative_lr(self):
        with pytest.raises(ConfigError):
            Schedule("constant", -1.0)


class TestAggregate:
    def test_single_shard(self):
        np.testing.assert_array_equal(aggregate_shards([np.array([1.0, 2.0])], [5]), [1, 2])

    def test_equal_shards(self):
        np.testing.assert_allclose(aggregate_shards([[1.0, 0.0], [0.0, 1.0]], [4, 4]), [0.5, 0.5])

    def test_weighted(self):
        np.testing.assert_allclose(aggregate_shards([[4.0, 0.0], [0.0, 4.0]], [3, 1]), [3, 1])

    def test_validation(self):
        with pytest.raises(ConfigError):
            aggregate_shards([[1.0]], [0])


class TestApplyUpdate:
    def test_zero_step(self):
        v = np.array([0.6, 0.8])
        out, _ = apply_update(v, [5.0, -1.0], 0.0, None, SolverConfig(k=1))
        np.testing.assert_allclose(out, v)

    def test_matches_retract(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal(5)
        v /= np.linalg.norm(v)
        g = rng.standard_normal(5)
        out, _ = apply_update(v, g, 0.3, None, SolverConfig(k=1))
        np.testing.assert_allclose(out, retract(v, 0.3 * g), atol=1e-15)

    def test_example(self):
        out, _ = apply_update([1.0, 0.0], [0.0, 1.0], 1.0, None, SolverConfig(k=1))
        np.testing.assert_allclose(out, [1 / math.sqrt(2)] * 2)

    def test_projection_drops_radial_part(self):
        out, _ = apply_update([1.0, 0.0], [5.0, 0.0], 1.0, None, SolverConfig(k=1, riemannian_projection=True))
        np.testing.assert_allclose(out, [1, 0])

    def test_nesterov_buffer(self):
        cfg = SolverConfig(k=1, momentum=0.5, nesterov=True)
        v = np.array([1.0, 0.0])
        _, buf = apply_update(v, [0.0, 1.0], 0.1, np.array([0.0, 2.0]), cfg)
        np.testing.assert_allclose(buf, [0, 2.0])  # g + m * buf = 1 + 0.5 * 2

    def test_unit_ball_only_shrinks(self):
        cfg = SolverConfig(k=1, rule="gha")
        out, _ = apply_update([0.5, 0.0], [0.0, 0.1], 1.0, None, cfg)
        np.testing.assert_allclose(out, [0.5, 0.1])
        out, _ = apply_update([1.0, 0.0], [0.0, 1.0], 1.0, None, cfg)
        assert np.linalg.norm(out) == pytest.approx(1.0)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [dict(steps=0), dict(shards=0), dict(batch_size=10, shards=3),
                                        dict(momentum=1.0), dict(eval_every=0), dict(rule="oja")])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            SolverConfig(k=2, **kwargs)

    def test_profile(self):
        cfg = with_profile(SolverConfig(k=2), "meena")
        assert cfg.momentum == 0.9 and cfg.nesterov and cfg.schedule.lr == 5e-5
        assert SolverConfig(k=2).momentum == 0.0
        with pytest.raises(ConfigError):
            with_profile(SolverConfig(k=2), "nope")

    def test_worker_cap(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "2")
        assert worker_count(8) == 2
        assert worker_count(1) == 1


class TestInit:
    def test_unit_columns(self):
        V = init_state(7, 4, seed=3).vectors
        np.testing.assert_allclose(np.linalg.norm(V, axis=0), 1.0, atol=1e-12)

    def test_deterministic(self):
        np.testing.assert_array_equal(init_state(5, 2, 9).vectors, init_state(5, 2, 9).vectors)

    def test_never_orthogonal_to_top(self):
        firsts = np.array([init_state(2, 1, s).vectors[0, 0] for s in range(1000)])
        assert np.all(firsts != 0.0)

    def test_k_too_large(self):
        with pytest.raises(ConfigError):
            init_state(2, 3, 0)


class TestRun:
    def test_diagonal_convergence(self):
        S = np.diag([3.0, 2.0, 1.0])
        cfg = SolverConfig(k=3, steps=500, schedule=Schedule("constant", 0.1), seed=4)
        state, trace = run(cfg, S, jacobi_eigh(S))
        assert trace[-1].streak == 3
        assert trace[-1].subspace_distance < 1e-3
        assert trace[-1].iteration == 500

    def test_zero_lr_returns_init(self):
        cfg = SolverConfig(k=2, steps=1, schedule=Schedule("constant", 0.0), seed=1)
        state, _ = run(cfg, np.diag([2.0, 1.0, 0.5]))
        np.testing.assert_allclose(state.vectors, init_state(3, 2, 1).vectors, rtol=0, atol=1e-15)

    def test_constraints_hold(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((64, 6)) * np.linspace(2, 0.5, 6)
        for rule in ("mu", "alpha", "gha", "mu_grad"):
            cfg = SolverConfig(k=3, rule=rule, steps=40, batch_size=8, schedule=Schedule("constant", 0.2),
                               eval_every=1)
            state, trace = run(cfg, Dataset(rows=X))
            state.check()
            assert len(trace) == 40
            if rule == "gha":
                assert state.constraint is Constraint.UNIT_BALL

    def test_shard_invariance_mu(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((64, 8)) @ rng.standard_normal((8, 8))
        finals = []
        for m in (1, 2, 4, 8):
            cfg = SolverConfig(k=3, steps=200, batch_size=32, shards=m, schedule=Schedule("constant", 0.05))
            finals.append(run(cfg, Dataset(rows=X))[0].vectors)
        for V in finals[1:]:
            np.testing.assert_allclose(V, finals[0], atol=1e-8)

    def test_shard_bias_alpha(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((64, 8)) @ rng.standard_normal((8, 8))
        out = {}
        for m in (1, 8):
            cfg = SolverConfig(k=3, rule="alpha", steps=200, batch_size=32, shards=m,
                               schedule=Schedule("constant", 0.05))
            out[m] = run(cfg, Dataset(rows=X))[0].vectors
        assert np.max(np.abs(out[1] - out[8])) > 1e-4

    def test_threads_do_not_change_result(self, monkeypatch):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((32, 5))
        cfg = SolverConfig(k=2, steps=50, batch_size=16, shards=4)
        monkeypatch.setenv(THREADS_ENV, "1")
        a = run(cfg, Dataset(rows=X))[0].vectors
        monkeypatch.setenv(THREADS_ENV, "4")
        b = run(cfg, Dataset(rows=X))[0].vectors
        np.testing.assert_array_equal(a, b)

    def test_utility_sum_trend(self):
        S, _ = spectrum_matrix(0.8 ** np.arange(8), seed=5)
        cfg = SolverConfig(k=4, steps=600, schedule=Schedule("constant", 0.5), eval_every=1, seed=2)
        _, trace = run(cfg, S)
        total = np.array([sum(r.utilities) for r in trace.rows])
        after = total[100:]
        for start in range(0, len(after) - 50, 10):
            window = after[start:start + 51]
            assert window[-1] >= window[0] - 1e-6

    def test_skipped_players_counted(self):
        # a rank-one batch makes later alpha denominators vanish
        X = np.zeros((4, 3))
        X[:, 0] = 1.0
        init = EigenState(np.eye(3)[:, [1, 0, 2]])
        cfg = SolverConfig(k=3, rule="alpha", steps=3, eval_every=3)
        state, trace = run(cfg, Dataset(rows=X), init=init)
        assert trace[-1].skipped_players == 6
        np.testing.assert_array_equal(state.vectors[:, 1:], init.vectors[:, 1:])

    def test_no_truth_gives_nan_metrics(self):
        _, trace = run(SolverConfig(k=1, steps=3, eval_every=1), np.diag([2.0, 1.0]))
        assert trace[0].streak is None and math.isnan(trace[0].subspace_distance)

    def test_covariance_cannot_shard(self):
        with pytest.raises(ConfigError):
            run(SolverConfig(k=1, shards=2), np.eye(2))

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        ds = Dataset(rows=rng.standard_normal((50, 4)))
        cfg = SolverConfig(k=2, steps=30, batch_size=5, seed=11)
        np.testing.assert_array_equal(run(cfg, ds)[0].vectors, run(cfg, ds)[0].vectors)
