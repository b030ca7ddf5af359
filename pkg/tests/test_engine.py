"""Truncated SGD engine: single steps, full runs, truncation semantics, and
agreement with the lockstep fast path's sequential reference behavior."""

import math

import numpy as np
import pytest

from obmsgd import (
    BatchSchedule,
    NumericalError,
    ObmAccumulator,
    Sample,
    StepSchedule,
    TruncationSchedule,
    brute_force_covariance,
    make_objective,
    make_stream,
    run,
    sgd_step,
)
from obmsgd.engine import IterateState
from obmsgd.fastpath import run_replications


class ZeroStream:
    """Always emits the zero feature vector, so linear gradients vanish."""

    def __init__(self, d):
        self.d = d
        self.resets = 0

    def sample(self, theta):
        return Sample(np.zeros(self.d), 0.0)

    def reset(self):
        self.resets += 1


class CountingStream:
    """Wraps a real stream and counts reset calls."""

    def __init__(self, inner):
        self.inner = inner
        self.resets = 0

    @property
    def d(self):
        return self.inner.d

    def sample(self, theta):
        return self.inner.sample(theta)

    def reset(self):
        self.resets += 1
        self.inner.reset()


class TestSchedules:
    def test_step_sizes_decrease(self):
        sched = StepSchedule(2.0, 0.5005)
        etas = [sched.eta(k) for k in range(1, 50)]
        assert etas[0] == 2.0
        assert all(a > b for a, b in zip(etas, etas[1:]))

    def test_step_exponent_range_enforced(self):
        with pytest.raises(ValueError):
            StepSchedule(2.0, 0.5)
        with pytest.raises(ValueError):
            StepSchedule(2.0, 1.0)
        with pytest.raises(ValueError):
            StepSchedule(0.0, 0.6)

    def test_truncation_parameters_enforced(self):
        with pytest.raises(ValueError):
            TruncationSchedule(b=0.375)
        with pytest.raises(ValueError):
            TruncationSchedule(growth=1.0)
        with pytest.raises(ValueError):
            TruncationSchedule(d0=0.0)
        with pytest.raises(ValueError):
            TruncationSchedule(r0=-1.0)

    def test_thresholds_decrease_and_radii_grow(self):
        trunc = TruncationSchedule(d0=10.0, b=0.3, r0=10.0, growth=2.0)
        ds = [trunc.threshold(k) for k in range(1, 30)]
        assert all(a > b for a, b in zip(ds, ds[1:]))
        assert [trunc.radius(q) for q in range(3)] == [10.0, 20.0, 40.0]

    def test_disabled_is_infinite(self):
        trunc = TruncationSchedule.disabled()
        assert math.isinf(trunc.threshold(10)) and math.isinf(trunc.radius(5))

    def test_radius_overflow_saturates(self):
        assert TruncationSchedule().radius(5000) == math.inf


class TestSgdStep:
    def test_explicit_update(self):
        state = IterateState(theta=np.zeros(2))
        out = sgd_step(state, np.array([1.0, -1.0]), StepSchedule(2.0, 0.5005), TruncationSchedule())
        assert np.array_equal(out.theta, [-2.0, 2.0])
        assert out.k == 1 and out.kappa == 0 and not out.truncated

    def test_zero_gradient_fixed_point(self):
        state = IterateState(theta=np.array([1.0, 2.0]), k=7)
        out = sgd_step(state, np.zeros(2), StepSchedule(), TruncationSchedule(d0=1e-6, b=0.3))
        assert np.array_equal(out.theta, state.theta)
        assert not out.truncated

    def test_truncation_hand_trace(self):
        # candidate 10.5 leaves the radius-10 ball: reset to the initial
        # point, truncation count 1, next ball radius 20.
        trunc = TruncationSchedule(d0=10.0, b=0.3, r0=10.0, growth=2.0)
        state = IterateState(theta=np.array([9.9]), theta_init=np.array([0.0]))
        out = sgd_step(state, np.array([-0.3]), StepSchedule(2.0, 0.5005), trunc)
        assert out.truncated
        assert np.array_equal(out.theta, [0.0])
        assert out.kappa == 1
        assert trunc.radius(out.kappa) == 20.0

    def test_jump_threshold_triggers(self):
        trunc = TruncationSchedule(d0=1.0, b=0.3, r0=100.0, growth=2.0)
        state = IterateState(theta=np.zeros(1))
        out = sgd_step(state, np.array([5.0]), StepSchedule(1.0, 0.6), trunc)
        assert out.truncated and out.kappa == 1

    def test_gradient_shape_checked(self):
        with pytest.raises(ValueError):
            sgd_step(IterateState(theta=np.zeros(2)), np.zeros(3), StepSchedule(), TruncationSchedule())

    def test_nonfinite_gradient_names_iteration(self):
        state = IterateState(theta=np.zeros(1), k=41)
        with pytest.raises(NumericalError, match="iteration 42"):
            sgd_step(state, np.array([np.nan]), StepSchedule(), TruncationSchedule())


class TestRun:
    def test_single_step_average(self):
        stream = make_stream("iid", np.ones(2), seed=0)
        obj = make_objective("linear_sq")
        trace = run(obj, stream, StepSchedule(), TruncationSchedule(), 1, record_iterates=True)
        assert np.array_equal(trace.theta_bar, trace.iterates[0])

    def test_zero_gradient_stream(self):
        stream = ZeroStream(2)
        trace = run(make_objective("linear_sq"), stream, StepSchedule(), TruncationSchedule(), 50)
        assert np.array_equal(trace.theta_bar, np.zeros(2))
        assert trace.n_truncations == 0 and stream.resets == 0

    def test_vanilla_equivalence_when_disabled(self):
        # With the safeguard never firing, enabled and disabled truncation
        # produce the same run bit for bit under one seed.
        obj = make_objective("linear_sq")
        kw = dict(theta_r=np.full(2, 0.5), rho=0.5, eps=0.5, sigma=1.0)
        t1 = run(obj, make_stream("state_dep", seed=11, **kw), StepSchedule(),
                 TruncationSchedule(), 300, record_iterates=True)
        t2 = run(obj, make_stream("state_dep", seed=11, **kw), StepSchedule(),
                 TruncationSchedule.disabled(), 300, record_iterates=True)
        assert t1.n_truncations == 0
        assert np.array_equal(t1.iterates, t2.iterates)

    def test_running_average_identity(self):
        stream = make_stream("state_dep", np.ones(2), seed=3)
        trace = run(
            make_objective("linear_sq"), stream, StepSchedule(), TruncationSchedule(),
            10_000, checkpoints=[10_000], record_iterates=True,
        )
        direct = trace.iterates.mean(axis=0)
        rel = np.abs(trace.theta_bar - direct).max() / max(np.abs(direct).max(), 1e-30)
        assert rel <= 1e-12

    def test_truncation_invariants_along_trace(self):
        obj = make_objective("linear_sq")
        stream = CountingStream(make_stream("state_dep", np.ones(2), seed=5))
        trunc = TruncationSchedule(d0=0.8, b=0.3, r0=10.0, growth=2.0)
        steps = StepSchedule()
        n = 400
        trace = run(obj, stream, steps, trunc, n, record_iterates=True)
        assert trace.n_truncations > 0
        assert stream.resets == trace.n_truncations
        assert len(trace.reset_iterations) == trace.n_truncations
        reset_at = set(trace.reset_iterations)
        prev = np.zeros(2)
        kappa = 0
        for k in range(1, n + 1):
            theta = trace.iterates[k - 1]
            if k in reset_at:
                kappa += 1
                assert np.array_equal(theta, np.zeros(2))
            else:
                assert np.linalg.norm(theta - prev) < trunc.threshold(k)
            assert np.linalg.norm(theta) <= trunc.radius(kappa) + 1e-12
            prev = theta
        assert kappa == trace.n_truncations

    def test_estimator_matches_brute_force_after_reset(self):
        obj = make_objective("linear_sq")
        stream = make_stream("state_dep", np.ones(2), seed=9)
        trunc = TruncationSchedule(d0=1.2, b=0.3, r0=10.0, growth=2.0)
        est = ObmAccumulator(2, BatchSchedule(2, 3.0))
        n = 600
        trace = run(obj, stream, StepSchedule(), trunc, n, checkpoints=[n],
                    estimator=est, record_iterates=True)
        snap = trace.snapshots[-1]
        assert trace.n_truncations > 0
        tail = trace.iterates[n - snap.n_eff :]
        oracle = brute_force_covariance(tail, BatchSchedule(2, 3.0)).matrix
        assert np.linalg.norm(snap.cov.matrix - oracle) <= 1e-10 * max(np.linalg.norm(oracle), 1e-30)

    def test_burn_in_excluded_from_average(self):
        stream = make_stream("ar1", np.ones(2), seed=13)
        trace = run(
            make_objective("linear_sq"), stream, StepSchedule(), TruncationSchedule(),
            500, checkpoints=[500], burn_in=100, record_iterates=True,
        )
        assert trace.snapshots[-1].n_eff == 400
        direct = trace.iterates[100:].mean(axis=0)
        assert np.allclose(trace.theta_bar, direct, rtol=1e-12, atol=1e-14)

    def test_estimator_failure_reports_iteration(self):
        class Broken:
            n = 0

            def update(self, theta):
                raise ValueError("boom")

            def reset(self):
                pass

        with pytest.raises(RuntimeError, match="iteration 1"):
            run(
                make_objective("linear_sq"),
                make_stream("iid", np.ones(2), seed=1),
                StepSchedule(),
                TruncationSchedule(),
                5,
                estimator=Broken(),
            )

    def test_argument_validation(self):
        obj = make_objective("linear_sq")
        stream = make_stream("iid", np.ones(2), seed=0)
        with pytest.raises(ValueError):
            run(obj, stream, StepSchedule(), TruncationSchedule(), 0)
        with pytest.raises(ValueError):
            run(obj, stream, StepSchedule(), TruncationSchedule(), 10, checkpoints=[11])
        with pytest.raises(ValueError):
            run(obj, stream, StepSchedule(), TruncationSchedule(), 10, burn_in=10)
        with pytest.raises(ValueError):
            run(obj, stream, StepSchedule(), TruncationSchedule(), 10, theta0=np.full(2, 100.0))

    def test_kappa_nondecreasing_and_counts_match(self):
        obj = make_objective("linear_sq")
        stream = make_stream("state_dep", np.ones(2), seed=21)
        trunc = TruncationSchedule(d0=1.0, b=0.3, r0=10.0, growth=2.0)
        snaps = run(obj, stream, StepSchedule(), trunc, 300, checkpoints=[50, 150, 300]).snapshots
        counts = [s.n_truncations for s in snaps]
        assert counts == sorted(counts)


class TestMonteCarloConvergence:
    def test_iid_linear_average_concentrates(self):
        # 100 seeded replications, n = 1e5: the averaged iterate lands within
        # 0.05 of the target in at least 95% of them (CLT scale ~ 0.004).
        res = run_replications(
            make_objective("linear_sq"),
            stream_kind="iid",
            theta_r=np.ones(2),
            steps=StepSchedule(),
            trunc=TruncationSchedule(),
            batch=BatchSchedule(2, 4.0),
            n=100_000,
            checkpoints=[100_000],
            rep_seeds=np.random.SeedSequence(2024).spawn(100),
            with_covariance=False,
        )
        dists = np.linalg.norm(res.theta_bar[0] - np.ones(2), axis=1)
        assert (dists < 0.05).mean() >= 0.95
