#!/usr/bin/env python3
"""Truncated SGD on an iterate-coupled data stream.

The optimizer is plain averaged SGD with decaying steps eta0 * k**(-a) plus a
stability safeguard: if an update jumps farther than a shrinking threshold,
or leaves the current confinement ball, the iterate snaps back to its start,
the ball doubles, and the stream restarts from its initial law. This script
shows (1) a normal run where the safeguard never fires, so the dynamics are
exactly vanilla SGD, and (2) the same model with deliberately harsh
thresholds, where resets do fire and the trace records them.
"""

import numpy as np

from obmsgd import (
    StepSchedule,
    TruncationSchedule,
    make_objective,
    make_stream,
    run,
)

target = np.array([1.0, -0.5, 0.8])
objective = make_objective("linear_sq")
steps = StepSchedule(eta0=1.0, a=0.5005)

# --- 1. default safeguard: not triggered on this run ------------------------
stream = make_stream("state_dep", target, rho=0.5, eps=0.5, sigma=1.0, seed=42)
trace = run(objective, stream, steps, TruncationSchedule(), n=20_000)
print("default thresholds:")
print(f"  averaged iterate  {np.round(trace.theta_bar, 4)}")
print(f"  generating param  {target}")
print(f"  resets            {trace.n_truncations}")

# identical run with the safeguard removed: bit-for-bit the same
stream = make_stream("state_dep", target, rho=0.5, eps=0.5, sigma=1.0, seed=42)
vanilla = run(objective, stream, steps, TruncationSchedule.disabled(), n=20_000)
print(f"  equals vanilla SGD bit for bit: {np.array_equal(trace.theta_bar, vanilla.theta_bar)}")

# --- 2. harsh thresholds: watch the safeguard work --------------------------
stream = make_stream("state_dep", target, rho=0.5, eps=0.5, sigma=1.0, seed=42)
harsh = TruncationSchedule(d0=0.7, b=0.3, r0=10.0, growth=2.0)
trace = run(objective, stream, steps, harsh, n=20_000, record_iterates=True)
print("\nharsh jump threshold d0=0.7:")
print(f"  resets            {trace.n_truncations}")
print(f"  first reset steps {trace.reset_iterations[:8]}")
print(f"  averaged iterate  {np.round(trace.theta_bar, 4)} (average restarts after each reset)")

# every accepted step respects the shrinking threshold
deltas = np.linalg.norm(np.diff(trace.iterates, axis=0), axis=1)
ks = np.arange(2, 20_001)
accepted = np.ones(len(ks), dtype=bool)
accepted[[k - 2 for k in trace.reset_iterations if k >= 2]] = False
bound = harsh.d0 * ks ** (-harsh.b)
print(f"  accepted steps under threshold: {bool((deltas[accepted] < bound[accepted]).all())}")
