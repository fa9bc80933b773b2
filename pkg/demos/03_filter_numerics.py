"""
Why the square-root form
========================

The cubature filter never forms a covariance matrix.  It carries a
triangular factor S with P = S S' and updates it by QR.  This script
checks that against a textbook dense filter and shows the lower bound on
excitation error along a simulated trajectory.

Run with ``python demos/03_filter_numerics.py``.
"""

import numpy as np

from seastate.config import ScenarioConfig
from seastate.estimators import GaussianBelief, LinearModel, kf_step, psd_sqrt, srckf_step, triangularize
from seastate.pcrlb import bound_for_scenario
from seastate.simharness import scenario_data

rng = np.random.default_rng(0)

# QR of a wide compound factor gives a lower-triangular S with the same
# outer product.
X = rng.normal(size=(5, 12))
S = triangularize(X)
print("triangularize: max |SS' - XX'| =", np.abs(S @ S.T - X @ X.T).max())

# With a linear model the cubature rule is exact, so the filter collapses
# to the Kalman filter.
n = 4
A = np.linalg.qr(rng.normal(size=(n, n)))[0] * 0.95
H = rng.normal(size=(2, n))
Q, R = 0.01 * np.eye(n), 0.1 * np.eye(2)
sb = kb = GaussianBelief.from_cov(np.zeros(n), np.eye(n))
for k in range(1, 101):
    y = rng.normal(size=2)
    sb = srckf_step(sb, y, LinearModel(A, H), k, psd_sqrt(Q), psd_sqrt(R)).belief
    kb = kf_step(kb, y, A, H, Q, R, k=k).belief
print("linear model, 100 steps: max |SRCKF - KF| =", np.abs(sb.mean - kb.mean).max())

# The excitation bound along a 20 s trajectory.  It is the posterior spread
# of the filter's own prior model, so it starts large and settles as the
# measurements accumulate.
cfg = ScenarioConfig().copy(**{"run.duration": 20.0})
_, truth, stream = scenario_data(cfg, 0)
bound = bound_for_scenario(truth, stream, cfg, "heave")
for t in (1, 5, 10, 20):
    i = int(round(t / cfg.run.Ts)) - 1
    print(f"t={t:>2} s  sqrt(bound) = {bound.sqrt_bound[i]:.3f}")
