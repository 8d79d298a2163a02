"""
Is the Monte Carlo validator calibrated?
========================================

A deliberately weak certificate, B(x) = x - 1 for x' = -x on X_I = [-1, 1],
satisfies the state conditions but breaks the rate condition for initial
states below -0.5/T. So its true violation probability under uniform draws
is known in closed form and the empirical rate should land near it.
"""

import numpy as np

from pacbarrier.certificate import NeuralCertificate
from pacbarrier.dynamics import sample_initial_states
from pacbarrier.validation import monte_carlo_validate, weakened_linear_case

for horizon in (1.0, 2.0, 5.0):
    case = weakened_linear_case(horizon)
    n = 20_000
    rep = monte_carlo_validate(case.certificate, case.system, case.regions, case.grids, case.horizon,
                               case.sample_times, epsilon=0.5, d=1.0, n_fresh=n, seed=0)
    se = np.sqrt(case.probability * (1 - case.probability) / n)
    # the same seed gives the same draws, so the exact count is available
    x0 = sample_initial_states(case.regions.initial, n, seed=0)[:, 0]
    print(f"T = {horizon}: p = {case.probability:.4f}, empirical {rep.psi_violation_rate:.4f} "
          f"({(rep.psi_violation_rate - case.probability) / se:+.2f} SE), "
          f"draws below -0.5/T {np.mean(x0 < -0.5 / horizon):.4f}, unsafe entries {rep.unsafe_entry_rate}")

# A certificate that is identically zero fails outright.
case = weakened_linear_case()
zero = NeuralCertificate.zeros([1, 4, 1])
rep = monte_carlo_validate(zero, case.system, case.regions, case.grids, case.horizon, case.sample_times,
                           0.5, 1.0, n_fresh=100)
print("\nzero network passes:", rep.passed)
