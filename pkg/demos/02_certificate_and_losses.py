"""
A neural certificate and its losses
===================================

A certificate B is a small tanh network. Synthesis drives two losses to
their targets: the state loss (B <= 0 on the initial set, B >= delta on the
unsafe set) and the per-trajectory loss (the largest difference quotient of
B along a sampled trajectory must stay below the rise budget
(inf_U B - sup_I B) / T).
"""

import numpy as np

from pacbarrier.certificate import NeuralCertificate, linear_certificate
from pacbarrier.dynamics import (
    BoxRegion,
    RegionSpec,
    generate_samples,
    linear_system,
    sample_initial_states,
    uniform_sample_times,
)
from pacbarrier.loss import check_psi_s, make_grids, state_loss, total_loss

regions = RegionSpec(domain=BoxRegion([-2.0], [2.0]),
                     initial=BoxRegion([-0.5], [0.5]),
                     unsafe=BoxRegion([1.5], [2.0]))
grids = make_grids(regions, points_per_dim=21, margin=0.1)
system = linear_system(-1.0)  # x' = -x: everything decays to the origin
horizon = 1.0
samples = generate_samples(system, sample_initial_states(regions.initial, 5, seed=0),
                           horizon, uniform_sample_times(horizon, 51))

# A random network does not separate the sets yet.
cert = NeuralCertificate.init([1, 8, 1], seed=0).normalized_to(regions.domain)
print("random network: state loss", state_loss(cert, grids), "separates:", check_psi_s(cert, grids))

# B(x) = x - 1 is a valid barrier here: negative on [-0.5, 0.5], at least
# 0.5 on [1.5, 2], and decreasing along every trajectory.
good = linear_certificate([1.0], -1.0)
for i in range(len(samples)):
    br = total_loss(good, samples.trajectory(i), grids, horizon)
    print(f"trajectory {i}: state loss {br.state_loss:.3f}, trajectory loss {br.traj_loss:+.4f}")

# Gradients come from hand-written backpropagation.
x = np.array([0.3])
print("\ndB/dx at 0.3:", cert.grad_input(x), " dB/dtheta has", cert.grad_params(x).size, "entries")
