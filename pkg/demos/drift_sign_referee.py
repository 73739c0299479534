"""Which sign does the score-guided position drift carry?

The forward position marginal obeys a well-posed advection-diffusion
equation once the guidance term is included, so evolving it numerically
and comparing against the analytic law adjudicates between the two
candidate drift conventions. One preserves the law to discretization
error; the other visibly transports mass the wrong way. The free
particle gives a second, independent verdict: with no noise the guided
trajectory must move with velocity +p/m, and the flipped convention
moves it backward.
"""

import numpy as np

from phaseflow import core, sde

model = core.amplifier_model()
solution = core.amplifier_solution(1.0, 1.0)
T = 0.5

print(f"amplifier position marginal evolved to t = {T}:")
for convention in core.DRIFT_CONVENTIONS:
    flowed = core.guided_marginal_flow(
        model, solution, 0.0, T, drift_sign_convention=convention
    )
    reference = core.marginal_density_grid(
        solution.q_marginal, T, flowed.q_grid, quad_tol=0.05
    )
    l1 = core.l1_distance(flowed, reference)
    verdict = "preserves the analytic law" if l1 < 0.01 else "does not"
    print(f"  {convention:14s} L1 error {l1:.2e}   ({verdict})")

mass = 2.0
free = core.free_particle_model(mass)
p_mark = core.GaussianMarginal(mean=lambda t: 1.5, variance=1.0)
q_mark = core.GaussianMarginal(mean=lambda t: 0.5 + 0.75 * t, variance=1.0)
sampler = sde.BoundarySampler(p_mark, q_mark)
grid = core.TimeGrid(0.0, 1.0, 1e-2)

print(f"\nfree particle (m = {mass}), noise-free guided trajectory:")
for convention in core.DRIFT_CONVENTIONS:
    traj = sde.integrate_forward_guided(
        free, grid, sampler, q_mark, sde.RandomSource(5), 0,
        drift_sign_convention=convention,
    )
    velocity = (traj.q[-1] - traj.q[0]) / (grid.tf - grid.t0)
    print(
        f"  {convention:14s} velocity {velocity:+.4f}   "
        f"(p0/m = {traj.p[0] / mass:+.4f})"
    )
