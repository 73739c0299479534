"""Phase-space densities from wavefunctions, and what smoothing costs.

Projecting a state onto coherent states yields a true probability
density on phase space. The price of positivity is a fixed blur: the
position marginal of that density equals the wavefunction's position
density convolved with a Gaussian of variance hbar/2. This script checks
the bookkeeping on a coherent state and on a two-packet superposition.
"""

import numpy as np

from phaseflow import core

hbar = 1.0

x = np.linspace(-10.3, 9.7, 2001)
psi = core.coherent_state(0.7, -0.3, hbar, x)
Q = core.husimi(psi, np.linspace(-7.3, 8.7, 321), np.linspace(-8.3, 7.7, 321))

print("coherent state at (p, q) = (0.7, -0.3):")
print(f"  total mass        {Q.total_mass():.6f}")
print(f"  peak value        {Q.values.max():.6f}   (1/(2 pi hbar) = {1/(2*np.pi*hbar):.6f})")
print(f"  <q> = {core.berezin_expectation(lambda p, q: q, Q):+.6f}")
print(f"  <p> = {core.berezin_expectation(lambda p, q: p, Q):+.6f}")

xs = np.linspace(-11.0, 11.0, 2201)
a = core.coherent_state(0.3, -1.2, hbar, xs).amplitudes
b = core.coherent_state(-0.4, 1.0, hbar, xs).amplitudes
amp = a + b
amp = amp / np.sqrt(np.trapezoid(np.abs(amp) ** 2, dx=xs[1] - xs[0]))
psi2 = core.Wavefunction(x_grid=xs, amplitudes=amp, hbar=hbar)

dens = np.abs(psi2.amplitudes) ** 2
mean = np.trapezoid(xs * dens, dx=psi2.dx)
pos_var = np.trapezoid((xs - mean) ** 2 * dens, dx=psi2.dx)

Q2 = core.husimi(psi2, np.linspace(-10, 10, 401), np.linspace(-10, 10, 401))
marg = core.marginal_q(Q2)

print("\ntwo-packet superposition:")
print(f"  |psi|^2 position variance      {pos_var:.6f}")
print(f"  phase-space marginal variance  {marg.variance():.6f}")
print(f"  difference                     {marg.variance() - pos_var:.6f}   "
      f"(smoothing adds hbar/2 = {hbar / 2})")
