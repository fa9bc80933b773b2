"""
From a wave spectrum to hull forcing
====================================

Walks through the sea model: a Bretschneider spectrum sampled on a
frequency grid, the Doppler shift seen by a vessel under way, and how the
hull turns each wave component into heave and pitch excitation.

Run with ``python demos/01_waves_and_hull.py``.
"""

import math

import numpy as np

from seastate.wave_env import (BretschneiderSpec, FrequencyGrid, bretschneider_density, doppler_encounter,
                               forcing_heave, forcing_pitch, sample_components, reference_truth_vessel)

# A moderate sea: 1.25 m significant height, 7 s zero up-crossing period.
sea = BretschneiderSpec(1.25, 7.0)
grid = FrequencyGrid.uniform(0.2, 1.6, 30)
S = bretschneider_density(grid.omegas, sea)
print(f"peak at {sea.peak_frequency:.3f} rad/s, density there {S.max():.3f} m^2 s")

# Integrating the density back over a dense grid gives the height we asked for.
dense = np.linspace(1e-3, 30.0, 200_001)
m0 = np.trapezoid(bretschneider_density(dense, sea), dense)
print(f"4 sqrt(m0) on a dense grid: {4 * math.sqrt(m0):.4f} m")

# Random phases, deterministic amplitudes.
comps = sample_components(sea, grid, rng_seed=1)
print("components around the peak (omega, amplitude, phase):")
for c in comps[8:11]:
    print(f"  {c.omega:.3f}  {c.amplitude:.4f}  {c.phase:+.3f}")

# Heading matters twice: through the encounter frequency and through the
# forcing shape.  Head seas compress periods, beam seas leave them alone.
for name, beta in (("head", math.pi), ("bow quartering", 3 * math.pi / 4), ("beam", math.pi / 2)):
    v = reference_truth_vessel(beta=beta)
    we = doppler_encounter(grid.omegas, v)
    Ph, Pp = forcing_heave(grid.omegas, v), forcing_pitch(grid.omegas, v)
    print(f"{name:>15}: encounter {we[0]:.3f}..{we[-1]:.3f} rad/s, "
          f"heave gain {Ph.min():.3f}..{Ph.max():.3f}, pitch gain max {np.abs(Pp).max():.3f}")

# In beam seas the pitch gain is zero: the wave crest runs along the hull.
