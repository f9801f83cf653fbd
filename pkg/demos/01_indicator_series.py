"""How the trigonometric series approximates a box indicator.

Run:  python3 demos/01_indicator_series.py
"""

import numpy as np

from kdsketch import Neighborhood, indicator_partial_sum_1d, indicator_partial_sum_pd, square_wave_reference

a, b = 0.25, 0.75
xs = [0.1, 0.3, 0.5, 0.7, 0.9]

print("1-d partial sums of 1(0.25 < x < 0.75)")
print("   J " + "".join(f"  x={x:<5}" for x in xs))
for J in (1, 4, 16, 64, 256):
    vals = [indicator_partial_sum_1d(x, a, b, J) for x in xs]
    print(f"{J:4d} " + "".join(f"{v:9.4f}" for v in vals))

# Near an edge the series overshoots (Gibbs) but stays bounded.
grid = np.linspace(0.001, 0.999, 2000)
for J in (16, 128):
    vals = indicator_partial_sum_1d(grid, a, b, J)
    print(f"J={J:3d}: min {vals.min():+.4f}, max {vals.max():+.4f} on a fine grid")

# With b = 1 the series is a shifted square wave.
J = 40
x = 0.6
print(f"\nupper gate closed: series {indicator_partial_sum_1d(x, 0.2, 1.0, J):.15f}")
print(f"square wave at a - x:     {square_wave_reference(0.2 - x, J):.15f}")

# Over the whole unit cube every non-constant coefficient vanishes.
full = Neighborhood.full(3)
print("\nfull cube, p=3:", indicator_partial_sum_pd((0.2, 0.5, 0.9), full, 100))
