"""
Operations on transport maps
============================

Maps of [0, 1] onto itself, their scalar multiples along geodesics,
and why adding scalars does not distribute over composition.
"""

import numpy as np

from transport_ar import Grid, TransportMap, circledcirc, d1, identity, inverse, odot, oplus

grid = Grid(0.0, 1.0, 1001)
x = grid.nodes
square = TransportMap.from_callable(grid, lambda x: x**2)

# a fractional multiple moves part of the way from the identity to T
half = odot(0.5, square)
print("0.5 * x^2 at 0.5:", half.eval(0.5), "(0.5*0.5 + 0.5*0.25 =", 0.375, ")")

# negative multiples head towards the inverse map
print("-0.5 * x^2 at 0.25:", odot(-0.5, square).eval(0.25), "vs", 0.5 * 0.25 + 0.5 * np.sqrt(0.25))

# multiples above one compose T with itself first
print("1.5 * x^2 at 0.5:", odot(1.5, square).eval(0.5), "vs", 0.5 * 0.25 + 0.5 * 0.0625)

# (0.6 + 0.7) * T is not (0.6 * T) followed by (0.7 * T)
lhs = odot(1.3, square)
rhs = oplus(odot(0.6, square), odot(0.7, square))
print("sup gap between the two:", np.max(np.abs(lhs.values - rhs.values)))

# a coefficient that varies with x
varying = circledcirc(x, square)
print("beta(x) = x applied to x^2 at 0.5:", varying.eval(0.5), "vs", 0.5 - 0.25 + 0.125)

# distances scale linearly along the geodesic
for a in (0.25, 0.5, 1.0):
    print(f"d1({a} * T, id) = {d1(odot(a, square), identity(grid)):.5f}")

print("T followed by its inverse is close to the identity:",
      np.max(np.abs(oplus(square, inverse(square)).values - x)))
