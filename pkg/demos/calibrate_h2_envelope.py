"""Where does the H^2 kernel touch its envelope?

The envelope used by ``bound_envelope`` for n = 1 is

    C(t) (rho/sinh rho)^(1/2) (1 + rho)^(1/2)

with C(t) = C_small / |t| for |t| <= 1 and C_large / |t|^(3/2) beyond.
This script scans the ratio |K(t, rho)| / envelope shape over a dense
(t, rho) grid, reports where the supremum sits, and compares it with the
two closed-form limits 1/(4 pi) and sqrt(pi)/8 that the library constants
are built from (plus a 5% margin).

Run:  python3 demos/calibrate_h2_envelope.py [out_dir]
"""

import math
import sys

import numpy as np

from trapwave import propagator as prop
from trapwave.io import write_svg
from trapwave.plot import line_plot

out = sys.argv[1] if len(sys.argv) > 1 else "."

rho = np.linspace(0.0, 12.0, 49)
shape = prop.envelope_profile(rho, 1)

small_t = np.geomspace(1e-3, 1.0, 25)
large_t = np.geomspace(1.0, 1e4, 25)

sup_small, sup_large = [], []
for t in small_t:
    vals, _ = prop.kernel_h2_values(t, rho)
    ratio = np.abs(vals) * t / shape
    sup_small.append(ratio.max())
for t in large_t:
    vals, _ = prop.kernel_h2_values(t, rho)
    ratio = np.abs(vals) * t ** 1.5 / shape
    sup_large.append(ratio.max())

print("small time: sup_rho |K| t / shape")
for t, s in zip(small_t[::4], sup_small[::4]):
    print(f"  t = {t:9.3e}   {s:.6f}")
print(f"  limit 1/(4 pi)      {1 / (4 * math.pi):.6f}   library constant {prop.C_H2_SMALL:.6f}")

print("large time: sup_rho |K| t^1.5 / shape")
for t, s in zip(large_t[::4], sup_large[::4]):
    print(f"  t = {t:9.3e}   {s:.6f}")
print(f"  limit sqrt(pi)/8    {math.sqrt(math.pi) / 8:.6f}   library constant {prop.C_H2_LARGE:.6f}")

assert max(sup_small) <= prop.C_H2_SMALL and max(sup_large) <= prop.C_H2_LARGE
print("every sampled value sits below the library constants")

svg = line_plot(
    [{"x": small_t, "y": sup_small, "label": "t |K| / shape (t <= 1)"},
     {"x": large_t, "y": sup_large, "label": "t^1.5 |K| / shape (t >= 1)"},
     {"x": [1e-3, 1.0], "y": [prop.C_H2_SMALL] * 2, "label": "C small", "dashed": True},
     {"x": [1.0, 1e4], "y": [prop.C_H2_LARGE] * 2, "label": "C large", "dashed": True}],
    "H2 kernel envelope calibration", "t", "sup over rho", logx=True)
print("wrote", write_svg(f"{out}/h2_envelope.svg", svg))
