"""Frequency scans of the L^4 L^4 Strichartz norm.

A unit-norm coherent state at frequency 1/h is placed on the closed
geodesic of three surfaces and its space-time norm over (0, 1) in the
window |r| <= 1 is recorded.  On the hyperbolic cylinder and the flat
cylinder the norm does not grow as h shrinks.  On the elliptic
comparison surface (stable closed geodesic, not part of the theory being
tested) the packet stays concentrated and the norm grows like a positive
power of 1/h.

This takes a few minutes.  Pass ``quick`` to use three values of h.

Run:  python3 demos/strichartz_contrast.py [out_dir] [quick]
"""

import sys

import numpy as np

from trapwave import dynamics as dyn
from trapwave import evolution as ev
from trapwave.io import write_svg
from trapwave.plot import line_plot

out = sys.argv[1] if len(sys.argv) > 1 else "."
quick = "quick" in sys.argv
h_list = [1 / 8, 1 / 16, 1 / 32] if quick else [1 / 8, 1 / 16, 1 / 32, 1 / 64]
cases = [("hyperbolic cylinder", dyn.build_profile("pure_cosh"), "on_waist"),
         ("flat cylinder", dyn.flat_profile(), "transverse"),
         ("elliptic baseline", dyn.elliptic_profile(), "on_waist")]

series = []
for label, P, placement in cases:
    if quick:
        # three points only span two octaves; fit by hand
        rows = []
        for h in h_list:
            _, traj = ev.run_packet(P, h, placement, 9.0,
                                    observers={"lq": lambda d: ev.SpatialNorm(d, 4.0, 1.0)})
            rows.append((h, ev.mixed_norm(traj, 4, 4, 1.0, key="lq").value))
        slope = np.polyfit(np.log([1 / h for h, _ in rows]), np.log([v for _, v in rows]), 1)[0]
    else:
        res = ev.strichartz_scan(P, placement, h_list)
        rows, slope = res.rows, res.slope
    print(f"{label:20s} slope {slope:+.4f}   norms " + " ".join(f"{v:.4f}" for _, v in rows))
    series.append({"x": [1 / h for h, _ in rows], "y": [v for _, v in rows], "label": f"{label} {slope:+.3f}"})

print("wrote", write_svg(f"{out}/strichartz_contrast.svg",
                         line_plot(series, "L4L4 norm vs frequency", "1/h", "norm", logx=True, logy=True)))
