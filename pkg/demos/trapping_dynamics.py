"""Geodesics on surfaces of revolution with one hyperbolic closed orbit.

Three facts about the glued cylinder are checked numerically:

* every unit-speed geodesic that does not start on the waist leaves the
  compact core in finite time;
* the waist is unstable with Lyapunov exponent kappa for f = cosh(kappa r)/kappa;
* the topological pressure of the trapped set at s = 1/2 is negative.

Run:  python3 demos/trapping_dynamics.py [out_dir]
"""

import sys

import numpy as np

from trapwave import dynamics as dyn
from trapwave import hyperbolic as hyp
from trapwave.io import write_svg
from trapwave.plot import line_plot

out = sys.argv[1] if len(sys.argv) > 1 else "."

glue = dyn.build_profile("cosh_glue_euclidean", {"eta": 0.2, "R": 3.0})
print("profile", glue.to_json())
print("validation failures:", dyn.validate_profile(glue))

rep = dyn.escape_probe(glue, 2000, seed=1)
print(f"escape probe: {rep.escaped} escaped, {rep.trapped} trapped, "
      f"longest escape {rep.max_escape_time:.2f} flow-time units")
order = np.argsort(np.abs(rep.rho0))
svg = line_plot([{"x": np.abs(rep.rho0)[order], "y": rep.escape_times[order], "style": "scatter",
                  "label": "escape time"}], "escape time vs initial radial momentum", "|rho0|", "T_escape",
                logy=True)
print("wrote", write_svg(f"{out}/escape_times.svg", svg))

for kappa in (0.5, 1.0, 2.0):
    P = dyn.build_profile("pure_cosh", {"kappa": kappa})
    print(f"kappa = {kappa}: waist Lyapunov exponent {dyn.lyapunov_exponent(P, dyn.waist_state(P), 5.0):.5f}")

cosh = dyn.build_profile("pure_cosh")
s_values = np.linspace(0.0, 1.0, 5)
sep = [dyn.pressure_estimate(cosh, s, 0.05, 20.0).estimate for s in s_values]
formula = [dyn.pressure_estimate(hyp.cyclic_group(2 * np.pi), s).estimate for s in s_values]
for s, a, b in zip(s_values, sep, formula):
    print(f"P({s:.2f}): separated sets {a:+.4f}   constant curvature formula {b:+.4f}")
svg = line_plot([{"x": s_values, "y": sep, "style": "scatter", "label": "separated sets"},
                 {"x": s_values, "y": formula, "label": "delta - s"}], "pressure of the waist", "s", "P(s)")
print("wrote", write_svg(f"{out}/pressure.svg", svg))
