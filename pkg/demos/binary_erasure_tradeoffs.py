"""Tradeoff curves for the binary erasure cascade.

X is a uniform bit, Y erases it with probability p and Z erases Y with
probability q.  Sweeping the crossover alpha of a BSC test channel V traces
compression, leakage and key rate against each other.  The numeric corner
evaluator and the closed forms are printed side by side.

Run:  python demos/binary_erasure_tradeoffs.py [outdir]
"""
import sys
from pathlib import Path

import numpy as np

from idauth_lab.cli import svg_line_plot
from idauth_lab.region import (binary_erasure_closed_form, bsc_aux, erasure_cascade,
                               evaluate_corner)

p, q = 0.3, 0.5
src = erasure_cascade(p, q)
alphas = np.linspace(0.0, 0.5, 11)

print(f"case i (U constant), p={p}, q={q}")
print(f"{'alpha':>6} {'R_C':>9} {'L':>9} {'R_S':>9}   closed form R_S")
keys = []
for a in alphas:
    c = evaluate_corner(src, bsc_aux(a))
    cf = binary_erasure_closed_form(p, q, a, "i")
    keys.append(c.key_max)
    print(f"{a:6.2f} {c.r_c_min:9.6f} {c.l_min:9.6f} {c.key_max:9.6f}   {cf.r_s_max:.6f}")

# a noisier test channel stores less and leaks less, but also yields less key
print("\ncase ii (U = V, no key), p=0.2, q=0.4")
print(f"{'alpha':>6} {'R_I max':>9} {'R_C-R_I':>9} {'L':>9}")
for a in alphas:
    cf = binary_erasure_closed_form(0.2, 0.4, a, "ii")
    print(f"{a:6.2f} {cf.r_i_max:9.6f} {cf.r_c_excess:9.6f} {cf.l_min:9.6f}")

out = Path(sys.argv[1] if len(sys.argv) > 1 else "idauth-out")
out.mkdir(parents=True, exist_ok=True)
(out / "key_vs_alpha.svg").write_text(
    svg_line_plot(list(alphas), keys, "key rate, case i", "alpha", "R_S"))
print(f"\nwrote {out / 'key_vs_alpha.svg'}")
