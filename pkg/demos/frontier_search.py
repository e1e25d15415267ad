"""Searching the region numerically.

The optimizer draws random test channels, scores each corner with a
weighted objective and polishes the best few.  On the erasure cascade the
closed form is known, so the search result can be checked against it.

Run:  python demos/frontier_search.py
"""
import numpy as np

from idauth_lab.region import closed_form_best, erasure_cascade, optimize_frontier

src = erasure_cascade(0.3, 0.5)
rng = np.random.default_rng(7)

print(f"{'weights (r_i, -r_c, -l, r_s)':<34} {'search':>10} {'closed form':>12}")
for _ in range(5):
    w = np.concatenate([[0.0], rng.uniform(0, 1, 3)])
    found = optimize_frontier(src, w, 3000, seed=1)
    aux, c = found[0]
    score = -w[1] * c.i_xv_given_y - w[2] * c.l_min + w[3] * c.key_max
    print(f"{np.array2string(w, precision=2):<34} {score:10.6f} "
          f"{closed_form_best(0.3, 0.5, w):12.6f}")

# with weight on identification the search also trades U against the key
found = optimize_frontier(src, [1.0, 0.2, 0.2, 1.0], 3000, seed=1)
# many channels land on the same corner; show the distinct ones
corners = np.unique(np.round([c.as_vector() for _, c in found], 4), axis=0)
print(f"\n{len(corners)} distinct nondominated corners for weights (1, 0.2, 0.2, 1):")
ordered = corners[np.argsort(-corners[:, 0])]
for r_i, r_c, l, r_s in ordered[np.linspace(0, len(ordered) - 1, 8).astype(int)]:
    print(f"  R_I {r_i:.4f}  R_C {r_c:.4f}  L {l:.4f}  R_S {r_s:.4f}")
