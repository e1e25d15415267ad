"""How often can a forged measurement be accepted?

An attacker who sees the database and Z^n submits the y that maximises the
chance the decoder outputs some enrolled user's true key.  This exact
optimum is compared with the MAP strategy (pick a user, then its most
likely key) and with blind guessing of the key from the same view.

Run:  python demos/active_attacker.py
"""
from idauth_lab import probability as pr
from idauth_lab.analysis import build_exact_model, exact_mfap, map_attack
from idauth_lab.codec import CodebookSpec, TypicalityParams, generate_codebook
from idauth_lab.region import AuxChannels, erasure_cascade, evaluate_corner

src = erasure_cascade(0.0, 0.5)
aux = AuxChannels(pr.identity_channel(2), pr.constant_channel(2))
print("single-letter exponent I(V;Y|U) - I(V;Z|U) =", evaluate_corner(src, aux).key_raw)

print("\n n  |S|   mFAP    exponent  MAP      guess")
for n in (4, 6, 8):
    spec = CodebookSpec(n, 2, 0.0, src, aux, TypicalityParams(0.75, 0.25), seed=0)
    m = build_exact_model(generate_codebook(spec))
    r = exact_mfap(m)
    print(f"{n:2d}  {m.n_keys:3d}  {r.mfap:.4f}  {r.exponent:8.4f}  "
          f"{map_attack(m):.4f}   {r.guess_probability:.4f}")

# at these blocklengths the key is short and typicality is loose, so the
# attacker wins often; the exponent is a large-n statement
