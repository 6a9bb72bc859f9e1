"""
How the three interpolation schemes turn design variables into stiffness
=========================================================================

Three materials with moduli 1, 2 and 5 share one element. We walk the
design variables along a few paths and print the resulting modulus.
"""

import numpy as np

from topomulti import MaterialSet, modulus, weights

mats = MaterialSet((1.0, 2.0, 5.0))

# One-hot designs pick a single material. The hierarchical SIMP scheme
# encodes "material i" as (1, ..., 1, 0, ..., 0) instead of a unit vector.
print("one-hot designs")
for i in range(3):
    unit = np.eye(3)[i]
    ladder = (np.arange(3) <= i).astype(float)
    print(f"  material {i + 1}: pnorm {modulus(unit, mats, 'pnorm'):.6f}  "
          f"dmo {modulus(unit, mats, 'dmo'):.6f}  simp {modulus(ladder, mats, 'simp'):.6f}")

# Growing every variable together shows how each scheme treats mixed
# designs. The hierarchical SIMP code reads (1, 1, 1) as the stiffest
# material. DMO rewards partial mixtures and drops back to zero once every
# variable is fully on, because each weight is damped by the others.
print("\nuniform designs t * (1, 1, 1)")
print("      t    pnorm     simp      dmo")
for t in np.linspace(0, 1, 6):
    g = np.full(3, t)
    row = [modulus(g, mats, s) for s in ("pnorm", "simp", "dmo")]
    print(f"  {t:5.2f}  " + "  ".join(f"{v:7.4f}" for v in row))

# The weights themselves: a point in the interior of the design cube.
g = np.array([0.3, 0.6, 0.2])
for scheme in ("pnorm", "simp", "dmo"):
    print(f"\n{scheme:>6} weights at {g}: {np.round(weights(g, mats, scheme), 5)}")

# Larger norm orders push the mapping ratio toward max(g) / sum(g).
print("\nnorm order p and the mapping weight of the largest variable")
for p in (1, 2, 3, 6, 16, 64):
    phi = weights(g, MaterialSet((1.0, 2.0, 5.0), norm_p=p), "pnorm")
    print(f"  p = {p:2d}: phi = {np.round(phi, 4)}")
