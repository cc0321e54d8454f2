#!/usr/bin/env python3
# The bilinear form H_p that drives d|v_t|^p, evaluated through its three
# backends: flat derivatives, Ricci curvature, and the second fundamental
# form of an embedding.  On the unit sphere S^{n-1} all routes give
# (p + 1 - n)|v|^2.
import numpy as np

from flowlab import builtin, eval_Hp, eval_Htilde, hp_report, tangent_project

ou = builtin("ou(1)")
print("flat backend, linear restoring system (expect -2 v^2 for every p):")
for p in (1.0, 2.0, 4.0):
    print(f"  p={p:g}:", eval_Hp(ou.system, np.array([0.3]), np.array([1.0]), p))

sph = builtin("sphere(3)")
x = np.array([0.0, 0.0, 1.0])
v = np.array([1.0, 0.0, 0.0])
print("\nunit sphere in R^3 (expect p + 1 - 3):")
for p in (1.0, 2.0, 4.0):
    ric = eval_Hp(sph.system, x, v, p, backend="ricci", curvature=sph.curvature)
    gau = eval_Hp(sph.system, x, v, p, backend="gauss")
    print(f"  p={p:g}: ricci {ric:+.12f}   gauss {gau:+.12f}")

print("\nthe variant form with coefficient -2 (the p = 0 member):")
print("  sphere:", eval_Htilde(sph.system, x, v, backend="gauss"), "(expect 1 - 3)")
print("  restoring system:", eval_Htilde(ou.system, np.array([0.0]), np.array([1.0])))

# affine in p: three-point collinearity on a multiplicative system
inv = builtin("inversion_plane")
xi = np.array([0.8, -0.4])
vi = np.array([0.3, 1.1])
h = {p: eval_Hp(inv.system, xi, vi, p) for p in (1, 2, 4)}
print("\naffine-in-p check on the inversion system:",
      "H4 - H2 =", h[4] - h[2], " 2(H2 - H1) =", 2 * (h[2] - h[1]))

# cross-backend agreement over random tangent samples
rng = np.random.default_rng(0)
samples = []
for _ in range(12):
    xx = rng.standard_normal(3)
    xx /= np.linalg.norm(xx)
    samples.append((xx, tangent_project(sph.model, xx, rng.standard_normal(3))))
reports = hp_report(sph.system, samples, p=2.0, backends=("ricci", "gauss"),
                    curvature=sph.curvature)
print("\nbackend disagreement over 12 random tangent pairs:",
      reports[0].disagreement)
