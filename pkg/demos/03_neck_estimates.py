"""Measuring the neck estimates: deviation bound, edge rate, conjugation.

The deviation |S_glued - S| on the window |t| <= |log eps| - 1 is
controlled by c eps^{-1} (cosh t)^{1-n}.  Numerically this shows up as a
weighted sup W(eps) that stays of one size across eps, and an edge value
at t = log(eps) + 1 that decays at the codimension rate as eps -> 0
(with visible saturation once eps is no longer small).
"""

import numpy as np

from cscglue import GluingConfig, conjugation_residual, deviation_fit, make_model
from cscglue.neck_analysis import loglog_slope

A = make_model("torus2_x_sphere3")
make_cfg = lambda e: GluingConfig(A, A, eps=e)

eps_list = [0.01, 0.02, 0.04, 0.08, 0.16]
fit = deviation_fit(make_cfg, eps_list)

print("  eps    W(eps)   probe dev at t = log(eps)+1")
for prof in fit.profiles:
    print(f"{prof.eps:6.3f}  {prof.weighted_sup:7.4f}  {prof.probe_dev:10.4f}")
print(f"\nweighted sup spread (max/min): {fit.weighted_ratio:.3f}")

# The probe rate: asymptotically the edge deviation scales like eps^{n-2}
# = eps.  The local slope degrades as eps grows because the relative
# perturbation h = e eps stops being small: compare fits over nested sets.
probes = [p.probe_dev for p in fit.profiles]
for k in (2, 3, 4, 5):
    sl = loglog_slope(eps_list[:k], probes[:k])
    print(f"log-log slope over eps <= {eps_list[k-1]}: {sl:.3f}")

# The conjugation identity: the glued Laplacian equals
# u^{-(n+2)/(n-2)} L_neck(u .) up to a remainder with O(|x|)-sized
# coefficients.  The normalized residual stays bounded across eps.
print("\nconjugation residual / |x| (normalized):")
for eps in (0.02, 0.04, 0.08, 0.16):
    rep = conjugation_residual(make_cfg(eps))
    print(f"  eps = {eps:5.2f}: {rep.max_ratio:.4f}")

# For the flat-normal fixture the identity is exact: the residual sits at
# the rounding floor.
from cscglue.curvature import DerivativeScheme

F = make_model("sphere2_x_ball3")
cfgF = GluingConfig(F, F, eps=0.02)
T = cfgF.t_max
ts = np.array([-(T - 2.2), T - 2.2])
rep = conjugation_residual(cfgF, t_samples=ts, scheme=DerivativeScheme(8e-3, 3))
print(f"\nflat-normal fixture residual: {rep.max_ratio:.2e} (identity exact)")
