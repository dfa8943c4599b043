"""Small Monte Carlo check of the product-of-integrals limit on SL2(R)/SL2(Z).

Horocycle times geodesic flow with Q = t^2 and two smooth bumps on the
upper half plane; 100 Haar points keep the run to about ten seconds."""

import math

import numpy as np

from ergoflow.averaging import AveragePlan, QuadratureConfig, continuous_average
from ergoflow.flows import Sl2Flow
from ergoflow.observables import Constant, SmoothBump
from ergoflow.sampling import haar_sample_sl2

f, g = SmoothBump(1.4j, 0.3), SmoothBump(0.05 + 1.5j, 0.25)
plan = AveragePlan("ThmA", [Sl2Flow("horocycle"), Sl2Flow("geodesic")], [f, Constant(1.0), g], Q=(0, 0, 1))
quad = QuadratureConfig(step=2e-3, M_grid=(10.0, 100.0))

n = 100
xs = haar_sample_sl2(1, n)
vals = np.array([continuous_average(plan, xs[i], quad).values for i in range(n)]).real
ref = f.haar_integral() * g.haar_integral()
for j, M in enumerate(quad.M_grid):
    d = vals[:, j] - ref
    se = d.std(ddof=1) / math.sqrt(n)
    print(f"M={M:>5g}  mean residual {d.mean():+.2e}  SE {se:.2e}  z {d.mean() / se:+.2f}")
