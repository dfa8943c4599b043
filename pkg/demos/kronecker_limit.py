"""Polynomial multiple average on a pair of Kronecker flows.

Computes the running average of f1(T^t x) f2(T^{2t} x) g(S^{t^3 - t} x) and
compares its tail with the exact character limit and the predicted product.
"""

import math

from ergoflow.averaging import AveragePlan, QuadratureConfig, continuous_average
from ergoflow.diagnostics import convergence_report
from ergoflow.flows import KroneckerFlow
from ergoflow.observables import Constant, Sum, TorusCharacter as chi
from ergoflow.oracles import character_limit
from ergoflow.points import TorusPoint

T = KroneckerFlow([math.sqrt(2), math.sqrt(3), 0.0])
S = KroneckerFlow([0.0, 0.0, math.sqrt(5)])
x = TorusPoint([0.1, 0.27, 0.61])

f1 = Sum([Constant(0.5), chi([-2, 0, 1])])
f2 = chi([1, 0, 0])
g = Sum([chi([0, 1, 0]), chi([0, 0, 1])])
plan = AveragePlan("ThmB", [T, S], [f1, f2, g], Q="t^3 - t", a=(2, 1))

curve = continuous_average(plan, x, QuadratureConfig(M_grid=(1e2, 1e3, 1e4)))
for M, v in zip(curve.horizons, curve.values):
    print(f"M={M:>8g}  average={complex(v):.6f}")

limit, alive = character_limit(plan, x)
print(f"exact limit {limit:.6f} from {alive} surviving terms")
rep = convergence_report(plan, x, curve=curve)
print(f"predicted {rep.predicted.value:.6f}  residual {rep.residual:.2e}  verdict {rep.verdict}")
