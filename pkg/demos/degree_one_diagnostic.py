"""Linear Q on a suspension over a 3-cycle: the average settles, but not on
the product of conditional expectations, and the diagnostic says so."""

import numpy as np

from ergoflow.averaging import AveragePlan, QuadratureConfig
from ergoflow.diagnostics import convergence_report, summary_csv
from ergoflow.flows import PermutationMap, SuspensionFlow
from ergoflow.observables import BaseFunction, Constant
from ergoflow.points import SuspensionPoint

S = SuspensionFlow(PermutationMap.cycle(3))
h = np.exp(2j * np.pi * np.arange(3) / 3)
x = SuspensionPoint(np.array(0), np.array([0.3]))

for label, Q in (("Q=t", (0, 1)), ("Q=t^2", (0, 0, 1))):
    plan = AveragePlan("ThmA", [S, S], [BaseFunction(h), Constant(1.0), BaseFunction(np.conj(h))], Q=Q)
    rep = convergence_report(plan, x, QuadratureConfig(M_grid=(10.0, 100.0, 1000.0)))
    print(summary_csv([(label, rep)]).splitlines()[-1])
