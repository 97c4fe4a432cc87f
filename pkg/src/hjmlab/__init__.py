"""hjmlab: real-world multi-curve term-structure simulation and verification.

Library layout:

* curves      -- weighted-space curve numerics (norms, operators, constants)
* modelspec   -- coefficient families, admissibility and ordering checks
* drift       -- drift restrictions, integrated-identity residuals
* solver      -- mild Euler SPDE engines, ensembles, bond prices
* deflator    -- minimal deflator, deflated prices, martingale tests
* invariance  -- ordered-cone membership and preservation checks
* affine      -- finite-dimensional short-end realization and its gap test
* mmm         -- closed-form strict-local-martingale oracle
* config/cli  -- scenario files, commands, reports and figures
"""

__version__ = "0.1.0"

from .curves import Curve, CurveFamily, SpaceParams  # noqa: F401
from .modelspec import Grid, ModelSpec  # noqa: F401
from .solver import PathState, SimulationPlan, simulate  # noqa: F401
