"""Coupled multidimensional BSDE solver and dynamic risk-measure toolkit.

The package is organised around a small set of immutable domain objects
(time grids, Brownian path ensembles, terminal claims, generators) and
pure functions operating on them:

- :mod:`gbsde.core` — domain types, simulation, claim/generator registries
- :mod:`gbsde.gendsl` — expression language for driver components
- :mod:`gbsde.solver` — least-squares Monte Carlo and lattice solvers
- :mod:`gbsde.conditions` — sampling falsifiers for generator criteria
- :mod:`gbsde.risk` — risk-measure operators (sharing, insurance, envelopes)
- :mod:`gbsde.dual` — convex conjugates, penalty terms, dual bounds
- :mod:`gbsde.cli` — the ``gbsde`` command-line front end
"""

from .core import (
    TimeGrid,
    PathEnsemble,
    TerminalClaim,
    GeneratorSpec,
    RectangleSpec,
    make_time_grid,
    simulate_ensemble,
    evaluate_terminal,
    stack_generators,
    stack_claims,
)
from .errors import ConfigError, EvaluationError, NumericalError

__version__ = "0.1.0"
