"""Lower and upper values of zero-sum stochastic differential games with jumps.

Three routes compute the same objects and check each other: backward
stochastic equations solved along the controlled jump diffusion, discrete
dynamic programming for the value functions, and a monotone finite-difference
scheme for the Isaacs integro-PDE.
"""

from .errors import (AlignmentError, CFLError, ConfigurationError, DomainError, JumpGameError, NumericalError,
                     OracleSizeError, ParseError, StabilityError, ValidationFailure)
from .grids import StateGrid
from .kernel import Engine, gauss_hermite
from .levy_paths import (LevyMeasure, PathBundle, TimeGrid, compensator_integral, sample_paths, segment_swap)
from .problem import (ControlSet, Coefficients, ProbeConfig, ProblemSpec, load_problem, load_scenario, make_spec,
                      parse_problem, serialize_problem, validate_hypotheses)

__version__ = "0.1.0"
