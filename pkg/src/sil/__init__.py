"""sil: a numerical laboratory for gradient-descent learning of Gaussian
single-index models with quadratic and truncated-quadratic activations."""

__version__ = "0.1.0"

from .activations import (  # noqa: F401
    ActivationSpec,
    CutoffFunction,
    activation_eval,
    hard_trunc,
    make_cutoff,
    quadratic,
    smooth_trunc,
)
from .errors import ConvergenceError, DivergenceError, DomainError, PreconditionError  # noqa: F401
from .sampling import Instance, SeedStream, sample_instance, sample_sphere  # noqa: F401
