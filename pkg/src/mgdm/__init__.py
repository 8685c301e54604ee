"""Minibatch gradient descent with momentum for linear regression: iteration,
stable solutions, spectral tuning and a small experiment harness."""
from .errors import (EmptyData, InvalidInput, IoError, MgdmError, NumericalFailure,
                     SchemaError, SingularMatrix)

__version__ = "0.1.0"
