# Numerical services of the AEE laboratory
from .error_lab import error_lab

__all__ = ["error_lab"]
