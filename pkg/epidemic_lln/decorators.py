import functools
import inspect
from typing import Callable

import numpy as np

from epidemic_lln.exceptions import DomainError


def require_positive(param: str = "x"):
    """
    Decorator that rejects non-positive values of one argument before the
    decorated function runs.

    Args:
        param: Name of the argument to check. Scalars and numpy arrays are
            both accepted; every entry of an array must be positive.

    Returns:
        Decorator function
    """
    def decorator(func: Callable):
        sig = inspect.signature(func)
        param_names = list(sig.parameters.keys())
        if param not in param_names:
            raise ValueError(f"{func.__name__} has no parameter named '{param}'")
        idx = param_names.index(param)

        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            # Check kwargs first, then positional args
            if param in kwargs:
                value = kwargs[param]
            elif idx < len(args):
                value = args[idx]
            else:
                return func(*args, **kwargs)

            arr = np.asarray(value, dtype=float)
            if arr.size == 0 or not np.all(arr > 0.0):
                raise DomainError(f"{func.__name__}: {param} must be > 0, got {value!r}")
            return func(*args, **kwargs)
        return wrapper
    return decorator
