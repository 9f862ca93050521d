class NNError(Exception):
    pass


class DimensionMismatch(NNError, ValueError):
    pass


class NonFiniteValue(NNError, FloatingPointError):
    pass


class NoCachedForward(NNError, RuntimeError):
    pass


def check_finite(name: str, arr) -> None:
    import numpy as np

    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"non-finite values in {name}")
