"""Array coercion helpers shared by the pydantic domain models"""

from typing import Any

import numpy as np

from src.utils.errors import StructuralError


def as_array(value: Any, field: str, ndim: int) -> np.ndarray:
    """
    Convert a nested list (or array) into a read-only float array

    Raises:
        StructuralError: wrong rank, ragged rows or non-finite entries
    """
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise StructuralError(field, f"not a rectangular numeric array ({e})") from e

    if arr.ndim != ndim:
        raise StructuralError(field, f"expected a {ndim}-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise StructuralError(field, "contains NaN or infinite entries")

    arr.setflags(write=False)
    return arr


def symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + np.swapaxes(mat, -1, -2))
