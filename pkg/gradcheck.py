"""Central finite differences for verifying analytic gradients."""
from typing import Callable

import numpy as np


def central_difference(loss: Callable[[], float], param: np.ndarray, step: float) -> np.ndarray:
    """
    Numeric gradient of `loss` with respect to `param`, perturbing `param`
    in place one entry at a time. `loss` must read `param` when called.
    """
    if not param.flags.c_contiguous:
        raise ValueError("central_difference needs a C-contiguous parameter array")
    grad = np.zeros_like(param, dtype=np.float64)
    flat = param.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = loss()
        flat[i] = original - step
        minus = loss()
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    """
    Worst entry-wise |a - n| / max(|a|, |n|, floor). The floor keeps entries
    that are zero up to rounding from dominating the ratio.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))
