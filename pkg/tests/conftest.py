import sys
from pathlib import Path

import numpy as np

SRC = Path(__file__).resolve().parents[1] / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))


def central_difference(loss_fn, arr, step=1e-5, coords=None):
    """Finite-difference gradient of loss_fn (float) w.r.t. arr entries.

    loss_fn takes no arguments and reads arr by reference, so the caller
    can splice arr into any computation. coords limits which flat entries
    are probed; the rest of the returned array is NaN.
    """
    flat = arr.reshape(-1)
    out = np.full(flat.shape, np.nan)
    idx = range(flat.size) if coords is None else coords
    for i in idx:
        keep = flat[i]
        flat[i] = keep + step
        up = loss_fn()
        flat[i] = keep - step
        down = loss_fn()
        flat[i] = keep
        out[i] = (up - down) / (2.0 * step)
    return out.reshape(arr.shape)


def rel_err(a, b, floor=1e-8):
    """Elementwise relative error with the standard max(|a|,|b|,floor) denominator."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom
