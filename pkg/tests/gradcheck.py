"""Central finite-difference gradient oracle shared by the test modules.

The oracle re-evaluates the forward function at perturbed inputs only, so it
is independent of the backward pass it is checking.
"""

import numpy as np

from layout_mcl.diffcore import Tape, Tensor

H = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-7


def numeric_grad(fn, tensors, which, h=H):
    """Central-difference gradient of scalar fn(*tensors) w.r.t. tensors[which]."""
    base = tensors[which]
    grad = np.zeros_like(base.data)
    flat = base.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = float(fn(*tensors).data)
        flat[i] = keep - h
        down = float(fn(*tensors).data)
        flat[i] = keep
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def assert_gradients_match(fn, tensors, rel_tol=REL_TOL, abs_floor=ABS_FLOOR):
    """Compare tape gradients of scalar fn(*tensors) against finite differences."""
    with Tape() as tape:
        loss = fn(*tensors)
        tape.backward(loss)
    for which, t in enumerate(tensors):
        analytic = tape.grad(t)
        numeric = numeric_grad(fn, tensors, which)
        diff = np.abs(analytic - numeric)
        scale = np.maximum(np.abs(numeric), np.abs(analytic))
        bad = diff > np.maximum(rel_tol * scale, abs_floor)
        assert not bad.any(), (
            f"gradient mismatch for argument {which} ({t.name or 'unnamed'}): "
            f"max abs diff {diff.max():.3e}, analytic {analytic[bad][:3]}, numeric {numeric[bad][:3]}"
        )


def rand_tensor(rng, shape, name=None, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, size=shape), name=name)
