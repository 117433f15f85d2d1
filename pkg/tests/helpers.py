"""Shared test utilities: finite-difference gradient oracles."""

from __future__ import annotations

import numpy as np

from graphmatch.tensor import Tensor


def central_difference(fn, arr: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Full central-difference gradient of scalar fn(arr) -> float."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(fn(arr))
        flat[i] = orig - h
        down = float(fn(arr))
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def sampled_central_difference(fn, arr: np.ndarray, indices, h: float) -> np.ndarray:
    """Central differences at the given flat indices only."""
    flat = arr.reshape(-1)
    out = np.empty(len(indices), dtype=np.float64)
    for pos, i in enumerate(indices):
        orig = flat[i]
        flat[i] = orig + h
        up = float(fn())
        flat[i] = orig - h
        down = float(fn())
        flat[i] = orig
        out[pos] = (up - down) / (2.0 * h)
    return out


def assert_gradients_close(analytic, numeric, rtol: float, atol: float, label: str = ""):
    analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)
    numeric = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric)
    bad = err > atol + rtol * scale
    assert not bad.any(), (
        f"{label}: {bad.sum()}/{bad.size} gradient entries off; "
        f"worst err {err[bad].max():.3e} vs analytic {analytic[bad][np.argmax(err[bad])]:.3e}"
    )


def check_op_gradient(build, *arrays, h: float = 1e-4, rtol: float = 1e-3, atol: float = 1e-8, label: str = ""):
    """FD-check an op: build(*tensors) must return a Tensor; loss is its sum.

    Arrays are float64 copies; every input entry is checked.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]

    def loss_value():
        tensors = [Tensor(a, dtype=np.float64) for a in arrays]
        return float(build(*tensors).sum().data)

    tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    build(*tensors).sum().backward()
    for k, (t, a) in enumerate(zip(tensors, arrays)):
        numeric = central_difference(lambda _: loss_value(), a, h=h)
        assert_gradients_close(t.grad, numeric, rtol, atol, label=f"{label or build} input {k}")
