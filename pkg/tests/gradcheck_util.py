"""Shared finite-difference checking helper for layer and block tests."""

import numpy as np

from affdet.nn import gradient_check, sample_coords


def check_module(module, forward_fn, backward_fn, inputs, rng,
                 n_coords=6, eps=1e-5):
    """Max relative gradient error over sampled parameter and input coords.

    forward_fn() must recompute the module output from the current
    parameter values and the `inputs` arrays (read by reference, so
    in-place perturbation is visible). backward_fn(dout) must return the
    analytic input gradients as a tuple aligned with `inputs`.
    """
    out = forward_fn()
    r = rng.standard_normal(out.shape)
    module.zero_grad()
    input_grads = backward_fn(r)
    if not isinstance(input_grads, tuple):
        input_grads = (input_grads,)

    def loss():
        return float((forward_fn() * r).sum())

    worst = 0.0
    for _, p in module.named_parameters():
        if not p.trainable:
            continue
        coords = sample_coords(p.value.size, n_coords, rng)
        worst = max(worst, gradient_check(loss, p.value, p.grad, eps=eps, coords=coords))
    for x, g in zip(inputs, input_grads):
        coords = sample_coords(x.size, n_coords, rng)
        worst = max(worst, gradient_check(loss, x, g, eps=eps, coords=coords))
    return worst


def naive_dft(x: np.ndarray) -> np.ndarray:
    """O(n^2) DFT oracle: X[k] = sum_t x[t] exp(-2*pi*i*k*t/n)."""
    n = x.shape[-1]
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x @ basis.T
