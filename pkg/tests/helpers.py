import numpy as np

from otter import numerics as nm


def assert_grads_match(fn, params, h=1e-5, rtol=1e-6, atol=1e-8):
    """Full-coordinate central differences against the taped gradient (float64)."""
    _, grads = nm.value_and_grad(fn, params)
    fd = nm.finite_diff(fn, params, h=h)
    for p, g, d in zip(params, grads, fd):
        np.testing.assert_allclose(g, d, rtol=rtol, atol=atol, err_msg=f"parameter {p.name or p.shape}")
