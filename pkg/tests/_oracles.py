"""Brute-force reference computations shared by the tests."""
import numpy as np

from bathpositive.opcore import partial_trace


def apply_on_system(op, rho, dims):
    """``(R (x) id)(rho)`` by applying ``R`` to every bath block of ``rho``."""
    d_s, d_b = dims
    t = rho.reshape(d_s, d_b, d_s, d_b)
    out = np.zeros_like(t)
    for k in range(d_b):
        for l in range(d_b):
            out[:, k, :, l] = op(t[:, k, :, l])
    return out.reshape(rho.shape)


def evolve_reduced(u, rho, dims):
    return partial_trace(u @ rho @ u.conj().T, dims)
