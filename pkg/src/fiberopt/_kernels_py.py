"""Pure-numpy fallback for the compiled filter scan kernels.

Mirrors the signatures in ``_kernels.pyx``; selected by ``_backend`` when
the extension module is unavailable.
"""

import numpy as np


def innovation_scan(g, omega, g_tilde, r):
    g = np.asarray(g, dtype=np.float64)
    T = g.shape[0]
    out = np.empty_like(g)
    for t in range(T):
        nu = g[t] - g_tilde
        r *= 1.0 - omega
        r += omega * nu
        g_tilde += r
        out[t] = g_tilde
    return out


def ema_scan(g, kappa, g_tilde):
    g = np.asarray(g, dtype=np.float64)
    T = g.shape[0]
    out = np.empty_like(g)
    for t in range(T):
        g_tilde *= 1.0 - kappa
        g_tilde += kappa * g[t]
        out[t] = g_tilde
    return out
