# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-scan kernels for the linear gradient filters.

The recursions are sequential in time, so they cannot be vectorized along
the step axis; these loops are the hot path for Monte-Carlo attenuation
runs and the synthetic drift benchmark.  A pure-numpy twin lives in
``_kernels_py`` and is selected automatically when this extension is not
built.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def innovation_scan(double[:, ::1] g, double omega,
                    double[::1] g_tilde, double[::1] r):
    """Run the innovation filter over a (T, n) observation block.

    ``g_tilde`` and ``r`` hold the filter state and are updated in place.
    Returns the (T, n) array of filtered outputs.
    """
    cdef Py_ssize_t T = g.shape[0]
    cdef Py_ssize_t n = g.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((T, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t t, i
    cdef double nu
    for t in range(T):
        for i in range(n):
            nu = g[t, i] - g_tilde[i]
            r[i] = (1.0 - omega) * r[i] + omega * nu
            g_tilde[i] = g_tilde[i] + r[i]
            o[t, i] = g_tilde[i]
    return out


def ema_scan(double[:, ::1] g, double kappa, double[::1] g_tilde):
    """Run the EMA filter over a (T, n) observation block.

    ``g_tilde`` holds the filter state and is updated in place.
    Returns the (T, n) array of filtered outputs.
    """
    cdef Py_ssize_t T = g.shape[0]
    cdef Py_ssize_t n = g.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((T, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t t, i
    for t in range(T):
        for i in range(n):
            g_tilde[i] = (1.0 - kappa) * g_tilde[i] + kappa * g[t, i]
            o[t, i] = g_tilde[i]
    return out
