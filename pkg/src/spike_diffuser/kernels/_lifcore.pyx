# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled LIF recurrence kernels.

Same contract as the numpy backend in _numpy.py: [T, N] float64
C-contiguous arrays, forward returns (spikes, u_pre), backward treats the
reset gate as a constant and uses the piecewise-linear spike surrogate.
Loops walk rows (time outer, neuron inner) so large batches stream
through cache; the membrane and spike carry live in [N] work buffers.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def lif_forward(cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] x,
                double k, double v_th):
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t N = x.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] spikes = np.empty((T, N))
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] u_pre = np.empty((T, N))
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] u = np.zeros(N)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] s = np.zeros(N)
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] sv = spikes
    cdef double[:, ::1] uv = u_pre
    cdef double[::1] uvec = u
    cdef double[::1] svec = s
    cdef Py_ssize_t t, n
    cdef double un
    for t in range(T):
        for n in range(N):
            un = k * (uvec[n] * (1.0 - svec[n])) + xv[t, n]
            uv[t, n] = un
            uvec[n] = un
            if un >= v_th:
                sv[t, n] = 1.0
                svec[n] = 1.0
            else:
                sv[t, n] = 0.0
                svec[n] = 0.0
    return spikes, u_pre


def lif_backward(cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] grad_spikes,
                 cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] spikes,
                 cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] u_pre,
                 double k, double v_th, double eps):
    cdef Py_ssize_t T = grad_spikes.shape[0]
    cdef Py_ssize_t N = grad_spikes.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] grad_x = np.empty((T, N))
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] carry = np.zeros(N)
    cdef double[:, ::1] gv = grad_spikes
    cdef double[:, ::1] sv = spikes
    cdef double[:, ::1] uv = u_pre
    cdef double[:, ::1] ov = grad_x
    cdef double[::1] cv = carry
    cdef double half = 0.5 * eps
    cdef double window = 1.0 / eps
    cdef Py_ssize_t t, n
    cdef double d, du
    for t in range(T - 1, -1, -1):
        for n in range(N):
            d = uv[t, n] - v_th
            du = cv[n]
            if -window < d < window:
                du += gv[t, n] * half
            ov[t, n] = du
            if t > 0:
                cv[n] = du * k * (1.0 - sv[t - 1, n])
    return grad_x
