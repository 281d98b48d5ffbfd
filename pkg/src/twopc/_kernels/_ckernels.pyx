# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the 64-bit ring. Semantics match _pykernels exactly."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, uint8_t, int32_t, int64_t

cnp.import_array()


def bit_decompose_u64(const uint64_t[::1] a):
    cdef Py_ssize_t n = a.shape[0], i, j
    out = np.empty((n, 64), dtype=np.uint8)
    cdef uint8_t[:, ::1] o = out
    cdef uint64_t v
    for i in range(n):
        v = a[i]
        for j in range(64):
            o[i, j] = <uint8_t>((v >> (63 - j)) & 1)
    return out


def matmul_u64(const uint64_t[:, ::1] a, const uint64_t[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], n = a.shape[1], v = b.shape[1]
    cdef Py_ssize_t i, k, j, kk, k_end
    cdef Py_ssize_t KB = 256
    out = np.zeros((m, v), dtype=np.uint64)
    cdef uint64_t[:, ::1] c = out
    cdef uint64_t aik
    with nogil:
        kk = 0
        while kk < n:
            k_end = kk + KB if kk + KB < n else n
            for i in range(m):
                for k in range(kk, k_end):
                    aik = a[i, k]
                    if aik == 0:
                        continue
                    for j in range(v):
                        c[i, j] += aik * b[k, j]
            kk = k_end
    return out


def cshares_u64(const uint64_t[::1] x, const uint8_t[:, ::1] rbits, int party, int p):
    cdef Py_ssize_t n = x.shape[0], i, j
    out = np.empty((n, 64), dtype=np.uint8)
    cdef uint8_t[:, ::1] o = out
    cdef int own = 1 if party == 0 else 0
    cdef int xb, rb, xr, prefix, c
    cdef uint64_t xv
    with nogil:
        for i in range(n):
            xv = x[i]
            prefix = 0
            for j in range(64):
                xb = <int>((xv >> (63 - j)) & 1)
                rb = rbits[i, j] % p
                c = (own * (1 + xb) - rb + prefix) % p
                if c < 0:
                    c += p
                o[i, j] = <uint8_t>c
                if xb:
                    xr = own - rb
                else:
                    xr = rb
                prefix = (prefix + xr) % p
                if prefix < 0:
                    prefix += p
    return out


def eq9_share_u64(const uint8_t[:, ::1] shares, int party, int p):
    cdef Py_ssize_t n = shares.shape[0], i, j
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef uint64_t acc
    cdef int64_t digit
    cdef int64_t off = p // 2 + party
    with nogil:
        for i in range(n):
            acc = 0
            for j in range(64):
                digit = <int64_t>shares[i, j] - off
                acc += (<uint64_t>digit) << (63 - j)
            o[i] = acc
    return out
