# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free, calloc, qsort
from libc.math cimport INFINITY

cnp.import_array()

cdef extern from *:
    ctypedef long long int128 "__int128"


cdef struct Entry:
    double value
    Py_ssize_t pos


cdef int _cmp_entry(const void *a, const void *b) noexcept nogil:
    # (value, position) order == numpy's stable argsort
    cdef const Entry *ea = <const Entry *> a
    cdef const Entry *eb = <const Entry *> b
    if ea.value < eb.value:
        return -1
    if ea.value > eb.value:
        return 1
    return (ea.pos > eb.pos) - (ea.pos < eb.pos)


cdef inline void _sorted_column(const double[:, ::1] X, cnp.int64_t[::1] idx, Py_ssize_t f,
                                Entry *buf, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n):
        buf[i].value = X[idx[i], f]
        buf[i].pos = i
    qsort(buf, n, sizeof(Entry), _cmp_entry)


cdef inline double _midpoint(double a, double b) noexcept nogil:
    cdef double m = 0.5 * (a + b)
    if m == b:
        return a
    return m


def best_split_gini(const double[:, ::1] X, const cnp.int64_t[::1] y, cnp.int64_t[::1] idx,
                    features, Py_ssize_t n_classes):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t best_f = -1
    cdef double best_thr = 0.0
    cdef long long best_num = 0, best_den = 1, num, den
    if n < 2:
        return (-1, 0.0, -INFINITY)
    cdef long long *left = <long long *> calloc(n_classes, sizeof(long long))
    cdef long long *total = <long long *> calloc(n_classes, sizeof(long long))
    cdef Entry *buf = <Entry *> malloc(n * sizeof(Entry))
    cdef Py_ssize_t i, k, c, f
    cdef long long sl, sr, cl, cr, nl, nr
    try:
        for i in range(n):
            total[y[idx[i]]] += 1
        for f in features:
            _sorted_column(X, idx, f, buf, n)
            if buf[0].value == buf[n - 1].value:
                continue
            for c in range(n_classes):
                left[c] = 0
            for k in range(n - 1):
                left[y[idx[buf[k].pos]]] += 1
                if not (buf[k].value < buf[k + 1].value):
                    continue
                sl = 0
                sr = 0
                for c in range(n_classes):
                    cl = left[c]
                    cr = total[c] - cl
                    sl += cl * cl
                    sr += cr * cr
                nl = k + 1
                nr = n - nl
                num = sl * nr + sr * nl
                den = nl * nr
                if best_f < 0 or <int128> num * best_den > <int128> best_num * den:
                    best_num = num
                    best_den = den
                    best_f = f
                    best_thr = _midpoint(buf[k].value, buf[k + 1].value)
    finally:
        free(left)
        free(total)
        free(buf)
    if best_f < 0:
        return (-1, 0.0, -INFINITY)
    return (int(best_f), best_thr, <double> best_num / <double> best_den)


def best_split_mse(const double[:, ::1] X, const double[::1] r, cnp.int64_t[::1] idx, features):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t best_f = -1
    cdef double best_thr = 0.0, best_score = -INFINITY
    if n < 2:
        return (-1, 0.0, best_score)
    cdef Entry *buf = <Entry *> malloc(n * sizeof(Entry))
    cdef double *cs = <double *> malloc(n * sizeof(double))
    cdef Py_ssize_t k, f
    cdef double acc, sl, sr, nl, score
    try:
        for f in features:
            _sorted_column(X, idx, f, buf, n)
            if buf[0].value == buf[n - 1].value:
                continue
            acc = 0.0
            for k in range(n):
                acc = acc + r[idx[buf[k].pos]]
                cs[k] = acc
            for k in range(n - 1):
                if not (buf[k].value < buf[k + 1].value):
                    continue
                sl = cs[k]
                sr = cs[n - 1] - sl
                nl = <double> (k + 1)
                score = sl * sl / nl + sr * sr / (<double> n - nl)
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_thr = _midpoint(buf[k].value, buf[k + 1].value)
    finally:
        free(buf)
        free(cs)
    return (int(best_f), best_thr, best_score)


def descend_paths(const double[:, ::1] X, const cnp.int64_t[::1] feature, const double[::1] threshold,
                  const cnp.int64_t[::1] left, const cnp.int64_t[::1] right, Py_ssize_t depth):
    cdef Py_ssize_t n = X.shape[0]
    out_arr = np.zeros((n, depth + 1), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, d
    cdef cnp.int64_t node, f
    with nogil:
        for i in range(n):
            node = 0
            for d in range(1, depth + 1):
                f = feature[node]
                if f >= 0:
                    if X[i, f] <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                out[i, d] = node
    return out_arr


def apply_leaves(const double[:, ::1] X, const cnp.int64_t[::1] feature, const double[::1] threshold,
                 const cnp.int64_t[::1] left, const cnp.int64_t[::1] right):
    cdef Py_ssize_t n = X.shape[0]
    out_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t i
    cdef cnp.int64_t node
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = node
    return out_arr
