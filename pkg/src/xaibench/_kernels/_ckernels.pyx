# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_fallback.py``.

Signatures and results match the fallback exactly; see that module for the
contract of each function.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.math cimport INFINITY, NAN

cnp.import_array()

cdef double TIE_TOL = 1e-12


def tree_apply(const cnp.int64_t[::1] left, const cnp.int64_t[::1] right,
               const cnp.int64_t[::1] feature, const double[::1] threshold, X):
    cdef const double[:, :] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    cdef Py_ssize_t i
    cdef cnp.int64_t node
    with nogil:
        for i in range(n):
            node = 0
            while left[node] != -1:
                if Xv[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            o[i] = node
    return out


def best_splits(X, y, features):
    cdef const double[:, :] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const cnp.int64_t[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    cdef Py_ssize_t n = yv.shape[0]
    cdef Py_ssize_t n_feat = len(features)
    dec_arr = np.zeros(n_feat)
    thr_arr = np.full(n_feat, np.nan)
    if n < 2:
        return dec_arr, thr_arr
    cdef double[::1] dec = dec_arr
    cdef double[::1] thr = thr_arr
    cdef cnp.int64_t c1 = 0
    cdef Py_ssize_t i, j, best_i, f
    for i in range(n):
        c1 += yv[i]
    cdef cnp.int64_t c0 = n - c1
    cdef double parent_w = n - <double>(c1 * c1 + c0 * c0) / n
    cdef double[::1] d = np.empty(n - 1)
    cdef double[::1] v = np.empty(n)
    cdef cnp.int64_t[::1] ys = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] order
    cdef cnp.int64_t cl1, nl, nr, cl0, cr1, cr0
    cdef double gl, gr, best, mid
    cdef bint any_valid
    for j in range(n_feat):
        f = features[j]
        order = np.argsort(Xv[:, f], kind="stable").astype(np.int64)
        for i in range(n):
            v[i] = Xv[order[i], f]
            ys[i] = yv[order[i]]
        cl1 = 0
        any_valid = False
        best = -INFINITY
        for i in range(n - 1):
            cl1 += ys[i]
            nl = i + 1
            nr = n - nl
            cl0 = nl - cl1
            cr1 = c1 - cl1
            cr0 = nr - cr1
            gl = nl - <double>(cl1 * cl1 + cl0 * cl0) / nl
            gr = nr - <double>(cr1 * cr1 + cr0 * cr0) / nr
            if v[i] < v[i + 1]:
                d[i] = (parent_w - (gl + gr)) / n
                any_valid = True
                if d[i] > best:
                    best = d[i]
            else:
                d[i] = -INFINITY
        if not any_valid:
            continue
        best_i = 0
        for i in range(n - 1):
            if d[i] >= best - TIE_TOL:
                best_i = i
                break
        mid = (v[best_i] + v[best_i + 1]) / 2.0
        if mid == v[best_i + 1]:
            mid = v[best_i]
        dec[j] = d[best_i]
        thr[j] = mid
    return dec_arr, thr_arr


cdef struct ShapCtx:
    const cnp.int64_t* left
    const cnp.int64_t* right
    const cnp.int64_t* feature
    const double* threshold
    const double* value
    const double* x
    const double* r
    const double* w
    Py_ssize_t wstride
    int* state
    cnp.int64_t* sx
    cnp.int64_t* sr
    Py_ssize_t a
    Py_ssize_t b
    double* phi


cdef void _walk(ShapCtx* c, cnp.int64_t node) noexcept nogil:
    cdef cnp.int64_t f, nl, nr
    cdef double t, coef
    cdef bint x_left, r_left
    cdef Py_ssize_t k
    cdef int s
    if c.left[node] == -1:
        if c.a:
            coef = c.w[(c.a - 1) * c.wstride + c.b] * c.value[node]
            for k in range(c.a):
                c.phi[c.sx[k]] += coef
        if c.b:
            coef = c.w[c.a * c.wstride + c.b - 1] * c.value[node]
            for k in range(c.b):
                c.phi[c.sr[k]] -= coef
        return
    f = c.feature[node]
    t = c.threshold[node]
    nl = c.left[node]
    nr = c.right[node]
    x_left = c.x[f] <= t
    r_left = c.r[f] <= t
    s = c.state[f]
    if s == 1:
        _walk(c, nl if x_left else nr)
    elif s == 2:
        _walk(c, nl if r_left else nr)
    elif x_left == r_left:
        _walk(c, nl if x_left else nr)
    else:
        c.state[f] = 1
        c.sx[c.a] = f
        c.a += 1
        _walk(c, nl if x_left else nr)
        c.a -= 1
        c.state[f] = 2
        c.sr[c.b] = f
        c.b += 1
        _walk(c, nl if r_left else nr)
        c.b -= 1
        c.state[f] = 0


def tree_shap_interventional(const cnp.int64_t[::1] left, const cnp.int64_t[::1] right,
                             const cnp.int64_t[::1] feature, const double[::1] threshold,
                             const double[::1] value, x, background, weights):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] bg = np.ascontiguousarray(background, dtype=np.float64)
    cdef const double[:, ::1] wv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t m = xv.shape[0]
    cdef Py_ssize_t n_bg = bg.shape[0]
    phi_arr = np.zeros(m)
    cdef double[::1] phi = phi_arr
    if n_bg == 0:
        return phi_arr
    cdef ShapCtx c
    cdef Py_ssize_t i, k
    c.left = &left[0]
    c.right = &right[0]
    c.feature = &feature[0]
    c.threshold = &threshold[0]
    c.value = &value[0]
    c.x = &xv[0]
    c.w = &wv[0, 0]
    c.wstride = wv.shape[1]
    c.phi = &phi[0]
    c.state = <int*> malloc(m * sizeof(int))
    c.sx = <cnp.int64_t*> malloc(m * sizeof(cnp.int64_t))
    c.sr = <cnp.int64_t*> malloc(m * sizeof(cnp.int64_t))
    if c.state == NULL or c.sx == NULL or c.sr == NULL:
        free(c.state)
        free(c.sx)
        free(c.sr)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n_bg):
                for k in range(m):
                    c.state[k] = 0
                c.a = 0
                c.b = 0
                c.r = &bg[i, 0]
                _walk(&c, 0)
            for k in range(m):
                phi[k] /= n_bg
    finally:
        free(c.state)
        free(c.sx)
        free(c.sr)
    return phi_arr
