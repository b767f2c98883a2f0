# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython dense MLP kernels; same contract as dense_py."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

IMPL = "cython"


cdef void _dense_relu(const double[:, ::1] X, const double[:, ::1] W, const double[::1] b,
                      double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], din = X.shape[1], dout = W.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(dout):
            acc = b[j]
            for k in range(din):
                acc += W[j, k] * X[i, k]
            out[i, j] = acc if acc > 0.0 else 0.0


cdef void _dense_linear(const double[:, ::1] X, const double[:, ::1] W, const double[::1] b,
                        double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], din = X.shape[1], dout = W.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(dout):
            acc = b[j]
            for k in range(din):
                acc += W[j, k] * X[i, k]
            out[i, j] = acc


def forward(trunk_ws, trunk_bs, head_w, head_b, X):
    cdef const double[:, ::1] h = np.ascontiguousarray(X, dtype=np.float64)
    acts = []
    cdef const double[:, ::1] W
    cdef const double[::1] b
    cdef double[:, ::1] nxt
    for Wa, ba in zip(trunk_ws, trunk_bs):
        W = np.ascontiguousarray(Wa, dtype=np.float64)
        b = np.ascontiguousarray(ba, dtype=np.float64)
        nxt_arr = np.empty((h.shape[0], W.shape[0]), dtype=np.float64)
        nxt = nxt_arr
        _dense_relu(h, W, b, nxt)
        acts.append(nxt_arr)
        h = nxt
    W = np.ascontiguousarray(head_w, dtype=np.float64)
    b = np.ascontiguousarray(head_b, dtype=np.float64)
    out_arr = np.empty((h.shape[0], W.shape[0]), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    _dense_linear(h, W, b, out)
    return out_arr, acts


cdef void _layer_backward(double[:, ::1] d, const double[:, ::1] prev, const double[:, ::1] act,
                          double[:, ::1] dW, double[::1] db) noexcept nogil:
    # d is modified in place: masked by ReLU derivative of `act`.
    # Row-outer accumulation keeps every inner loop on contiguous memory.
    cdef Py_ssize_t n = d.shape[0], dout = d.shape[1], din = prev.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double dv
    dW[:, :] = 0.0
    db[:] = 0.0
    for i in range(n):
        for j in range(dout):
            if act[i, j] <= 0.0:
                d[i, j] = 0.0
                continue
            dv = d[i, j]
            if dv == 0.0:
                continue
            db[j] += dv
            for k in range(din):
                dW[j, k] += dv * prev[i, k]


cdef void _propagate(const double[:, ::1] d, const double[:, ::1] W, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = d.shape[0], dout = d.shape[1], din = W.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double dv
    out[:, :] = 0.0
    for i in range(n):
        for j in range(dout):
            dv = d[i, j]
            if dv == 0.0:
                continue
            for k in range(din):
                out[i, k] += dv * W[j, k]


def backward(trunk_ws, head_w, X, acts, out_grad):
    cdef Py_ssize_t L = len(trunk_ws)
    Xc = np.ascontiguousarray(X, dtype=np.float64)
    og = np.ascontiguousarray(out_grad, dtype=np.float64)
    hw = np.ascontiguousarray(head_w, dtype=np.float64)
    last = np.ascontiguousarray(acts[L - 1], dtype=np.float64)

    head_dw = og.T @ last  # plain GEMM; no ReLU mask on the head input
    head_db = og.sum(axis=0)

    d_arr = np.empty((Xc.shape[0], hw.shape[1]), dtype=np.float64)
    cdef double[:, ::1] d = d_arr
    _propagate(og, hw, d)

    trunk_dws = [None] * L
    trunk_dbs = [None] * L
    cdef const double[:, ::1] prev_mv, act_mv, W_mv
    cdef double[:, ::1] dW_mv, nd
    cdef double[::1] db_mv
    cdef Py_ssize_t i
    for i in range(L - 1, -1, -1):
        prev = np.ascontiguousarray(acts[i - 1], dtype=np.float64) if i > 0 else Xc
        act = np.ascontiguousarray(acts[i], dtype=np.float64)
        dW = np.empty((act.shape[1], prev.shape[1]), dtype=np.float64)
        db = np.empty(act.shape[1], dtype=np.float64)
        prev_mv = prev
        act_mv = act
        dW_mv = dW
        db_mv = db
        _layer_backward(d, prev_mv, act_mv, dW_mv, db_mv)
        trunk_dws[i] = dW
        trunk_dbs[i] = db
        if i > 0:
            W_arr = np.ascontiguousarray(trunk_ws[i], dtype=np.float64)
            W_mv = W_arr
            nd_arr = np.empty((d_arr.shape[0], W_arr.shape[1]), dtype=np.float64)
            nd = nd_arr
            _propagate(d, W_mv, nd)
            d_arr = nd_arr
            d = nd
    return trunk_dws, trunk_dbs, head_dw, head_db
