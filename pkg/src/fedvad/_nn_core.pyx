"""Compiled kernels for the attention-gated MLP (hot path).

Same contract and wiring as fedvad._nn_numpy (width-normalized softmax
gates): float64 in, float64 out, BCE data term only. Matrix products go
through BLAS dgemm; activations, gates and the backward bookkeeping run in
fused typed loops. Single-threaded by design so results are reproducible
run to run.
"""

import numpy as np

from libc.math cimport exp, log
from scipy.linalg.cython_blas cimport dgemm

cdef int H1 = 512
cdef int H2 = 32
cdef double SCORE_CLIP = 1e-7


cdef void _gemm(bint ta, double[:, ::1] A, bint tb, double[:, ::1] B,
                double[:, ::1] C, double beta) noexcept nogil:
    """C = op(A) @ op(B) + beta * C for row-major views, via Fortran dgemm
    on the transposed problem."""
    cdef int m = C.shape[0]
    cdef int n = C.shape[1]
    cdef int k = A.shape[0] if ta else A.shape[1]
    cdef char cta = b'N'
    cdef char ctb = b'N'
    cdef double one = 1.0
    if ta:
        cta = b'T'
    if tb:
        ctb = b'T'
    cdef int lda = A.shape[1]
    cdef int ldb = B.shape[1]
    cdef int ldc = n
    dgemm(&ctb, &cta, &n, &m, &k, &one, &B[0, 0], &ldb, &A[0, 0], &lda,
          &beta, &C[0, 0], &ldc)


cdef void _add_bias(double[:, ::1] M, double[::1] b) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            M[i, j] += b[j]


cdef void _relu_dropout(double[:, ::1] U, double[:, ::1] mask,
                        double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(U.shape[0]):
        for j in range(U.shape[1]):
            out[i, j] = (U[i, j] if U[i, j] > 0.0 else 0.0) * mask[i, j]


cdef void _softmax_rows(double[:, ::1] V, double[:, ::1] A) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double mx, s
    for i in range(V.shape[0]):
        mx = V[i, 0]
        for j in range(1, V.shape[1]):
            if V[i, j] > mx:
                mx = V[i, j]
        s = 0.0
        for j in range(V.shape[1]):
            A[i, j] = exp(V[i, j] - mx)
            s += A[i, j]
        for j in range(V.shape[1]):
            A[i, j] /= s


cdef void _gate(double[:, ::1] Hd, double[:, ::1] A, double scale,
                double[:, ::1] G) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(Hd.shape[0]):
        for j in range(Hd.shape[1]):
            G[i, j] = Hd[i, j] * A[i, j] * scale


cdef void _softmax_backward(double[:, ::1] dA, double[:, ::1] A,
                            double[:, ::1] dV) noexcept nogil:
    # dV = A * (dA - rowsum(dA * A))
    cdef Py_ssize_t i, j
    cdef double dot
    for i in range(dA.shape[0]):
        dot = 0.0
        for j in range(dA.shape[1]):
            dot += dA[i, j] * A[i, j]
        for j in range(dA.shape[1]):
            dV[i, j] = A[i, j] * (dA[i, j] - dot)


cdef void _colsum(double[:, ::1] M, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    for j in range(M.shape[1]):
        out[j] = 0.0
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            out[j] += M[i, j]


cdef class _Workspace:
    cdef object U1, H1d, A1, G1, U2, H2d, A2, G2, P
    cdef object tW1, tb1, tWa1, tba1, tW2, tb2, tWa2, tba2, tWo, tbo


cdef _Workspace _forward_core(theta, int d, X, mask1, mask2):
    cdef Py_ssize_t B = X.shape[0]
    ws = _Workspace()
    o = 0
    ws.tW1 = theta[o:o + H1 * d].reshape(H1, d); o += H1 * d
    ws.tb1 = theta[o:o + H1]; o += H1
    ws.tWa1 = theta[o:o + H1 * H1].reshape(H1, H1); o += H1 * H1
    ws.tba1 = theta[o:o + H1]; o += H1
    ws.tW2 = theta[o:o + H2 * H1].reshape(H2, H1); o += H2 * H1
    ws.tb2 = theta[o:o + H2]; o += H2
    ws.tWa2 = theta[o:o + H2 * H2].reshape(H2, H2); o += H2 * H2
    ws.tba2 = theta[o:o + H2]; o += H2
    ws.tWo = theta[o:o + H2].reshape(1, H2); o += H2
    ws.tbo = theta[o:o + 1]

    ws.U1 = np.empty((B, H1))
    ws.H1d = np.empty((B, H1))
    ws.A1 = np.empty((B, H1))
    ws.G1 = np.empty((B, H1))
    ws.U2 = np.empty((B, H2))
    ws.H2d = np.empty((B, H2))
    ws.A2 = np.empty((B, H2))
    ws.G2 = np.empty((B, H2))
    ws.P = np.empty(B)

    cdef double[:, ::1] vX = X
    cdef double[:, ::1] vm1 = mask1
    cdef double[:, ::1] vm2 = mask2
    cdef double[:, ::1] W1 = ws.tW1
    cdef double[::1] b1 = ws.tb1
    cdef double[:, ::1] Wa1 = ws.tWa1
    cdef double[::1] ba1 = ws.tba1
    cdef double[:, ::1] W2 = ws.tW2
    cdef double[::1] b2 = ws.tb2
    cdef double[:, ::1] Wa2 = ws.tWa2
    cdef double[::1] ba2 = ws.tba2
    cdef double[:, ::1] Wo = ws.tWo
    cdef double[::1] bo = ws.tbo
    cdef double[:, ::1] U1 = ws.U1
    cdef double[:, ::1] H1d = ws.H1d
    cdef double[:, ::1] A1 = ws.A1
    cdef double[:, ::1] G1 = ws.G1
    cdef double[:, ::1] U2 = ws.U2
    cdef double[:, ::1] H2d = ws.H2d
    cdef double[:, ::1] A2 = ws.A2
    cdef double[:, ::1] G2 = ws.G2
    cdef double[::1] P = ws.P
    cdef Py_ssize_t i, j
    cdef double s

    scratch1 = np.empty((B, H1))
    scratch2 = np.empty((B, H2))
    cdef double[:, ::1] V1 = scratch1
    cdef double[:, ::1] V2 = scratch2

    _gemm(False, vX, True, W1, U1, 0.0)
    _add_bias(U1, b1)
    _relu_dropout(U1, vm1, H1d)
    _gemm(False, H1d, True, Wa1, V1, 0.0)
    _add_bias(V1, ba1)
    _softmax_rows(V1, A1)
    _gate(H1d, A1, <double>H1, G1)

    _gemm(False, G1, True, W2, U2, 0.0)
    _add_bias(U2, b2)
    _relu_dropout(U2, vm2, H2d)
    _gemm(False, H2d, True, Wa2, V2, 0.0)
    _add_bias(V2, ba2)
    _softmax_rows(V2, A2)
    _gate(H2d, A2, <double>H2, G2)

    for i in range(B):
        s = bo[0]
        for j in range(H2):
            s += G2[i, j] * Wo[0, j]
        P[i] = 1.0 / (1.0 + exp(-s))
    return ws


def forward_batch(theta, int d, X, mask1, mask2):
    ws = _forward_core(theta, d, X, mask1, mask2)
    return ws.P


def loss_grad_batch(theta, int d, X, y, mask1, mask2):
    ws = _forward_core(theta, d, X, mask1, mask2)
    cdef Py_ssize_t B = X.shape[0]
    grad = np.zeros(theta.shape[0])

    o = 0
    gW1_np = grad[o:o + H1 * d].reshape(H1, d); o += H1 * d
    gb1_np = grad[o:o + H1]; o += H1
    gWa1_np = grad[o:o + H1 * H1].reshape(H1, H1); o += H1 * H1
    gba1_np = grad[o:o + H1]; o += H1
    gW2_np = grad[o:o + H2 * H1].reshape(H2, H1); o += H2 * H1
    gb2_np = grad[o:o + H2]; o += H2
    gWa2_np = grad[o:o + H2 * H2].reshape(H2, H2); o += H2 * H2
    gba2_np = grad[o:o + H2]; o += H2
    gWo_np = grad[o:o + H2].reshape(1, H2); o += H2
    gbo_np = grad[o:o + 1]

    dS_np = np.empty((1, B))
    dG2_np = np.empty((B, H2))
    dV2_np = np.empty((B, H2))
    dH2d_np = np.empty((B, H2))
    dU2_np = np.empty((B, H2))
    dG1_np = np.empty((B, H1))
    dV1_np = np.empty((B, H1))
    dH1d_np = np.empty((B, H1))
    dU1_np = np.empty((B, H1))
    scratch2_np = np.empty((B, H2))
    scratch1_np = np.empty((B, H1))

    cdef double[:, ::1] vX = X
    cdef double[::1] vy = y
    cdef double[:, ::1] vm1 = mask1
    cdef double[:, ::1] vm2 = mask2
    cdef double[::1] P = ws.P
    cdef double[:, ::1] U1 = ws.U1
    cdef double[:, ::1] H1d = ws.H1d
    cdef double[:, ::1] A1 = ws.A1
    cdef double[:, ::1] G1 = ws.G1
    cdef double[:, ::1] U2 = ws.U2
    cdef double[:, ::1] H2d = ws.H2d
    cdef double[:, ::1] A2 = ws.A2
    cdef double[:, ::1] G2 = ws.G2
    cdef double[:, ::1] Wa1 = ws.tWa1
    cdef double[:, ::1] W2 = ws.tW2
    cdef double[:, ::1] Wa2 = ws.tWa2
    cdef double[:, ::1] Wo = ws.tWo

    cdef double[:, ::1] dS = dS_np
    cdef double[:, ::1] dG2 = dG2_np
    cdef double[:, ::1] dV2 = dV2_np
    cdef double[:, ::1] dH2d = dH2d_np
    cdef double[:, ::1] dU2 = dU2_np
    cdef double[:, ::1] dG1 = dG1_np
    cdef double[:, ::1] dV1 = dV1_np
    cdef double[:, ::1] dH1d = dH1d_np
    cdef double[:, ::1] dU1 = dU1_np
    cdef double[:, ::1] dA2 = scratch2_np
    cdef double[:, ::1] dA1 = scratch1_np
    cdef double[:, ::1] gW1 = gW1_np
    cdef double[::1] gb1 = gb1_np
    cdef double[:, ::1] gWa1 = gWa1_np
    cdef double[::1] gba1 = gba1_np
    cdef double[:, ::1] gW2 = gW2_np
    cdef double[::1] gb2 = gb2_np
    cdef double[:, ::1] gWa2 = gWa2_np
    cdef double[::1] gba2 = gba2_np
    cdef double[:, ::1] gWo = gWo_np
    cdef double[::1] gbo = gbo_np

    cdef Py_ssize_t i, j
    cdef double p, pc, loss, lo, hi, ds
    lo = SCORE_CLIP
    hi = 1.0 - SCORE_CLIP
    loss = 0.0
    for i in range(B):
        p = P[i]
        pc = p
        if pc < lo:
            pc = lo
        elif pc > hi:
            pc = hi
        loss -= vy[i] * log(pc) + (1.0 - vy[i]) * log(1.0 - pc)
        # clamp derivative is zero outside the open interval
        if p > lo and p < hi:
            ds = (p - vy[i]) / B
        else:
            ds = 0.0
        dS[0, i] = ds
    loss /= B

    # Output layer.
    _gemm(False, dS, False, G2, gWo, 0.0)
    gbo[0] = 0.0
    for i in range(B):
        gbo[0] += dS[0, i]
        for j in range(H2):
            dG2[i, j] = dS[0, i] * Wo[0, j]

    # Attention gate 2.
    _gate(dG2, H2d, <double>H2, dA2)
    _softmax_backward(dA2, A2, dV2)
    _gemm(True, dV2, False, H2d, gWa2, 0.0)
    _colsum(dV2, gba2)
    _gate(dG2, A2, <double>H2, dH2d)
    _gemm(False, dV2, False, Wa2, dH2d, 1.0)
    for i in range(B):
        for j in range(H2):
            dU2[i, j] = dH2d[i, j] * vm2[i, j] if U2[i, j] > 0.0 else 0.0

    # Backbone FC 2.
    _gemm(True, dU2, False, G1, gW2, 0.0)
    _colsum(dU2, gb2)
    _gemm(False, dU2, False, W2, dG1, 0.0)

    # Attention gate 1.
    _gate(dG1, H1d, <double>H1, dA1)
    _softmax_backward(dA1, A1, dV1)
    _gemm(True, dV1, False, H1d, gWa1, 0.0)
    _colsum(dV1, gba1)
    _gate(dG1, A1, <double>H1, dH1d)
    _gemm(False, dV1, False, Wa1, dH1d, 1.0)
    for i in range(B):
        for j in range(H1):
            dU1[i, j] = dH1d[i, j] * vm1[i, j] if U1[i, j] > 0.0 else 0.0

    # Backbone FC 1.
    _gemm(True, dU1, False, vX, gW1, 0.0)
    _colsum(dU1, gb1)

    return loss, grad
