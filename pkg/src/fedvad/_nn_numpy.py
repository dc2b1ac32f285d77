"""Pure-numpy kernels for the attention-gated MLP (fallback backend).

The attention gate on a width-n layer is h' = h * (n * softmax(Wa h + ba)):
the softmax is taken over the n features and scaled by n so a uniform
attention map is the identity gate (mean gate 1).

Both backends implement the same contract on float64 inputs:

    forward_batch(theta, d, X, mask1, mask2) -> scores (B,)
    loss_grad_batch(theta, d, X, y, mask1, mask2) -> (data_loss, grad)

``theta`` is the flat parameter vector, ``mask1``/``mask2`` are the dropout
gain matrices (all-ones outside train mode), and the returned loss/grad cover
the binary cross-entropy data term only; the L2 penalty is added by the
caller. Scores are clamped to [1e-7, 1 - 1e-7] inside the log, and the
gradient is exactly zero where the clamp is active.
"""

import numpy as np

from . import layout

SCORE_CLIP = 1e-7


def _unpack(theta, d):
    return layout.unpack(theta, d)


def _softmax_rows(v):
    e = np.exp(v - v.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _forward_parts(theta, d, X, mask1, mask2):
    W1, b1, Wa1, ba1, W2, b2, Wa2, ba2, Wo, bo = _unpack(theta, d)
    n1, n2 = float(layout.HIDDEN1), float(layout.HIDDEN2)
    U1 = X @ W1.T + b1
    H1d = np.maximum(U1, 0.0) * mask1
    A1 = _softmax_rows(H1d @ Wa1.T + ba1)
    G1 = H1d * A1 * n1
    U2 = G1 @ W2.T + b2
    H2d = np.maximum(U2, 0.0) * mask2
    A2 = _softmax_rows(H2d @ Wa2.T + ba2)
    G2 = H2d * A2 * n2
    S = G2 @ Wo[0] + bo[0]
    P = 1.0 / (1.0 + np.exp(-S))
    return U1, H1d, A1, G1, U2, H2d, A2, G2, P


def forward_batch(theta, d, X, mask1, mask2):
    return _forward_parts(theta, d, X, mask1, mask2)[-1]


def loss_grad_batch(theta, d, X, y, mask1, mask2):
    W1, b1, Wa1, ba1, W2, b2, Wa2, ba2, Wo, bo = _unpack(theta, d)
    U1, H1d, A1, G1, U2, H2d, A2, G2, P = _forward_parts(theta, d, X, mask1, mask2)
    n1, n2 = float(layout.HIDDEN1), float(layout.HIDDEN2)
    B = X.shape[0]

    lo, hi = SCORE_CLIP, 1.0 - SCORE_CLIP
    Pc = np.clip(P, lo, hi)
    loss = float(-(y * np.log(Pc) + (1.0 - y) * np.log(1.0 - Pc)).mean())

    inside = (P > lo) & (P < hi)
    dS = np.where(inside, (P - y) / B, 0.0)

    grad = np.zeros_like(theta)
    gW1, gb1, gWa1, gba1, gW2, gb2, gWa2, gba2, gWo, gbo = _unpack(grad, d)

    gWo[0, :] = dS @ G2
    gbo[0] = dS.sum()
    dG2 = np.outer(dS, Wo[0])

    dA2 = dG2 * H2d * n2
    dV2 = A2 * (dA2 - (dA2 * A2).sum(axis=1, keepdims=True))
    gWa2[:, :] = dV2.T @ H2d
    gba2[:] = dV2.sum(axis=0)
    dH2d = dG2 * A2 * n2 + dV2 @ Wa2
    dU2 = dH2d * mask2 * (U2 > 0.0)
    gW2[:, :] = dU2.T @ G1
    gb2[:] = dU2.sum(axis=0)
    dG1 = dU2 @ W2

    dA1 = dG1 * H1d * n1
    dV1 = A1 * (dA1 - (dA1 * A1).sum(axis=1, keepdims=True))
    gWa1[:, :] = dV1.T @ H1d
    gba1[:] = dV1.sum(axis=0)
    dH1d = dG1 * A1 * n1 + dV1 @ Wa1
    dU1 = dH1d * mask1 * (U1 > 0.0)
    gW1[:, :] = dU1.T @ X
    gb1[:] = dU1.sum(axis=0)

    return loss, grad
