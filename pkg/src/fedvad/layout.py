"""Flat parameter layout of the anomaly detector.

Fixed tensor order (row-major, little-endian float32 on disk/wire):

    W1  (512, d)    b1  (512,)     backbone FC 1
    Wa1 (512, 512)  ba1 (512,)     attention gate 1
    W2  (32, 512)   b2  (32,)      backbone FC 2
    Wa2 (32, 32)    ba2 (32,)      attention gate 2
    Wo  (1, 32)     bo  (1,)       output layer

Gradients share the same layout.
"""

from typing import List, Tuple

import numpy as np

HIDDEN1 = 512
HIDDEN2 = 32


def tensor_shapes(d: int) -> List[Tuple[int, ...]]:
    return [
        (HIDDEN1, d), (HIDDEN1,),
        (HIDDEN1, HIDDEN1), (HIDDEN1,),
        (HIDDEN2, HIDDEN1), (HIDDEN2,),
        (HIDDEN2, HIDDEN2), (HIDDEN2,),
        (1, HIDDEN2), (1,),
    ]


def param_count(d: int) -> int:
    return sum(int(np.prod(s)) for s in tensor_shapes(d))


def offsets(d: int) -> List[int]:
    offs = [0]
    for s in tensor_shapes(d):
        offs.append(offs[-1] + int(np.prod(s)))
    return offs


def unpack(theta: np.ndarray, d: int) -> List[np.ndarray]:
    """Reshape a flat vector into tensor views (no copies)."""
    offs = offsets(d)
    if theta.shape != (offs[-1],):
        raise ValueError(
            f"flat vector length {theta.shape} does not match layout for d={d}"
        )
    return [
        theta[offs[i]:offs[i + 1]].reshape(shape)
        for i, shape in enumerate(tensor_shapes(d))
    ]


def weight_slices(d: int) -> List[slice]:
    """Slices of the five weight matrices (bias vectors excluded)."""
    offs = offsets(d)
    return [slice(offs[i], offs[i + 1]) for i in (0, 2, 4, 6, 8)]


def dim_from_count(count: int) -> int:
    """Invert param_count; raises if count matches no feature dimension."""
    fixed = param_count(0)
    extra = count - fixed
    if extra < 0 or extra % HIDDEN1 != 0:
        raise ValueError(f"{count} is not a valid parameter count")
    return extra // HIDDEN1
