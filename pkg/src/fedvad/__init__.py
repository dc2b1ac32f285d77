"""fedvad: federated unsupervised video anomaly detection on segment features.

Pipeline modules:

    dataset     manifest format, loading, synthetic benchmark generator
    stats       per-video [sigma, entropy] summaries
    vpl         video-level pseudo-labels (2-component GMM)
    spl         segment-level pseudo-labels (null mixture + window scan)
    detector    attention-gated MLP, analytic gradients, SGD
    federation  collaborative / centralized / local training protocols
    splits      random / event / scene participant partitions
    harness     frame-level AUC evaluation
    cli         the ``fedvad`` command

The detector's hot kernels run on a compiled extension when built, with a
pure-numpy fallback selected at import (see fedvad.backend).
"""

__version__ = "0.1.0"

import os as _os

# Threaded BLAS is counterproductive on the small per-batch matmuls of this
# workload and would tie results to the thread count; pin to one thread.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")
try:
    from threadpoolctl import threadpool_limits as _threadpool_limits

    _threadpool_limits(limits=1, user_api="blas")
except ImportError:
    pass

from .backend import active_backend  # noqa: F401
