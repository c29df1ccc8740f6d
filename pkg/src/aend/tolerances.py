"""Numerical constants used across the library and its test suite.

Defined once so tests and guards never drift apart.
"""

# finite-difference gradient checks (fp64)
FD_STEP = 1e-5
GRAD_RTOL_OP = 1e-6        # single primitive ops
GRAD_RTOL_BLOCK = 1e-4     # composed blocks and losses

# forward-path guards
LAYER_NORM_EPS = 1e-5
LOG_MEL_FLOOR = 1e-10
BCE_CLAMP = 1e-7           # posteriors clipped to [BCE_CLAMP, 1 - BCE_CLAMP]

# exactness thresholds for structural properties
PERMUTATION_ATOL = 1e-10   # frame-order invariance of attention-based EDA
PRUNING_ATOL = 1e-12       # pruned vs unpruned posterior agreement
SOFTMAX_ROW_SUM_ATOL = 1e-12

# inference defaults
EXISTENCE_THRESHOLD = 0.5
MAX_DECODED_SPEAKERS = 8
FRAME_SECONDS = 0.1
