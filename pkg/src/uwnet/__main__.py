import os
import sys

# Pin BLAS pools to one thread before numpy loads so latency numbers measure
# the single-threaded path.
for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

from .cli import main

sys.exit(main())
