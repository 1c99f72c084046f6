import os

# one BLAS thread per process, set before numpy loads
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

from .errors import GnnAnatomyError  # noqa: E402
from .graph import Graph, GraphTask, NodeTask, validate  # noqa: E402
from .measures import build_report, fande, fore  # noqa: E402
from .stats import SolvableSet, solvable_set  # noqa: E402
from .training import RunMatrix, TrainConfig, run_harness  # noqa: E402

__version__ = "0.1.0"
