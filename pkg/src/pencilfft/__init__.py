"""Parallel 3D real-to-complex FFT with 2D pencil decomposition."""

from .decomp import GlobalGrid, PencilLayout, ProcGrid, layout, partition, validate_procgrid
from .plan import Plan, PlanFlags, backward_global, create, forward_global
from .procgroup import Harness, SelfGroup, split

__all__ = [
    "GlobalGrid",
    "ProcGrid",
    "PencilLayout",
    "partition",
    "validate_procgrid",
    "layout",
    "Plan",
    "PlanFlags",
    "create",
    "forward_global",
    "backward_global",
    "Harness",
    "SelfGroup",
    "split",
]

__version__ = "0.1.0"
