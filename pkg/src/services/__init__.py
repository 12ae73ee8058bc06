"""Services package: the operations behind each CLI subcommand."""
from .data_service import data_service
from .training_service import training_service
from .sampling_service import sampling_service
from .evaluation_service import evaluation_service
from .report_service import report_service
from .sweep_service import sweep_service

__all__ = [
    "data_service",
    "training_service",
    "sampling_service",
    "evaluation_service",
    "report_service",
    "sweep_service",
]
