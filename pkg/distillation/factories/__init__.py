"""Transfer source factories package."""

from .transfer_source_factory import (
    METHODS,
    DistillationInputs,
    DistillationResult,
    TransferSource,
    TransferSourceFactory,
    TransferSourceFactoryProvider,
)

__all__ = [
    "METHODS",
    "DistillationInputs",
    "DistillationResult",
    "TransferSource",
    "TransferSourceFactory",
    "TransferSourceFactoryProvider",
]
