"""Finger-search structures: sequential (FS0), batched (FS1), pipelined (FS2)
and multi-finger, with work/span instrumentation and a finger-bound oracle."""

from .errors import ContractViolation, InvariantViolation, set_debug
from .ops import Kind, Operation, OpResult

__all__ = [
    "ContractViolation",
    "InvariantViolation",
    "Kind",
    "Operation",
    "OpResult",
    "set_debug",
]
