"""Exceptions and the global debug switch."""

from __future__ import annotations

import os


class ContractViolation(AssertionError):
    """A caller broke a precondition (unsorted input, overlapping ranges, ...)."""


class InvariantViolation(AssertionError):
    """A structural invariant of a finger structure failed to hold."""


DEBUG: bool = os.environ.get("PARFINGER_DEBUG", "") not in ("", "0")


def set_debug(flag: bool) -> None:
    """Enable or disable the expensive precondition and invariant checks."""
    global DEBUG
    DEBUG = bool(flag)


def debug_enabled() -> bool:
    return DEBUG
