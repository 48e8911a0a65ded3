"""Exceptions raised by the network engine."""

from __future__ import annotations


class ShapeMismatchError(ValueError):
    """A tensor does not have the shape the network expects."""


class LabelRangeError(ValueError):
    """A class label lies outside ``[0, classes)``."""


class UnknownNetworkError(ValueError):
    """A network name is not one of the built-in specs."""


class NonFiniteGradientError(FloatingPointError):
    """A loss or gradient contains NaN or Inf."""

    def __init__(self, where: str) -> None:
        super().__init__(f"non-finite values in {where}")
        self.where = where
