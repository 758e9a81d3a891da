"""Compensated summation helpers."""

from __future__ import annotations

import math
from typing import Iterable


class NeumaierSum:
    """Running sum with error recycling (Kahan-Babuska / Neumaier).

    Same algorithm as the simulation kernel uses, so totals accumulated in
    pure Python and in compiled code agree bit for bit.
    """

    __slots__ = ("total", "comp")

    def __init__(self) -> None:
        self.total = 0.0
        self.comp = 0.0

    def add(self, x: float) -> None:
        t = self.total + x
        if abs(self.total) >= abs(x):
            self.comp += (self.total - t) + x
        else:
            self.comp += (x - t) + self.total
        self.total = t

    @property
    def value(self) -> float:
        return self.total + self.comp


def exact_sum(values: Iterable[float]) -> float:
    """Correctly rounded sum of ``values``."""
    return math.fsum(values)
