"""Generalized information criterion."""

from __future__ import annotations

import math


def gic_penalty(n: int, p: int, q: int, s: int, r: int) -> float:
    """Complexity term q (s + r) log(log n) sqrt(log(p) / n)."""
    if n < 3:
        raise ValueError(f"GIC penalty needs n >= 3 (log log n > 0), got n = {n}")
    if p < 2:
        raise ValueError(f"GIC penalty needs p >= 2 (log p > 0), got p = {p}")
    if s < 0 or r < 0:
        raise ValueError("s and r must be non-negative")
    return q * (s + r) * math.log(math.log(n)) * math.sqrt(math.log(p) / n)


def gic(loss: float, n: int, p: int, q: int, s: int, r: int) -> float:
    """Loss plus the GIC complexity penalty; ``loss`` is (2n)^-1 ||Y - XC||_F^2."""
    return loss + gic_penalty(n, p, q, s, r)
