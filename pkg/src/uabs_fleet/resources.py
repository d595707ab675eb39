"""Resource-unit dimensioning shared by the radio and RRM layers."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def compute_ru_budget(b_sys: float, delta_f: float, n_sub: int, delta_t: float, t_slot: float) -> int:
    """Number of RUs schedulable in one RRM period.

    ``floor(b_sys / (delta_f * n_sub) * delta_t / t_slot)``. A tiny relative
    slack absorbs float error so that exact products (e.g. 1000) are not
    floored to 999.
    """
    for name, val in (("b_sys", b_sys), ("delta_f", delta_f), ("n_sub", n_sub),
                      ("delta_t", delta_t), ("t_slot", t_slot)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val!r}")
    raw = (b_sys / (delta_f * n_sub)) * (delta_t / t_slot)
    return int(math.floor(raw * (1 + 1e-12)))


@dataclass(frozen=True)
class ResourceGrid:
    """Physical RU grid plus the (possibly coarser) budget the RRM schedules.

    When ``ru_budget`` is set below the physical budget, one scheduled RU
    aggregates ``physical_budget / ru_budget`` physical RUs, so per-RU rates
    are scaled up and total capacity is preserved.
    """

    b_sys: float = 7.2e6
    delta_f: float = 15e3
    n_sub: int = 12
    delta_t: float = 0.1
    t_slot: float = 1e-3
    ru_budget: int | None = 20

    @property
    def b_ru(self) -> float:
        return self.delta_f * self.n_sub

    @property
    def physical_budget(self) -> int:
        return compute_ru_budget(self.b_sys, self.delta_f, self.n_sub, self.delta_t, self.t_slot)

    @property
    def budget(self) -> int:
        return self.physical_budget if self.ru_budget is None else int(self.ru_budget)

    @property
    def aggregation(self) -> float:
        return self.physical_budget / self.budget

    def rate_per_ru(self, sinr_linear) -> np.ndarray:
        """bits/s carried by one scheduled RU, such that ``w * r * delta_t`` is bits."""
        se = np.log2(1.0 + np.asarray(sinr_linear, dtype=float))
        return self.b_ru * se * (self.t_slot / self.delta_t) * self.aggregation
