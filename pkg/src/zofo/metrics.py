from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class MetricSeries:
    """Per-update convergence metrics of one closed-loop run.

    ``plant_step[i]`` is the number of plant steps consumed before update
    ``update_index[i]`` started. ``optimality_gap`` is NaN when the minimum of
    the reduced objective is unknown.
    """

    method: str
    seed: int
    update_index: np.ndarray
    plant_step: np.ndarray
    grad_norm_sq: np.ndarray
    optimality_gap: np.ndarray
    inputs: np.ndarray | None = None
    final_u: np.ndarray | None = None
    params: dict = field(default_factory=dict)
    mu_hat: float | None = None
    m_phi: float | None = None
    n_updates: int | None = None
    plant_steps_used: int | None = None

    def __len__(self):
        return len(self.update_index)

    def same_data(self, other: "MetricSeries") -> bool:
        """Equality of the exported columns (the CSV payload)."""
        return (
            self.method == other.method
            and self.seed == other.seed
            and np.array_equal(self.update_index, other.update_index)
            and np.array_equal(self.plant_step, other.plant_step)
            and np.array_equal(self.grad_norm_sq, other.grad_norm_sq, equal_nan=True)
            and np.array_equal(self.optimality_gap, other.optimality_gap, equal_nan=True)
        )
