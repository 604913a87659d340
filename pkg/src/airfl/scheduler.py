"""Worker scheduling policies and the energy-deficit virtual queue.

Three policies decide, worker by worker, whether to transmit this round:

* AlwaysOn -- schedule everyone (the no-budget upper bound).
* Myopic   -- schedule iff this round's energy fits the per-round budget,
  E <= budget.
* Dynamic  -- schedule iff the deficit-weighted energy clears the
  utility threshold, q*E <= V*gamma(t)/N. The virtual queue q tracks how
  far past the budget the worker has spent and is floored at queue_floor:
  q <- max(q + beta*E - budget, queue_floor).

All comparisons are non-strict: exact threshold ties schedule the worker.
Decisions depend only on the worker's own state, so they can be evaluated
in any order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, GammaPiece, gamma_value


@dataclass(frozen=True)
class Decision:
    beta: int                    # 1 = scheduled
    energy_if_scheduled: float
    threshold: float


def gamma(t: int, schedule: tuple[GammaPiece, ...], num_rounds: int | None = None) -> float:
    """Round weight gamma(t); errors outside [0, num_rounds) when given."""
    if num_rounds is not None and not (0 <= t < num_rounds):
        raise ValueError(f"round index {t} out of range [0, {num_rounds})")
    return gamma_value(schedule, t)


def myopic_decide(energy: float, budget: float) -> Decision:
    return Decision(beta=int(energy <= budget), energy_if_scheduled=energy,
                    threshold=budget)


def dynamic_decide(queue: float, energy: float, weight: float, gamma_t: float,
                   num_workers: int) -> Decision:
    threshold = weight * gamma_t / num_workers
    return Decision(beta=int(queue * energy <= threshold),
                    energy_if_scheduled=energy, threshold=threshold)


def queue_update(queue: float, beta: int, energy: float, budget: float,
                 queue_floor: float) -> float:
    return max(queue + beta * energy - budget, queue_floor)


def decide_all(policy: str, queues: np.ndarray, energies: np.ndarray, t: int,
               cfg: ExperimentConfig) -> list[Decision]:
    """Apply the per-worker rule independently to every worker."""
    n = cfg.num_workers
    if len(queues) != n or len(energies) != n:
        raise ValueError("queues/energies length must equal num_workers")
    budgets = cfg.energy_budgets()
    if policy == "AlwaysOn":
        return [Decision(beta=1, energy_if_scheduled=float(energies[i]), threshold=np.inf)
                for i in range(n)]
    if policy == "Myopic":
        return [myopic_decide(float(energies[i]), float(budgets[i])) for i in range(n)]
    if policy == "Dynamic":
        g = gamma(t, cfg.gamma_schedule, cfg.num_rounds)
        return [dynamic_decide(float(queues[i]), float(energies[i]),
                               cfg.scheduling_weight, g, n) for i in range(n)]
    raise ValueError(f"unknown policy {policy!r}")
