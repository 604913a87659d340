"""Offline optimum and performance-bound verification for the dynamic policy.

The genie solves each worker's schedule exactly: maximize the
gamma-weighted number of scheduled rounds subject to the total-energy cap
T * budget, by exhaustive enumeration of all 2^T schedules (practical for
the short horizons used in verification). Against that optimum, the
dynamic policy's realized utility and energy admit additive deviation
bounds driven by the worst-case per-round energy deficit alpha and the
trade-off weight V:

    utility:  u_dagger <= u_star + (T / 2V) * sum_n alpha_n^2
    energy:   sum_t beta_n(t) E_n(t) <= T*budget_n
                 + sqrt(T^2 alpha_n^2 + 2 V T u_star_n)   for every n

Both are exact inequalities when the queue floor is zero, which the
checkers require. Per-slot Lyapunov quantities (queue, drift, deficit)
are exposed for finer-grained auditing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import gamma_value
from .orchestrator import ExperimentResult

MAX_EXHAUSTIVE_ROUNDS = 24
_CHUNK_BITS = 20


@dataclass(frozen=True)
class WorkerTrace:
    """One worker's view of a finished run: required energies and round weights."""

    energies: np.ndarray         # (T,) required transmit energy per round
    gammas: np.ndarray           # (T,) round weights
    energy_budget: float
    num_workers: int             # N of the run; enters the utility normalization

    @property
    def num_rounds(self) -> int:
        return len(self.energies)


@dataclass(frozen=True)
class GenieSolution:
    beta: np.ndarray             # (T,) 0/1 optimal schedule
    utility: float               # optimal per-worker cost (1/T) sum gamma*(1-beta)/N
    total_energy: float


@dataclass(frozen=True)
class BoundReport:
    scheduling_weight: float
    u_dagger: float              # realized average weighted non-scheduling cost
    u_star: float                # offline-optimal cost, summed over workers
    u_star_per_worker: np.ndarray
    alphas: np.ndarray           # (N,) worst-case per-round energy deficit bound
    utility_rhs: float
    utility_slack: float         # utility_rhs - u_dagger, >= 0 when the bound holds
    energy_used: np.ndarray      # (N,) realized total transmit energy
    energy_rhs: np.ndarray       # (N,)
    energy_slack: np.ndarray     # (N,)
    utility_ok: bool
    energy_ok: bool

    @property
    def satisfied(self) -> bool:
        return self.utility_ok and self.energy_ok

    def to_dict(self) -> dict:
        return {
            "scheduling_weight": self.scheduling_weight,
            "u_dagger": self.u_dagger,
            "u_star": self.u_star,
            "u_star_per_worker": self.u_star_per_worker.tolist(),
            "alphas": self.alphas.tolist(),
            "utility_rhs": self.utility_rhs,
            "utility_slack": self.utility_slack,
            "energy_used": self.energy_used.tolist(),
            "energy_rhs": self.energy_rhs.tolist(),
            "energy_slack": self.energy_slack.tolist(),
            "utility_ok": self.utility_ok,
            "energy_ok": self.energy_ok,
            "satisfied": self.satisfied,
        }


def genie_optimal(trace: WorkerTrace) -> GenieSolution:
    """Exact maximizer of sum_t gamma(t)*beta(t) subject to sum_t beta(t)E(t) <= T*budget.

    Enumerates every schedule; ties resolve to the schedule whose bit
    mask (round t at bit t) is the smallest integer, i.e. the first
    maximizer in ascending-mask order.
    """
    T = trace.num_rounds
    if T > MAX_EXHAUSTIVE_ROUNDS:
        raise ValueError(
            f"horizon {T} too large for exhaustive enumeration (max {MAX_EXHAUSTIVE_ROUNDS})"
        )
    cap = T * trace.energy_budget
    E = trace.energies
    G = trace.gammas

    best_value = -np.inf
    best_mask = 0
    chunk = 1 << min(T, _CHUNK_BITS)
    for base in range(0, 1 << T, chunk):
        masks = np.arange(base, base + chunk, dtype=np.uint64)
        energy = np.zeros(chunk)
        value = np.zeros(chunk)
        for t in range(T):
            bit = ((masks >> np.uint64(t)) & np.uint64(1)).astype(np.float64)
            energy += E[t] * bit
            value += G[t] * bit
        value[energy > cap] = -np.inf
        i = int(np.argmax(value))            # first occurrence = smallest mask
        if value[i] > best_value:
            best_value = value[i]
            best_mask = base + i

    beta = np.array([(best_mask >> t) & 1 for t in range(T)], dtype=np.int8)
    utility = float((G.sum() - best_value) / (T * trace.num_workers))
    return GenieSolution(beta=beta, utility=utility,
                         total_energy=float(np.dot(beta, E)))


def alpha_bound(trace: WorkerTrace) -> float:
    """Worst-case |beta*E - budget| over rounds and over both schedule choices.

    Per round the deficit is E - budget if scheduled and -budget if not,
    so the dominating magnitude is max(E - budget, budget).
    """
    return float(np.maximum(trace.energies - trace.energy_budget,
                            trace.energy_budget).max())


def simulate_dynamic_schedule(energies: np.ndarray, gammas: np.ndarray,
                              budgets: np.ndarray, weight: float,
                              queue_floor: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Run the dynamic decision rule on a raw (T, N) energy trace.

    Returns (betas (T, N), queues (T+1, N)) where queues[t] is the
    pre-decision queue of round t and queues[T] the final value.
    """
    energies = np.atleast_2d(energies)
    T, n = energies.shape
    betas = np.zeros((T, n), dtype=np.int8)
    queues = np.zeros((T + 1, n))
    queues[0] = queue_floor
    for t in range(T):
        threshold = weight * gammas[t] / n
        betas[t] = queues[t] * energies[t] <= threshold
        deficit = betas[t] * energies[t] - budgets
        queues[t + 1] = np.maximum(queues[t] + deficit, queue_floor)
    return betas, queues


def _bound_report(energies: np.ndarray, betas: np.ndarray, gammas: np.ndarray,
                  budgets: np.ndarray, weight: float, num_workers: int) -> BoundReport:
    T = energies.shape[0]
    fractions = betas.sum(axis=1) / num_workers
    u_dagger = float(np.mean(gammas * (1.0 - fractions)))

    u_star_per_worker = np.zeros(num_workers)
    alphas = np.zeros(num_workers)
    for w in range(num_workers):
        trace = WorkerTrace(energies=energies[:, w], gammas=gammas,
                            energy_budget=float(budgets[w]), num_workers=num_workers)
        u_star_per_worker[w] = genie_optimal(trace).utility
        alphas[w] = alpha_bound(trace)

    u_star = float(u_star_per_worker.sum())
    utility_rhs = u_star + T / (2.0 * weight) * float(np.sum(alphas ** 2))
    energy_used = (betas * energies).sum(axis=0)
    energy_rhs = T * budgets + np.sqrt(T ** 2 * alphas ** 2
                                       + 2.0 * weight * T * u_star_per_worker)
    return BoundReport(
        scheduling_weight=weight,
        u_dagger=u_dagger,
        u_star=u_star,
        u_star_per_worker=u_star_per_worker,
        alphas=alphas,
        utility_rhs=utility_rhs,
        utility_slack=utility_rhs - u_dagger,
        energy_used=energy_used,
        energy_rhs=energy_rhs,
        energy_slack=energy_rhs - energy_used,
        utility_ok=bool(u_dagger <= utility_rhs),
        energy_ok=bool(np.all(energy_used <= energy_rhs)),
    )


def verify_trace_instance(energies: np.ndarray, gammas: np.ndarray,
                          budgets: np.ndarray, weight: float) -> BoundReport:
    """Run the dynamic rule on a raw energy trace (queue floor 0) and check both bounds."""
    betas, _ = simulate_dynamic_schedule(energies, gammas, budgets, weight,
                                         queue_floor=0.0)
    return _bound_report(np.atleast_2d(energies), betas, gammas,
                         np.atleast_1d(budgets), weight, np.atleast_2d(energies).shape[1])


def run_gammas(result: ExperimentResult) -> np.ndarray:
    cfg = result.config
    return np.array([gamma_value(cfg.gamma_schedule, t) for t in range(cfg.num_rounds)])


def worker_traces(result: ExperimentResult) -> list[WorkerTrace]:
    gammas = run_gammas(result)
    energies = result.energy_matrix()
    budgets = result.config.energy_budgets()
    return [
        WorkerTrace(energies=energies[:, w], gammas=gammas,
                    energy_budget=float(budgets[w]),
                    num_workers=result.config.num_workers)
        for w in range(result.config.num_workers)
    ]


def check_bounds(result: ExperimentResult) -> BoundReport:
    """Verify both deviation bounds on a finished dynamic run with queue floor 0."""
    cfg = result.config
    if cfg.policy != "Dynamic":
        raise ValueError(f"bound check requires the Dynamic policy, got {cfg.policy!r}")
    if cfg.queue_floor != 0.0:
        raise ValueError("bound check requires queue_floor == 0")
    return _bound_report(result.energy_matrix(), result.beta_matrix().astype(np.int8),
                         run_gammas(result), cfg.energy_budgets(),
                         cfg.scheduling_weight, cfg.num_workers)


@dataclass(frozen=True)
class DriftTrace:
    """Per-slot Lyapunov quantities of a dynamic run.

    queues has shape (T+1, N) including the final value; deficit is
    y = beta*E - budget; lyapunov is q^2/2 and drift its per-slot
    difference. The per-slot inequalities hold exactly when the run's
    queue floor is zero.
    """

    queues: np.ndarray
    deficit: np.ndarray
    lyapunov: np.ndarray
    drift: np.ndarray
    alphas: np.ndarray
    drift_vs_deficit_ok: bool     # drift <= y^2/2 + q*y, every slot and worker
    drift_vs_alpha_ok: bool       # drift <= alpha^2/2 + q*y
    deficit_sum_ok: bool          # sum_t y <= q(T), every worker
    floor_ok: bool                # q >= queue_floor always


def drift_trace(result: ExperimentResult) -> DriftTrace:
    cfg = result.config
    if cfg.policy != "Dynamic":
        raise ValueError("drift trace requires the Dynamic policy")
    queues = np.vstack([result.queue_matrix(), result.final_queues])
    betas = result.beta_matrix()
    energies = result.energy_matrix()
    budgets = cfg.energy_budgets()
    deficit = betas * energies - budgets
    lyapunov = 0.5 * queues ** 2
    drift = lyapunov[1:] - lyapunov[:-1]
    q_pre = queues[:-1]
    alphas = np.maximum(energies - budgets, budgets).max(axis=0)
    # y^2/2 + q*y written as (q+y)^2/2 - q^2/2: algebraically identical, and
    # this form makes the comparison exact in floating point (on slots where
    # the floor does not bind the queue update produces exactly q+y, so both
    # sides share every rounding).
    deficit_rhs = 0.5 * (q_pre + deficit) ** 2 - 0.5 * q_pre ** 2
    drift_vs_deficit = bool(np.all(drift <= deficit_rhs))
    return DriftTrace(
        queues=queues,
        deficit=deficit,
        lyapunov=lyapunov,
        drift=drift,
        alphas=alphas,
        drift_vs_deficit_ok=drift_vs_deficit,
        drift_vs_alpha_ok=drift_vs_deficit and bool(np.all(np.abs(deficit) <= alphas)),
        deficit_sum_ok=bool(np.all(deficit.sum(axis=0) <= queues[-1])),
        floor_ok=bool(np.all(queues >= cfg.queue_floor)),
    )
