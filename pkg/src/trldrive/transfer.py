"""Expert-guided action selection for transfer training.

At decision step ``t`` (counted across episodes) the expert's greedy action
is taken with probability ``p1 = beta0 * (1 - t / t_tran)``, a uniform random
action with ``eps * (1 - p1)`` and the student's greedy action otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trldrive import neural

RULES = ("transfer", "exploration", "exploitation")


class ExpertIOError(OSError):
    """The expert model file could not be read."""


class ExpertDimensionError(ValueError):
    """The expert does not fit the target environment."""


@dataclass(frozen=True)
class TransferConfig:
    beta0: float = 0.8
    t_tran: float = 1.0
    t_exp: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.beta0 <= 1.0:
            raise ValueError("beta0 must lie in [0, 1]")
        if not self.t_tran > 0:
            raise ValueError("t_tran must be positive")
        if self.t_exp < 0:
            raise ValueError("t_exp must be non-negative")

    @classmethod
    def for_run(cls, total_steps: int, beta0: float = 0.8, tran_fraction: float = 0.5,
                exp_fraction: float = 0.05) -> "TransferConfig":
        """Periods given as fractions of the planned number of decision steps."""
        return cls(beta0, max(tran_fraction * total_steps, 1e-12), exp_fraction * total_steps)


def transfer_probability(t: float, cfg: TransferConfig) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    return max(0.0, cfg.beta0 * (1.0 - t / cfg.t_tran))


def rule_probabilities(t: float, epsilon: float, cfg: TransferConfig) -> tuple[float, float, float]:
    p1 = transfer_probability(t, cfg)
    return p1, epsilon * (1.0 - p1), (1.0 - epsilon) * (1.0 - p1)


def pinned_epsilon(epsilon: float, t: float, cfg: TransferConfig, eps_start: float) -> float:
    """Exploration rate is held at its start value during the first ``t_exp`` steps."""
    return eps_start if t < cfg.t_exp else epsilon


@dataclass(frozen=True)
class ExpertHandle:
    params: neural.NetworkParams
    source_task: str = ""

    def __post_init__(self):
        for a in self.params.arrays():
            a.flags.writeable = False

    @property
    def input_dim(self) -> int:
        return self.params.input_dim

    def q_values(self, obs) -> np.ndarray:
        return neural.forward(self.params, obs)

    def greedy(self, obs) -> int:
        return int(np.argmax(self.q_values(obs)))


def expert_from(params: neural.NetworkParams, source_task: str = "") -> ExpertHandle:
    return ExpertHandle(params.copy(), source_task)


def load_expert(path, expected_input_dim: int, source_task: str = "", expected_head: str | None = None) -> ExpertHandle:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ExpertIOError(f"cannot read expert model {path}: {exc}") from exc
    params = neural.deserialize(data, expected_head)
    if params.input_dim != expected_input_dim:
        raise ExpertDimensionError(
            f"expert takes {params.input_dim} inputs but the environment observes {expected_input_dim}"
        )
    return ExpertHandle(params, source_task)


def select_action_with_transfer(obs, student, expert: ExpertHandle, epsilon: float, t: float,
                                rng: np.random.Generator, cfg: TransferConfig) -> tuple[int, str]:
    """One uniform draw picks the rule; returns (action, rule tag)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    p1 = transfer_probability(t, cfg)
    u = rng.random()
    if u < p1:
        return expert.greedy(obs), "transfer"
    if u < p1 + epsilon * (1.0 - p1):
        return int(rng.integers(student.n_actions)), "exploration"
    return student.greedy(obs), "exploitation"

