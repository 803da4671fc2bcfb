"""Shared error types and the fit report record."""

from __future__ import annotations

from dataclasses import dataclass, field


class DataError(ValueError):
    """Invalid input data or arguments (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """Numerical procedure failed to converge (CLI exit code 3)."""


@dataclass
class FitReport:
    """Per-iteration diagnostics of a boosting fit.

    ``losses[m]`` is the training objective after stage ``m`` (index 0 is the
    value at initialization).  For the location stage the objective is the
    training SSE; for the log-scale stage it is the empirical likelihood risk.
    """

    losses: list[float] = field(default_factory=list)
    stop_reason: str = ""
    depth: int = 0
    n_stages: int = 0
    # log-scale stage only
    correlations: list[float] = field(default_factory=list)
    step_budget: float = 0.0
    # cross-validation summary: {(depth): (best_iter, best_cv_loss)}
    cv_results: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "losses": [float(v) for v in self.losses],
            "stop_reason": self.stop_reason,
            "depth": int(self.depth),
            "n_stages": int(self.n_stages),
            "correlations": [float(v) for v in self.correlations],
            "step_budget": float(self.step_budget),
            "cv_results": {str(k): list(v) for k, v in self.cv_results.items()},
        }
