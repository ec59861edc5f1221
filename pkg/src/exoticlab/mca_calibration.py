"""Heston surface calibration by multi-start Nelder-Mead.

The objective is the mean absolute implied-vol difference over the active
grid points between the candidate's surface and the target. Searches run
inside a fixed parameter box from Latin-hypercube start points; the best
evaluated point across all starts is returned.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .bs_surface import SurfaceGrid, SurfaceInvalidError, model_surface
from .market_models import HestonParams, MarketState
from .rng import substream

# search box: (v0, a, vl, xi, rho)
BOX_LO = np.array([0.001, 0.01, 0.001, 0.01, -0.99])
BOX_HI = np.array([0.5, 5.0, 0.5, 1.5, 0.5])
_PARAM_NAMES = ("v0", "a", "vl", "xi", "rho")

PENALTY = 10.0  # objective value for candidates whose surface fails to build


@dataclass(frozen=True)
class CalibrationBudget:
    n_starts: int = 8
    max_evals_per_start: int = 400
    seed: int = 0
    failure_threshold: float = 0.05

    def __post_init__(self):
        if self.n_starts < 1 or self.max_evals_per_start < 10:
            raise ValueError("budget too small")


@dataclass(frozen=True)
class CalibrationResult:
    params: HestonParams
    error: float
    converged: bool
    evaluations: int

    def to_json(self) -> str:
        doc = {
            "params": {name: getattr(self.params, name) for name in _PARAM_NAMES},
            "calibration_error": self.error,
            "converged": self.converged,
            "evaluations": self.evaluations,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CalibrationResult":
        doc = json.loads(text)
        return cls(
            params=HestonParams(**doc["params"]),
            error=doc["calibration_error"],
            converged=doc["converged"],
            evaluations=doc["evaluations"],
        )


def calibration_error(
    candidate: HestonParams,
    target: SurfaceGrid,
    market: MarketState,
    penalty: float = PENALTY,
) -> float:
    """Mean absolute node-vol difference over the target's active mask.

    Candidates whose surface cannot be built (implied-vol failure at some
    node) score ``penalty``.
    """
    try:
        surf = model_surface(candidate, market, target.mask)
    except SurfaceInvalidError:
        return penalty
    return float(np.mean(np.abs(surf.active_vols() - target.active_vols())))


def latin_hypercube(n: int, rng: np.random.Generator) -> np.ndarray:
    """n stratified points in [0, 1]^5, one stratum per point per dimension."""
    dims = len(BOX_LO)
    u = (rng.random((n, dims)) + np.stack([rng.permutation(n) for _ in range(dims)], axis=1)) / n
    return u


def _vector_to_params(x: np.ndarray) -> HestonParams:
    x = np.clip(x, BOX_LO, BOX_HI)
    return HestonParams(v0=x[0], a=x[1], vl=x[2], xi=x[3], rho=x[4])


class _TrackedObjective:
    """Wraps the calibration error, recording the best evaluated point."""

    def __init__(self, target: SurfaceGrid, market: MarketState):
        self._target = target
        self._market = market
        self.best_x: np.ndarray | None = None
        self.best_f = math.inf
        self.trace: list[float] = []  # running best per evaluation

    def __call__(self, x: np.ndarray) -> float:
        f = calibration_error(_vector_to_params(x), self._target, self._market)
        if f < self.best_f:
            self.best_f = f
            self.best_x = np.clip(np.array(x, dtype=float), BOX_LO, BOX_HI)
        self.trace.append(self.best_f)
        return f


def _start_converged(trace: list[float]) -> bool:
    """Best value improved by less than 1e-6 over the final 50 evaluations.

    A run short enough to lack 50 evaluations is judged on its whole span
    (it only terminates that quickly once the simplex has collapsed).
    """
    if not trace:
        return False
    if len(trace) <= 50:
        return trace[0] - trace[-1] < 1e-6
    return trace[-51] - trace[-1] < 1e-6


def calibrate(
    target: SurfaceGrid,
    market: MarketState,
    budget: CalibrationBudget = CalibrationBudget(),
) -> CalibrationResult:
    """Fit Heston parameters to the target surface.

    Runs ``n_starts`` Nelder-Mead searches from Latin-hypercube points and
    keeps the best evaluated candidate overall (ties broken by lowest error,
    then start index, so permuting execution order cannot change the
    result). ``converged`` requires the winning start's best value to have
    improved by less than 1e-6 over its final 50 evaluations and the final
    error to sit below the failure threshold; callers typically drop
    non-converged fits.
    """
    starts = BOX_LO + latin_hypercube(budget.n_starts, substream(budget.seed, "calib-starts")) * (
        BOX_HI - BOX_LO
    )

    def run_nelder_mead(x0: np.ndarray) -> _TrackedObjective:
        tracked = _TrackedObjective(target, market)
        minimize(
            tracked,
            x0,
            method="Nelder-Mead",
            bounds=list(zip(BOX_LO, BOX_HI)),
            options={
                "maxfev": budget.max_evals_per_start,
                "xatol": 1e-6,
                "fatol": 1e-9,
            },
        )
        return tracked

    runs = [run_nelder_mead(x0) for x0 in starts]
    winner = min(range(len(runs)), key=lambda i: (runs[i].best_f, i))
    best = runs[winner]
    assert best.best_x is not None
    total_evals = sum(len(r.trace) for r in runs)

    # restart with a fresh simplex at the winning point: Nelder-Mead's final
    # simplex is usually degenerate, and restarting polishes cheaply; loop
    # until a restart stops paying
    last = best
    for _ in range(3):
        polish = run_nelder_mead(last.best_x)
        total_evals += len(polish.trace)
        improved = last.best_f - polish.best_f
        if polish.best_f <= last.best_f:
            last = polish
        if improved < 1e-7:
            break

    assert last.best_x is not None
    params = _vector_to_params(last.best_x)
    error = calibration_error(params, target, market)
    converged = _start_converged(last.trace) and error <= budget.failure_threshold
    return CalibrationResult(
        params=params,
        error=error,
        converged=converged,
        evaluations=total_evals,
    )
