"""Trust-region management: hypercube and line regions around the incumbent.

The region doubles its radius after a streak of improving recommendations and
halves it after a streak of non-improving ones; when a region is exhausted
(no unevaluated safe candidates) or keeps failing, the region type flips
between hypercube and line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

HYPERCUBE = "hypercube"
LINE = "line"

R_MIN = 0.01
R_MAX = 0.5
BASE_RADIUS = 0.05  # initial radius: 5% of each (normalized) dimension

TOP_K_IMPORTANT = 5


@dataclass(frozen=True)
class Subspace:
    """Search region in normalized coordinates.

    `radius` is retained while in line mode so that switching back to a
    hypercube resumes at the current trust-region size.
    """

    kind: str
    center: np.ndarray  # incumbent best point; line offset in line mode
    radius: float
    direction: np.ndarray | None = None  # unit vector, line mode only

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.kind not in (HYPERCUBE, LINE):
            raise ValueError(f"unknown subspace kind {self.kind!r}")
        if not R_MIN <= self.radius <= R_MAX:
            raise ValueError(f"radius {self.radius} outside [{R_MIN}, {R_MAX}]")
        if self.kind == LINE:
            d = np.asarray(self.direction, dtype=float)
            if not math.isclose(float(np.linalg.norm(d)), 1.0, rel_tol=1e-9):
                raise ValueError("line direction must be a unit vector")
            object.__setattr__(self, "direction", d)
        elif self.direction is not None:
            raise ValueError("hypercube region carries no direction")


def fresh_hypercube(center: np.ndarray, radius: float = BASE_RADIUS) -> Subspace:
    return Subspace(kind=HYPERCUBE, center=center, radius=radius)


@dataclass
class AdaptState:
    """Success/failure streak counters driving radius adaptation."""

    eta_succ: int = 3
    eta_fail: int = 3
    succ_counter: int = 0
    fail_counter: int = 0
    last_best_value: float = -math.inf


def record_outcome(state: AdaptState, new_value: float) -> AdaptState:
    """Count a strict improvement as a success, anything else as a failure."""
    if new_value > state.last_best_value:
        state.succ_counter += 1
        state.fail_counter = 0
        state.last_best_value = new_value
    else:
        state.fail_counter += 1
        state.succ_counter = 0
    return state


def switching_rule(
    state: AdaptState, has_unevaluated_safe: bool, switch_fail_threshold: int = 5
) -> bool:
    """Flip region type when the region is exhausted or keeps failing."""
    return (not has_unevaluated_safe) or state.fail_counter >= switch_fail_threshold


def adapt(
    subspace: Subspace,
    state: AdaptState,
    theta_best: np.ndarray,
    has_unevaluated_safe: bool,
    direction_provider: Callable[[], np.ndarray] | None = None,
    switch_fail_threshold: int = 5,
) -> Subspace:
    """One adaptation round; counters in `state` are reset on any trigger.

    The returned region is always re-centered on `theta_best`. Without any
    trigger the call is idempotent.
    """
    theta_best = np.asarray(theta_best, dtype=float)
    radius = subspace.radius

    if subspace.kind == HYPERCUBE:
        if state.succ_counter > state.eta_succ:
            radius = min(R_MAX, 2.0 * radius)
            state.succ_counter = 0
            state.fail_counter = 0
        if state.fail_counter > state.eta_fail:
            radius = max(R_MIN, radius / 2.0)
            state.succ_counter = 0
            state.fail_counter = 0
        if switching_rule(state, has_unevaluated_safe, switch_fail_threshold):
            if direction_provider is None:
                raise ValueError("direction_provider required to open a line region")
            d = np.asarray(direction_provider(), dtype=float)
            state.succ_counter = 0
            state.fail_counter = 0
            return Subspace(kind=LINE, center=theta_best, radius=radius, direction=d)
        return Subspace(kind=HYPERCUBE, center=theta_best, radius=radius)

    # line region
    if switching_rule(state, has_unevaluated_safe, switch_fail_threshold):
        state.succ_counter = 0
        state.fail_counter = 0
        return Subspace(kind=HYPERCUBE, center=theta_best, radius=radius)
    return Subspace(kind=LINE, center=theta_best, radius=radius, direction=subspace.direction)


def generate_direction(
    importance: Sequence[int],
    recent_improvement: float,
    rng: np.random.Generator,
    improvement_threshold: float = 0.01,
) -> np.ndarray:
    """Unit direction for a line region.

    Stagnation (low recent improvement) favors exploration with a uniformly
    random direction; otherwise an axis of one of the top-5 important knobs
    is followed.
    """
    m = len(importance)
    if recent_improvement < improvement_threshold:
        d = rng.standard_normal(m)
        norm = float(np.linalg.norm(d))
        while norm < 1e-12:  # essentially impossible, but keep ||d|| = 1 total
            d = rng.standard_normal(m)
            norm = float(np.linalg.norm(d))
        return d / norm
    top = list(importance)[: min(TOP_K_IMPORTANT, m)]
    knob = int(top[int(rng.integers(len(top)))])
    sign = 1.0 if rng.integers(2) == 1 else -1.0
    d = np.zeros(m)
    d[knob] = sign
    return d


def knob_importance(model) -> list[int]:
    """Knob indices ranked most-important first (inverse ARD lengthscale).

    Ties keep knob-definition order.
    """
    ls = np.asarray(model.params.matern_lengthscales, dtype=float)
    return [int(i) for i in np.argsort(ls, kind="stable")]
