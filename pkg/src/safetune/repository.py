"""Observation records and their line-delimited persistence format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .featurize import Context
from .knobs import Configuration, KnobSpace


@dataclass(frozen=True)
class Observation:
    """One tuning-iteration record."""

    iteration: int
    context: Context
    config: Configuration
    point: np.ndarray  # normalized configuration, cached for model fitting
    performance: float
    safe: bool
    failure: bool

    def __post_init__(self) -> None:
        if self.failure and self.safe:
            raise ValueError("a failure outcome cannot be safe")


def make_observation(
    space: KnobSpace,
    iteration: int,
    context: Context,
    config: Configuration,
    performance: float,
    safe: bool,
    failure: bool,
) -> Observation:
    return Observation(
        iteration=iteration,
        context=context,
        config=config,
        point=space.normalize(config),
        performance=float(performance),
        safe=safe,
        failure=failure,
    )


def save_repository(path: str, observations: Iterable[Observation], header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(f"# {header}\n")
        for obs in observations:
            fh.write(
                json.dumps(
                    {
                        "iteration": obs.iteration,
                        "context": [float(v) for v in obs.context.vector],
                        "config": obs.config.as_dict(),
                        "performance": obs.performance,
                        "safe": obs.safe,
                        "failure": obs.failure,
                    }
                )
            )
            fh.write("\n")


def load_repository(path: str, space: KnobSpace) -> list[Observation]:
    out: list[Observation] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rec = json.loads(line)
            out.append(
                make_observation(
                    space,
                    iteration=int(rec["iteration"]),
                    context=Context(np.asarray(rec["context"], dtype=float)),
                    config=Configuration(rec["config"]),
                    performance=float(rec["performance"]),
                    safe=bool(rec["safe"]),
                    failure=bool(rec["failure"]),
                )
            )
    return out
