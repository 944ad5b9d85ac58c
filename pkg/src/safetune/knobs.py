"""Configuration-knob space: definitions, validation, and [0,1] normalization.

All search geometry (radii, distances, discretization) operates on normalized
coordinates so that "5% of a dimension" means the same thing for a buffer pool
size in megabytes and a thread count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

CONTINUOUS = "continuous"
INTEGER = "integer"
ENUM = "enum"

_KINDS = (CONTINUOUS, INTEGER, ENUM)


class KnobSpaceError(ValueError):
    """Invalid knob definition, configuration value, or space file."""


@dataclass(frozen=True)
class KnobDef:
    """One tunable knob: a bounded numeric axis or an unordered level set."""

    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    levels: tuple[str, ...] = ()
    default: Any = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise KnobSpaceError(f"knob {self.name!r}: unknown kind {self.kind!r}")
        if self.kind in (CONTINUOUS, INTEGER):
            if self.lower is None or self.upper is None:
                raise KnobSpaceError(f"knob {self.name!r}: bounds required")
            if not self.lower < self.upper:
                raise KnobSpaceError(
                    f"knob {self.name!r}: lower {self.lower} must be < upper {self.upper}"
                )
            if self.default is None or not self.lower <= float(self.default) <= self.upper:
                raise KnobSpaceError(f"knob {self.name!r}: default outside bounds")
            if self.kind == INTEGER and float(self.default) != int(self.default):
                raise KnobSpaceError(f"knob {self.name!r}: integer default required")
        else:
            if not self.levels:
                raise KnobSpaceError(f"knob {self.name!r}: levels required")
            if len(set(self.levels)) != len(self.levels):
                raise KnobSpaceError(f"knob {self.name!r}: duplicate levels")
            if self.default not in self.levels:
                raise KnobSpaceError(f"knob {self.name!r}: default not in levels")

    def validate_value(self, value: Any) -> None:
        if self.kind == ENUM:
            if value not in self.levels:
                raise KnobSpaceError(f"knob {self.name!r}: {value!r} not in levels")
            return
        v = float(value)
        if not self.lower <= v <= self.upper:
            raise KnobSpaceError(
                f"knob {self.name!r}: {value!r} outside [{self.lower}, {self.upper}]"
            )
        if self.kind == INTEGER and v != int(v):
            raise KnobSpaceError(f"knob {self.name!r}: {value!r} not integral")

    def to_unit(self, value: Any) -> float:
        """Map a knob value to its [0,1] coordinate."""
        self.validate_value(value)
        if self.kind == ENUM:
            if len(self.levels) == 1:
                return 0.5
            return self.levels.index(value) / (len(self.levels) - 1)
        return (float(value) - self.lower) / (self.upper - self.lower)

    def from_unit(self, coord: float) -> Any:
        """Inverse of to_unit with integer rounding / level snapping."""
        if not 0.0 <= coord <= 1.0:
            raise KnobSpaceError(f"knob {self.name!r}: coordinate {coord} outside [0,1]")
        if self.kind == ENUM:
            if len(self.levels) == 1:
                return self.levels[0]
            idx = _round_half_up(coord * (len(self.levels) - 1))
            return self.levels[min(idx, len(self.levels) - 1)]
        raw = self.lower + coord * (self.upper - self.lower)
        if self.kind == INTEGER:
            return min(int(self.upper), max(int(self.lower), _round_half_up(raw)))
        return raw


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class Configuration:
    """A full assignment of values, one per knob in the space."""

    values: Mapping[str, Any]

    def __getitem__(self, name: str) -> Any:
        return self.values[name]

    def as_dict(self) -> dict[str, Any]:
        return dict(self.values)


class KnobSpace:
    """Ordered collection of knob definitions with normalization helpers.

    Immutable after construction; knob order is definition order and fixes the
    meaning of each normalized coordinate.
    """

    def __init__(self, knobs: Sequence[KnobDef]):
        if not knobs:
            raise KnobSpaceError("empty knob space")
        names = [k.name for k in knobs]
        if len(set(names)) != len(names):
            raise KnobSpaceError("duplicate knob names")
        self._knobs = tuple(knobs)
        self._index = {k.name: i for i, k in enumerate(self._knobs)}

    @property
    def knobs(self) -> tuple[KnobDef, ...]:
        return self._knobs

    @property
    def names(self) -> list[str]:
        return [k.name for k in self._knobs]

    @property
    def dim(self) -> int:
        return len(self._knobs)

    def __len__(self) -> int:
        return len(self._knobs)

    def knob(self, name: str) -> KnobDef:
        try:
            return self._knobs[self._index[name]]
        except KeyError:
            raise KnobSpaceError(f"unknown knob {name!r}") from None

    def index(self, name: str) -> int:
        if name not in self._index:
            raise KnobSpaceError(f"unknown knob {name!r}")
        return self._index[name]

    def default_configuration(self) -> Configuration:
        return Configuration({k.name: k.default for k in self._knobs})

    def validate(self, config: Configuration) -> None:
        extra = set(config.values) - set(self._index)
        if extra:
            raise KnobSpaceError(f"unknown knobs in configuration: {sorted(extra)}")
        for k in self._knobs:
            if k.name not in config.values:
                raise KnobSpaceError(f"configuration missing knob {k.name!r}")
            k.validate_value(config.values[k.name])

    def normalize(self, config: Configuration) -> np.ndarray:
        """Configuration -> point in [0,1]^m (definition order)."""
        self.validate(config)
        return np.array(
            [k.to_unit(config.values[k.name]) for k in self._knobs], dtype=float
        )

    def denormalize(self, point: np.ndarray) -> Configuration:
        """Point in [0,1]^m -> Configuration (integers rounded, levels snapped)."""
        point = np.asarray(point, dtype=float)
        if point.shape != (self.dim,):
            raise KnobSpaceError(f"expected point of dim {self.dim}, got {point.shape}")
        return Configuration(
            {k.name: k.from_unit(float(point[i])) for i, k in enumerate(self._knobs)}
        )

    def snap(self, point: np.ndarray) -> np.ndarray:
        """Round-trip a normalized point through knob values (grid snapping)."""
        return self.normalize(self.denormalize(np.clip(point, 0.0, 1.0)))

    def to_records(self) -> list[dict[str, Any]]:
        recs = []
        for k in self._knobs:
            r: dict[str, Any] = {"name": k.name, "kind": k.kind, "default": k.default}
            if k.kind == ENUM:
                r["levels"] = list(k.levels)
            else:
                r["lower"] = k.lower
                r["upper"] = k.upper
            recs.append(r)
        return recs


def knob_from_record(rec: Mapping[str, Any]) -> KnobDef:
    kind = rec.get("kind")
    if kind not in _KINDS:
        raise KnobSpaceError(f"unknown knob kind {kind!r} (expected one of {_KINDS})")
    return KnobDef(
        name=rec["name"],
        kind=kind,
        lower=rec.get("lower"),
        upper=rec.get("upper"),
        levels=tuple(rec.get("levels", ())),
        default=rec.get("default"),
    )


def load_space(path: str) -> KnobSpace:
    """Load a knob space from a JSON file: {"knobs": [record, ...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return space_from_records(doc["knobs"])


def space_from_records(records: Sequence[Mapping[str, Any]]) -> KnobSpace:
    return KnobSpace([knob_from_record(r) for r in records])


def save_space(space: KnobSpace, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"knobs": space.to_records()}, fh, indent=2)
        fh.write("\n")
