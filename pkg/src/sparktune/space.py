"""Search spaces, configurations, and the encoded feature representation.

A space is an ordered list of parameter definitions. Numerical parameters
carry bounds and a scale (linear or log); categorical parameters carry an
ordered choice list. Configurations are immutable name -> value mappings
validated against their space. The encoded representation normalizes every
numerical parameter to [0, 1] on its scale and one-hot encodes categoricals,
in declaration order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

Value = float | int | str

_SCALES = ("linear", "log")
_KINDS = ("numerical", "categorical")


class SpaceError(ValueError):
    """Raised for malformed parameter definitions or space documents."""


@dataclass(frozen=True)
class ParameterDef:
    """One tunable parameter: numerical with bounds, or categorical with choices."""

    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    choices: tuple[Value, ...] | None = None
    scale: str = "linear"

    def __post_init__(self) -> None:
        if not self.name:
            raise SpaceError("parameter name must be non-empty")
        if self.kind not in _KINDS:
            raise SpaceError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == "numerical":
            if self.lower is None or self.upper is None:
                raise SpaceError(f"{self.name}: numerical parameter needs bounds")
            if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
                raise SpaceError(f"{self.name}: bounds must be finite")
            if self.lower >= self.upper:
                raise SpaceError(f"{self.name}: lower must be < upper")
            if self.scale not in _SCALES:
                raise SpaceError(f"{self.name}: unknown scale {self.scale!r}")
            if self.scale == "log" and self.lower <= 0:
                raise SpaceError(f"{self.name}: log scale needs positive lower bound")
            if self.choices is not None:
                raise SpaceError(f"{self.name}: numerical parameter cannot have choices")
        else:
            if not self.choices or len(self.choices) < 2:
                raise SpaceError(f"{self.name}: categorical parameter needs >= 2 choices")
            if len(set(self.choices)) != len(self.choices):
                raise SpaceError(f"{self.name}: duplicate choices")
            if self.lower is not None or self.upper is not None:
                raise SpaceError(f"{self.name}: categorical parameter cannot have bounds")

    @property
    def is_numerical(self) -> bool:
        return self.kind == "numerical"

    @property
    def width(self) -> int:
        """Number of encoded components this parameter occupies."""
        return 1 if self.is_numerical else len(self.choices)  # type: ignore[arg-type]

    def normalize(self, value: float) -> float:
        """Map a native numerical value to [0, 1] on this parameter's scale."""
        if self.scale == "log":
            return (math.log(value) - math.log(self.lower)) / (
                math.log(self.upper) - math.log(self.lower)
            )
        return (value - self.lower) / (self.upper - self.lower)

    def denormalize(self, unit: float) -> float:
        """Inverse of normalize; input is clipped to [0, 1] first."""
        unit = min(max(unit, 0.0), 1.0)
        if self.scale == "log":
            lo, hi = math.log(self.lower), math.log(self.upper)
            return math.exp(lo + unit * (hi - lo))
        return self.lower + unit * (self.upper - self.lower)

    def choice_index(self, value: Value) -> int | None:
        for i, c in enumerate(self.choices):  # type: ignore[arg-type]
            if _choice_eq(c, value):
                return i
        return None


def _choice_eq(a: Value, b: Value) -> bool:
    # 2 and 2.0 name the same choice once a config has been through JSON
    if isinstance(a, str) != isinstance(b, str):
        return False
    return a == b


@dataclass(frozen=True)
class SearchSpace:
    """Ordered, immutable collection of parameter definitions."""

    params: tuple[ParameterDef, ...]

    def __post_init__(self) -> None:
        names = [p.name for p in self.params]
        if not names:
            raise SpaceError("space must contain at least one parameter")
        if len(set(names)) != len(names):
            raise SpaceError("duplicate parameter names in space")

    def __iter__(self) -> Iterator[ParameterDef]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    @property
    def encoded_dim(self) -> int:
        return sum(p.width for p in self.params)

    def get(self, name: str) -> ParameterDef:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(p.name == name for p in self.params)

    def blocks(self) -> list[tuple[ParameterDef, int, int]]:
        """(param, start, width) triples over the encoded vector."""
        out, pos = [], 0
        for p in self.params:
            out.append((p, pos, p.width))
            pos += p.width
        return out

    def to_document(self) -> list[dict[str, Any]]:
        doc = []
        for p in self.params:
            entry: dict[str, Any] = {"name": p.name, "kind": p.kind}
            if p.is_numerical:
                entry.update(lower=p.lower, upper=p.upper, scale=p.scale)
            else:
                entry["choices"] = list(p.choices)  # type: ignore[arg-type]
            doc.append(entry)
        return doc

    @classmethod
    def from_document(cls, doc: Any) -> "SearchSpace":
        if isinstance(doc, Mapping) and "parameters" in doc:
            doc = doc["parameters"]
        if not isinstance(doc, Sequence) or isinstance(doc, (str, bytes)):
            raise SpaceError("space document must be a list of parameter entries")
        params = []
        for entry in doc:
            if not isinstance(entry, Mapping):
                raise SpaceError("each space entry must be an object")
            kind = entry.get("kind", "numerical")
            if kind == "numerical":
                params.append(
                    ParameterDef(
                        name=entry.get("name", ""),
                        kind="numerical",
                        lower=float(entry["lower"]),
                        upper=float(entry["upper"]),
                        scale=entry.get("scale", "linear"),
                    )
                )
            else:
                params.append(
                    ParameterDef(
                        name=entry.get("name", ""),
                        kind="categorical",
                        choices=tuple(entry["choices"]),
                    )
                )
        return cls(tuple(params))


@dataclass(frozen=True)
class Configuration:
    """Immutable assignment of one value per parameter."""

    values: Mapping[str, Value]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", dict(self.values))

    def __getitem__(self, name: str) -> Value:
        return self.values[name]

    def get(self, name: str, default: Value | None = None) -> Value | None:
        return self.values.get(name, default)

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.values == other.values

    def __hash__(self) -> int:
        return hash(tuple(sorted((k, repr(v)) for k, v in self.values.items())))

    def replace(self, **updates: Value) -> "Configuration":
        merged = dict(self.values)
        merged.update(updates)
        return Configuration(merged)

    def to_document(self) -> dict[str, Value]:
        return dict(self.values)


def validate(config: Configuration, space: SearchSpace) -> list[str]:
    """Return a list of violation messages; empty means the config is valid."""
    problems = []
    for p in space:
        if p.name not in config:
            problems.append(f"missing parameter {p.name}")
            continue
        v = config[p.name]
        if p.is_numerical:
            if isinstance(v, str) or not math.isfinite(float(v)):
                problems.append(f"{p.name}: non-numeric value {v!r}")
            elif not (p.lower <= float(v) <= p.upper):
                problems.append(
                    f"{p.name}: value {v!r} outside [{p.lower}, {p.upper}]"
                )
        else:
            if p.choice_index(v) is None:
                problems.append(f"{p.name}: value {v!r} not among choices {p.choices}")
    known = set(space.names)
    for name in config.values:
        if name not in known:
            problems.append(f"unknown parameter {name}")
    return problems


def _require_valid(config: Configuration, space: SearchSpace) -> None:
    problems = validate(config, space)
    if problems:
        raise SpaceError("invalid configuration: " + "; ".join(problems))


def encode(config: Configuration, space: SearchSpace) -> np.ndarray:
    """Encode a valid configuration as a float vector in [0, 1]^d.

    Numericals map to their normalized scale position; categoricals become
    one-hot blocks in choice order. Component order follows declaration order.
    """
    _require_valid(config, space)
    out = np.zeros(space.encoded_dim)
    for p, start, width in space.blocks():
        v = config[p.name]
        if p.is_numerical:
            out[start] = p.normalize(float(v))
        else:
            out[start + p.choice_index(v)] = 1.0  # type: ignore[operator]
    return out


def decode(vector: np.ndarray, space: SearchSpace) -> Configuration:
    """Map an encoded vector back to a valid configuration.

    Numerical components are clipped to [0, 1] before denormalizing;
    categorical blocks decode to the argmax choice (first wins on ties).
    """
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (space.encoded_dim,):
        raise SpaceError(
            f"expected vector of length {space.encoded_dim}, got shape {vector.shape}"
        )
    values: dict[str, Value] = {}
    for p, start, width in space.blocks():
        if p.is_numerical:
            values[p.name] = p.denormalize(float(vector[start]))
        else:
            idx = int(np.argmax(vector[start : start + width]))
            values[p.name] = p.choices[idx]  # type: ignore[index]
    return Configuration(values)


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> Configuration:
    """Draw one configuration uniformly: numericals uniform on their scale,
    categoricals uniform over choices."""
    values: dict[str, Value] = {}
    for p in space:
        if p.is_numerical:
            values[p.name] = p.denormalize(float(rng.uniform()))
        else:
            values[p.name] = p.choices[int(rng.integers(len(p.choices)))]  # type: ignore[index]
    return Configuration(values)


def sample_neighborhood(
    center: Configuration,
    space: SearchSpace,
    radius: float,
    rng: np.random.Generator,
) -> Configuration:
    """Perturb each numerical value uniformly within +/- radius (relative),
    clamped to bounds. Categorical values are left unchanged.
    """
    if not (0.0 < radius < 1.0):
        raise ValueError(f"radius must be in (0, 1), got {radius}")
    _require_valid(center, space)
    values: dict[str, Value] = {}
    for p in space:
        v = center[p.name]
        if p.is_numerical:
            v = float(v)
            lo, hi = v * (1.0 - radius), v * (1.0 + radius)
            if lo > hi:  # negative center value flips the interval
                lo, hi = hi, lo
            lo = max(lo, p.lower)
            hi = min(hi, p.upper)
            if lo >= hi:
                values[p.name] = min(max(v, p.lower), p.upper)
            else:
                values[p.name] = float(rng.uniform(lo, hi))
        else:
            values[p.name] = v
    return Configuration(values)


def mutate(
    base: Configuration, space: SearchSpace, rng: np.random.Generator
) -> Configuration:
    """Resample exactly one uniformly chosen parameter; the rest are kept.

    The resampled value may coincide with the original, so the result differs
    from the base in at most one dimension.
    """
    _require_valid(base, space)
    p = space.params[int(rng.integers(len(space.params)))]
    values = dict(base.values)
    if p.is_numerical:
        values[p.name] = p.denormalize(float(rng.uniform()))
    else:
        values[p.name] = p.choices[int(rng.integers(len(p.choices)))]  # type: ignore[index]
    return Configuration(values)


def _load_data(name: str) -> Any:
    with resources.files("sparktune.data").joinpath(name).open("r") as fh:
        return json.load(fh)


def default_space() -> SearchSpace:
    """The bundled ten-parameter Spark SQL space."""
    return SearchSpace.from_document(_load_data("default_space.json"))


def default_configurations(space: SearchSpace | None = None) -> list[Configuration]:
    """Five starting configurations spanning the space.

    For the bundled space these are curated: vendor-style default, small,
    large, rule-recommended, then a balanced midpoint. The extremes probe
    first and the most balanced config runs last, since the init phase
    continues from the final default. Other spaces get fixed normalized
    positions instead.
    """
    if space is None:
        space = default_space()
    bundled = default_space()
    if space == bundled:
        docs = _load_data("default_configs.json")
        return [Configuration(d) for d in docs]
    out = []
    for u in (0.5, 0.2, 0.8, 0.35, 0.65):
        out.append(decode(np.full(space.encoded_dim, u), space))
    return out
