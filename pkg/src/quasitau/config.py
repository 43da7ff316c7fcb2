"""Run configuration: a YAML key-value tree validated into a RunConfig.

Schema (every key optional except ``dimension``)::

    dimension: 2
    measure:
      lower: [-1, -1]          # box bounds, default [-1, 1] per axis
      upper: [1, 1]
      weight: constant         # constant | jacobi
      alpha: 0.5               # jacobi exponents, scalar or one per axis
      beta: 0.5
    quadrature_order: 64       # Gauss-Legendre nodes per axis
    levels: 5                  # truncation L >= 2
    buffer: 3                  # extra moment levels B >= 1
    flow:
      directions: [[1, 0], [0, 1]]
      offsets: [-3, -3]        # every q_a must be nonzero
      steps: [0, 0]
      times: [[0.1, 0.0], [0.0, 0.2, 0.0]]   # one list per level 1, 2, ...
    suites: all                # or a list of suite names
    seed: 0
    output: report
    tolerance_scale: 1.0       # multiplies every tolerance
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError
from .measure import FlowState, MeasureSpec
from .mindex import level_size

SUITE_NAMES = (
    "orthogonality", "quasidet", "three-term", "cd", "secondkind", "darboux", "christoffel",
    "discrete-toda", "lax", "toda", "miwa", "kp", "symmetry",
)
TOP_KEYS = {"dimension", "measure", "quadrature_order", "levels", "buffer", "flow", "suites",
            "seed", "output", "tolerance_scale"}


@dataclass(frozen=True, eq=False)
class RunConfig:
    spec: MeasureSpec
    state: FlowState
    levels: int = 5
    buffer: int = 3
    quadrature_order: int | None = None
    suites: tuple[str, ...] = SUITE_NAMES
    seed: int = 0
    output: Path = Path("report")
    tolerance_scale: float = 1.0
    source: dict = field(default_factory=dict, repr=False)

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    def with_overrides(self, levels=None, quadrature_order=None, seed=None, suites=None, output=None) -> "RunConfig":
        changes: dict[str, Any] = {}
        if levels is not None:
            if levels < 2:
                raise ConfigError("--level must be at least 2")
            changes["levels"] = levels
        if quadrature_order is not None:
            if quadrature_order < 1:
                raise ConfigError("--quad-order must be positive")
            changes["quadrature_order"] = quadrature_order
        if seed is not None:
            changes["seed"] = seed
        if suites is not None:
            changes["suites"] = _suite_list(suites, "--suite")
        if output is not None:
            changes["output"] = Path(output)
        return replace(self, **changes)


class _Tree:
    """Python values of a YAML document plus the source line of every key."""

    def __init__(self, text: str, name: str):
        self.name = name
        self.lines: dict[str, int] = {}
        try:
            node = yaml.compose(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{name}:{mark.line + 1}" if mark else name
            raise ConfigError(f"{where}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
        self.root = self._convert(node, "") if node is not None else {}

    def _convert(self, node, path: str):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for key_node, value_node in node.value:
                key = str(key_node.value)
                out[key] = self._convert(value_node, f"{path}.{key}" if path else key)
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._convert(v, f"{path}[{i}]") for i, v in enumerate(node.value)]
        return yaml.safe_load(yaml.serialize(node))

    def error(self, path: str, message: str) -> ConfigError:
        probe = path
        while probe and probe not in self.lines:
            probe = probe.rsplit(".", 1)[0] if "." in probe else ""
        line = self.lines.get(probe)
        where = f"{self.name}:{line}" if line else self.name
        return ConfigError(f"{where}: field '{path}': {message}")


def _number(tree: _Tree, value, path: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise tree.error(path, f"expected a number, got {value!r}")
    if integer and not float(value).is_integer():
        raise tree.error(path, f"expected an integer, got {value!r}")
    if isinstance(value, float) and not np.isfinite(value):
        raise tree.error(path, "must be finite")
    return int(value) if integer else float(value)


def _vector(tree: _Tree, value, path: str, size: int, integer: bool = False) -> list:
    if not isinstance(value, list):
        value = [value] * size if isinstance(value, (int, float)) and not isinstance(value, bool) else value
    if not isinstance(value, list) or len(value) != size:
        raise tree.error(path, f"expected a list of {size} numbers")
    return [_number(tree, v, f"{path}[{i}]", integer) for i, v in enumerate(value)]


def _suite_list(value, path: str, tree: _Tree | None = None) -> tuple[str, ...]:
    if value == "all":
        return SUITE_NAMES
    names = [s.strip() for s in value.split(",")] if isinstance(value, str) else value
    if not isinstance(names, list) or not names:
        message = "expected 'all' or a non-empty list of suite names"
        raise tree.error(path, message) if tree else ConfigError(f"{path}: {message}")
    unknown = [n for n in names if n not in SUITE_NAMES]
    if unknown:
        message = f"unknown suite(s) {', '.join(map(str, unknown))}; known: {', '.join(SUITE_NAMES)}"
        raise tree.error(path, message) if tree else ConfigError(f"{path}: {message}")
    return tuple(dict.fromkeys(names))


def _measure(tree: _Tree, raw, dim: int) -> MeasureSpec:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise tree.error("measure", "expected a mapping")
    lower = _vector(tree, raw.get("lower", -1.0), "measure.lower", dim)
    upper = _vector(tree, raw.get("upper", 1.0), "measure.upper", dim)
    if any(a >= b for a, b in zip(lower, upper)):
        raise tree.error("measure.upper", "each upper bound must exceed the lower bound")
    weight = raw.get("weight", "constant")
    if weight == "constant":
        return MeasureSpec(tuple(lower), tuple(upper))
    if weight == "jacobi":
        alpha = _vector(tree, raw.get("alpha", 0.5), "measure.alpha", dim)
        beta = _vector(tree, raw.get("beta", 0.5), "measure.beta", dim)
        if min(alpha + beta) <= -1:
            raise tree.error("measure.alpha", "jacobi exponents must exceed -1")
        return MeasureSpec(tuple(lower), tuple(upper), kind="jacobi", alpha=tuple(alpha), beta=tuple(beta))
    raise tree.error("measure.weight", f"unknown weight {weight!r}; expected constant or jacobi")


def _flow(tree: _Tree, raw, dim: int) -> FlowState:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise tree.error("flow", "expected a mapping")
    unknown = set(raw) - {"directions", "offsets", "steps", "times"}
    if unknown:
        raise tree.error(f"flow.{sorted(unknown)[0]}", "unknown key")
    directions = raw.get("directions", np.eye(dim).tolist())
    if not isinstance(directions, list) or len(directions) != dim:
        raise tree.error("flow.directions", f"expected {dim} direction vectors")
    n = np.array([_vector(tree, d, f"flow.directions[{i}]", dim) for i, d in enumerate(directions)])
    if abs(np.linalg.det(n)) < 1e-12:
        raise tree.error("flow.directions", "direction vectors must be linearly independent")
    q = _vector(tree, raw.get("offsets", -3.0), "flow.offsets", dim)
    for i, v in enumerate(q):
        if v == 0.0:
            raise tree.error(f"flow.offsets[{i}]", "offsets q_a must be nonzero (a zero offset puts the Darboux factor n.x - q through the origin)")
    steps = _vector(tree, raw.get("steps", 0), "flow.steps", dim, integer=True)
    times_raw = raw.get("times", [])
    if not isinstance(times_raw, list):
        raise tree.error("flow.times", "expected a list of per-level lists")
    times = [np.array(_vector(tree, t, f"flow.times[{k - 1}]", level_size(dim, k)))
             for k, t in enumerate(times_raw, start=1)]
    return FlowState(n, np.array(q), tuple(steps), tuple(times))


def parse_config(text: str, name: str = "<config>") -> RunConfig:
    tree = _Tree(text, name)
    raw = tree.root
    if not isinstance(raw, dict):
        raise tree.error("", "top level must be a mapping")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise tree.error(key, f"unknown key; expected one of {', '.join(sorted(TOP_KEYS))}")
    if "dimension" not in raw:
        raise tree.error("dimension", "is required")
    dim = _number(tree, raw["dimension"], "dimension", integer=True)
    if not 1 <= dim <= 3:
        raise tree.error("dimension", "must be 1, 2 or 3")
    spec = _measure(tree, raw.get("measure"), dim)
    state = _flow(tree, raw.get("flow"), dim)
    levels = _number(tree, raw.get("levels", 5), "levels", integer=True)
    if levels < 2:
        raise tree.error("levels", "truncation needs at least 2 levels")
    buffer = _number(tree, raw.get("buffer", 3), "buffer", integer=True)
    if buffer < 1:
        raise tree.error("buffer", "buffer must be at least 1")
    order = raw.get("quadrature_order")
    if order is not None:
        order = _number(tree, order, "quadrature_order", integer=True)
        if order < 1:
            raise tree.error("quadrature_order", "must be positive")
    seed = _number(tree, raw.get("seed", 0), "seed", integer=True)
    if not 0 <= seed < 2 ** 64:
        raise tree.error("seed", "must be an unsigned 64-bit integer")
    scale = _number(tree, raw.get("tolerance_scale", 1.0), "tolerance_scale")
    if scale <= 0:
        raise tree.error("tolerance_scale", "must be positive")
    return RunConfig(
        spec=spec, state=state, levels=levels, buffer=buffer, quadrature_order=order,
        suites=_suite_list(raw.get("suites", "all"), "suites", tree), seed=seed,
        output=Path(str(raw.get("output", "report"))), tolerance_scale=scale, source=raw,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def default_config(dim: int = 2) -> RunConfig:
    return parse_config(f"dimension: {dim}\n", "<default>")
