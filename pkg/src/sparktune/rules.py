"""Expert tuning rules: a small condition language plus bounded update steps.

A rule is (parameter, direction, condition, step, bounds). Conditions are
conjunctions of atoms; an atom compares a metric or parameter against
constants, tests a range, or negates a nested conjunction. The surface
syntax additionally allows ``or``, which is rewritten through De Morgan's
law at parse time, and ``ifnull(param, default)`` which substitutes the
default when the parameter is absent from the configuration.

Steps either multiply the current value, set it to the rule's (degenerate)
bound, or evaluate an arithmetic formula over parameter values. Multiple
rules may target one parameter; within a pass the first rule in document
order whose condition holds wins for that parameter. All reads during a
pass (conditions and formulas alike) see the configuration as it was before
the pass started. Results are clamped to the rule's bounds and then to the
space's bounds.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

from .metrics import METRIC_NAMES, RuntimeMetrics
from .space import Configuration, SearchSpace, Value, sample_neighborhood

NEIGHBORHOOD_RADIUS = 0.2

# parameters that may appear in conditions without being tunable
CONDITION_ONLY_PARAMETERS = ("spark.sql.adaptive.enabled",)


class RuleParseError(ValueError):
    """Malformed rule document, condition, or formula."""


class RuleEvaluationError(ValueError):
    """A condition or formula referenced something unavailable at eval time."""


# ----------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
      | (?P<name>[A-Za-z_][A-Za-z0-9_.]*)
      | (?P<str>'[^']*'|"[^"]*")
      | (?P<op><=|>=|!=|<|>|=|\(|\)|,|\+|-|\*|/)
    )""",
    re.VERBOSE,
)

_KEYWORDS = {"and", "or", "not", "ifnull"}
_ORDER_OPS = {"<", "<=", ">", ">="}
_REL_OPS = _ORDER_OPS | {"="}


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise RuleParseError(f"cannot tokenize {text[pos:]!r}")
        if m.group("num") is not None:
            tokens.append(("num", m.group("num")))
        elif m.group("name") is not None:
            name = m.group("name")
            tokens.append(("kw" if name in _KEYWORDS else "name", name))
        elif m.group("str") is not None:
            tokens.append(("str", m.group("str")[1:-1]))
        else:
            tokens.append(("op", m.group("op")))
        pos = m.end()
    return tokens


# ----------------------------------------------------------------- AST types


@dataclass(frozen=True)
class MetricRef:
    name: str


@dataclass(frozen=True)
class ParamRef:
    name: str


@dataclass(frozen=True)
class IfNullRef:
    name: str
    default: Value


Ref = MetricRef | ParamRef | IfNullRef


@dataclass(frozen=True)
class Comparison:
    ref: Ref
    op: str
    value: Value


@dataclass(frozen=True)
class Range:
    ref: Ref
    low: float
    high: float
    low_inclusive: bool
    high_inclusive: bool


@dataclass(frozen=True)
class Negation:
    body: "Conjunction"


@dataclass(frozen=True)
class Conjunction:
    atoms: tuple  # Comparison | Range | Negation

    def __iter__(self) -> Iterator:
        return iter(self.atoms)


Condition = Conjunction


# ------------------------------------------------------------------- parser


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]], metric_names, param_names):
        self.tokens = tokens
        self.pos = 0
        self.metric_names = metric_names
        self.param_names = param_names

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise RuleParseError("unexpected end of condition")
        self.pos += 1
        return tok

    def expect(self, kind: str, value: str | None = None) -> tuple[str, str]:
        tok = self.take()
        if tok[0] != kind or (value is not None and tok[1] != value):
            raise RuleParseError(f"expected {value or kind}, got {tok[1]!r}")
        return tok

    def at_kw(self, word: str) -> bool:
        tok = self.peek()
        return tok is not None and tok[0] == "kw" and tok[1] == word

    def at_op(self, op: str) -> bool:
        tok = self.peek()
        return tok is not None and tok[0] == "op" and tok[1] == op

    # condition grammar

    def condition(self) -> Conjunction:
        node = self.or_expr()
        if self.peek() is not None:
            raise RuleParseError(f"trailing input at {self.peek()[1]!r}")
        return node

    def or_expr(self) -> Conjunction:
        branches = [self.and_expr()]
        while self.at_kw("or"):
            self.take()
            branches.append(self.and_expr())
        if len(branches) == 1:
            return branches[0]
        # a or b  ->  not(not(a) and not(b)), keeping the normalized shape
        return Conjunction((Negation(Conjunction(tuple(Negation(b) for b in branches))),))

    def and_expr(self) -> Conjunction:
        atoms: list = []
        atoms.extend(self.unary())
        while self.at_kw("and"):
            self.take()
            atoms.extend(self.unary())
        return Conjunction(tuple(atoms))

    def unary(self) -> tuple:
        """One unit of a conjunction, returned as a tuple of atoms so that
        bare parenthesized groups flatten into their parent."""
        if self.at_kw("not"):
            self.take()
            self.expect("op", "(")
            inner = self.or_expr()
            self.expect("op", ")")
            return (Negation(inner),)
        if self.at_op("("):
            self.take()
            inner = self.or_expr()
            self.expect("op", ")")
            return tuple(inner.atoms)
        return self.comparison()

    def comparison(self) -> tuple:
        operands = [self.operand()]
        ops: list[str] = []
        while True:
            tok = self.peek()
            if tok is not None and tok[0] == "op" and tok[1] in _REL_OPS:
                ops.append(self.take()[1])
                operands.append(self.operand())
            else:
                break
        if not ops:
            raise RuleParseError("expected a comparison")
        if len(ops) == 2 and isinstance(operands[1], (MetricRef, ParamRef, IfNullRef)):
            rng = self._try_range(operands, ops)
            if rng is not None:
                return (rng,)
        atoms = []
        for left, op, right in zip(operands, ops, operands[1:]):
            atoms.append(self._pair(left, op, right))
        return tuple(atoms)

    def _try_range(self, operands, ops) -> Range | None:
        lo, ref, hi = operands
        if isinstance(lo, (MetricRef, ParamRef, IfNullRef)) or isinstance(
            hi, (MetricRef, ParamRef, IfNullRef)
        ):
            return None
        if all(op in ("<", "<=") for op in ops):
            lo_v, hi_v = lo, hi
            lo_inc, hi_inc = ops[0] == "<=", ops[1] == "<="
        elif all(op in (">", ">=") for op in ops):
            lo_v, hi_v = hi, lo
            lo_inc, hi_inc = ops[1] == ">=", ops[0] == ">="
        else:
            return None
        if isinstance(lo_v, str) or isinstance(hi_v, str):
            raise RuleParseError("range endpoints must be numeric")
        if lo_v > hi_v:
            raise RuleParseError(f"empty range [{lo_v}, {hi_v}]")
        return Range(ref, float(lo_v), float(hi_v), lo_inc, hi_inc)

    def _pair(self, left, op, right):
        left_ref = isinstance(left, (MetricRef, ParamRef, IfNullRef))
        right_ref = isinstance(right, (MetricRef, ParamRef, IfNullRef))
        if left_ref and right_ref:
            raise RuleParseError("comparisons between two references are not supported")
        if not left_ref and not right_ref:
            raise RuleParseError("comparison must reference a metric or parameter")
        if left_ref:
            ref, lit = left, right
        else:
            flip = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "="}
            ref, lit, op = right, left, flip[op]
        if op in _ORDER_OPS and isinstance(lit, str):
            raise RuleParseError(f"ordering comparison against string {lit!r}")
        return Comparison(ref, op, lit)

    def operand(self):
        tok = self.peek()
        if tok is None:
            raise RuleParseError("unexpected end of condition")
        kind, value = tok
        if kind == "num":
            self.take()
            return float(value)
        if kind == "op" and value == "-":
            self.take()
            num = self.expect("num")
            return -float(num[1])
        if kind == "str":
            self.take()
            return value
        if kind == "kw" and value == "ifnull":
            self.take()
            self.expect("op", "(")
            name = self.expect("name")[1]
            self.expect("op", ",")
            default = self.operand()
            self.expect("op", ")")
            if isinstance(default, (MetricRef, ParamRef, IfNullRef)):
                raise RuleParseError("ifnull default must be a literal")
            if name not in self.param_names:
                raise RuleParseError(f"ifnull over unknown parameter {name!r}")
            return IfNullRef(name, default)
        if kind == "name":
            self.take()
            if value in self.metric_names:
                return MetricRef(value)
            if value in self.param_names:
                return ParamRef(value)
            raise RuleParseError(f"unknown name {value!r}")
        raise RuleParseError(f"unexpected token {value!r}")

    # arithmetic grammar (formula steps)

    def arith(self):
        node = self.arith_term()
        while self.at_op("+") or self.at_op("-"):
            op = self.take()[1]
            node = BinOp(op, node, self.arith_term())
        return node

    def arith_term(self):
        node = self.arith_factor()
        while self.at_op("*") or self.at_op("/"):
            op = self.take()[1]
            node = BinOp(op, node, self.arith_factor())
        return node

    def arith_factor(self):
        tok = self.peek()
        if tok is None:
            raise RuleParseError("unexpected end of formula")
        kind, value = tok
        if kind == "num":
            self.take()
            return Num(float(value))
        if kind == "op" and value == "-":
            self.take()
            return BinOp("-", Num(0.0), self.arith_factor())
        if kind == "op" and value == "(":
            self.take()
            node = self.arith()
            self.expect("op", ")")
            return node
        if kind == "name":
            self.take()
            if value not in self.param_names:
                raise RuleParseError(f"formula references unknown parameter {value!r}")
            return ParamTerm(value)
        raise RuleParseError(f"unexpected token {value!r} in formula")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class ParamTerm:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Any
    right: Any


def parse_condition(
    text: str,
    metric_names: Sequence[str] = METRIC_NAMES,
    param_names: Sequence[str] | None = None,
) -> Conjunction:
    """Parse a condition string into its normalized form."""
    if param_names is None:
        param_names = _default_param_names()
    parser = _Parser(_tokenize(text), frozenset(metric_names), frozenset(param_names))
    return parser.condition()


def _parse_formula(text: str, param_names) -> Any:
    parser = _Parser(_tokenize(text), frozenset(), frozenset(param_names))
    node = parser.arith()
    if parser.peek() is not None:
        raise RuleParseError(f"trailing input in formula at {parser.peek()[1]!r}")
    return node


# --------------------------------------------------------------- evaluation


def _resolve(ref: Ref, metrics, config: Configuration) -> Value:
    if isinstance(ref, MetricRef):
        if isinstance(metrics, RuntimeMetrics):
            return metrics.get(ref.name)
        try:
            return metrics[ref.name]
        except (KeyError, TypeError) as exc:
            raise RuleEvaluationError(f"metric {ref.name!r} unavailable") from exc
    if isinstance(ref, ParamRef):
        if ref.name not in config:
            raise RuleEvaluationError(f"parameter {ref.name!r} not in configuration")
        return config[ref.name]
    v = config.get(ref.name)
    return ref.default if v is None else v


def _compare(left: Value, op: str, right: Value) -> bool:
    if op == "=":
        if isinstance(left, str) != isinstance(right, str):
            return False
        if isinstance(left, str):
            return left == right
        return float(left) == float(right)
    if op == "!=":
        return not _compare(left, "=", right)
    if isinstance(left, str) or isinstance(right, str):
        raise RuleEvaluationError(f"ordering comparison on string value {left!r}")
    a, b = float(left), float(right)
    return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


def eval_condition(
    condition: Conjunction, metrics, config: Configuration
) -> bool:
    """Evaluate a parsed condition against metrics and a configuration."""
    for atom in condition:
        if isinstance(atom, Negation):
            if eval_condition(atom.body, metrics, config):
                return False
        elif isinstance(atom, Comparison):
            if not _compare(_resolve(atom.ref, metrics, config), atom.op, atom.value):
                return False
        elif isinstance(atom, Range):
            v = _resolve(atom.ref, metrics, config)
            if isinstance(v, str):
                raise RuleEvaluationError(f"range test on string value {v!r}")
            x = float(v)
            lo_ok = atom.low <= x if atom.low_inclusive else atom.low < x
            hi_ok = x <= atom.high if atom.high_inclusive else x < atom.high
            if not (lo_ok and hi_ok):
                return False
        else:  # pragma: no cover - parser never builds anything else
            raise RuleEvaluationError(f"unknown atom {atom!r}")
    return True


def _eval_arith(node: Any, config: Configuration) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, ParamTerm):
        if node.name not in config:
            raise RuleEvaluationError(f"formula parameter {node.name!r} not in configuration")
        v = config[node.name]
        if isinstance(v, str):
            raise RuleEvaluationError(f"formula over non-numeric parameter {node.name!r}")
        return float(v)
    left = _eval_arith(node.left, config)
    right = _eval_arith(node.right, config)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if right == 0:
        raise RuleEvaluationError("division by zero in formula")
    return left / right


# -------------------------------------------------------------------- rules


@dataclass(frozen=True)
class Multiply:
    factor: float


@dataclass(frozen=True)
class SetToBound:
    pass


@dataclass(frozen=True)
class Formula:
    text: str
    expr: Any


Step = Multiply | SetToBound | Formula

_DIRECTIONS = ("up", "down", "none")
_UNIT_SUFFIX = {"K": 1024.0, "M": 1024.0**2, "G": 1024.0**3}


def parse_quantity(value: Any) -> float:
    """Numeric bound, accepting binary-suffixed strings: 16M = 16 * 2^20."""
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*([KMG])?\s*", value)
        if m:
            scale = _UNIT_SUFFIX.get(m.group(2), 1.0) if m.group(2) else 1.0
            return float(m.group(1)) * scale
    raise RuleParseError(f"cannot parse quantity {value!r}")


@dataclass(frozen=True)
class ExpertRule:
    parameter: str
    direction: str
    condition: Conjunction
    condition_text: str
    step: Step
    lower: float
    upper: float
    unit: str | None
    index: int

    @property
    def is_set(self) -> bool:
        return isinstance(self.step, SetToBound)


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[ExpertRule, ...]

    def __iter__(self) -> Iterator[ExpertRule]:
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    def parameters(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for r in self.rules:
            seen.setdefault(r.parameter, None)
        return tuple(seen)


def _default_param_names() -> frozenset[str]:
    from .space import default_space

    return frozenset(default_space().names) | frozenset(CONDITION_ONLY_PARAMETERS)


def parse_ruleset(
    document: Any,
    metric_names: Sequence[str] = METRIC_NAMES,
    param_names: Sequence[str] | None = None,
) -> RuleSet:
    """Parse and validate a rule document (a list of rule objects)."""
    if isinstance(document, Mapping) and "rules" in document:
        document = document["rules"]
    if not isinstance(document, Sequence) or isinstance(document, (str, bytes)):
        raise RuleParseError("rule document must be a list of rule objects")
    if param_names is None:
        param_names = _default_param_names()
    param_names = frozenset(param_names)
    metric_names = frozenset(metric_names)
    rules = []
    for idx, entry in enumerate(document):
        try:
            rules.append(_parse_rule(entry, idx, metric_names, param_names))
        except RuleParseError as exc:
            param = entry.get("parameter", "?") if isinstance(entry, Mapping) else "?"
            raise RuleParseError(f"rule {idx} ({param}): {exc}") from exc
    return RuleSet(tuple(rules))


def _parse_rule(entry, idx, metric_names, param_names) -> ExpertRule:
    if not isinstance(entry, Mapping):
        raise RuleParseError("rule entry must be an object")
    parameter = entry.get("parameter")
    if not parameter or parameter not in param_names:
        raise RuleParseError(f"unknown or missing parameter {parameter!r}")
    direction = entry.get("direction", "none")
    if direction not in _DIRECTIONS:
        raise RuleParseError(f"invalid direction {direction!r}")
    bounds = entry.get("bounds")
    if not isinstance(bounds, Mapping) or "lower" not in bounds or "upper" not in bounds:
        raise RuleParseError("bounds with lower and upper required")
    lower = parse_quantity(bounds["lower"])
    upper = parse_quantity(bounds["upper"])
    if lower > upper:
        raise RuleParseError(f"bounds lower {lower} exceeds upper {upper}")
    unit = bounds.get("unit")

    step_doc = entry.get("step")
    if not isinstance(step_doc, Mapping) or len(step_doc) != 1:
        raise RuleParseError("step must be one of multiply / set / formula")
    step: Step
    if "multiply" in step_doc:
        factor = float(step_doc["multiply"])
        if factor <= 0:
            raise RuleParseError(f"multiply factor must be positive, got {factor}")
        if direction == "up" and factor <= 1:
            raise RuleParseError(f"increase rule with factor {factor} <= 1")
        if direction == "down" and factor >= 1:
            raise RuleParseError(f"decrease rule with factor {factor} >= 1")
        step = Multiply(factor)
    elif "set" in step_doc:
        if lower != upper:
            raise RuleParseError("set step requires degenerate bounds (lower == upper)")
        step = SetToBound()
    elif "formula" in step_doc:
        text = str(step_doc["formula"])
        step = Formula(text, _parse_formula(text, param_names))
    else:
        raise RuleParseError(f"unknown step {dict(step_doc)!r}")

    cond_text = entry.get("condition")
    if not isinstance(cond_text, str) or not cond_text.strip():
        raise RuleParseError("condition string required")
    condition = parse_condition(cond_text, metric_names, param_names)
    return ExpertRule(
        parameter=parameter,
        direction=direction,
        condition=condition,
        condition_text=cond_text,
        step=step,
        lower=lower,
        upper=upper,
        unit=unit,
        index=idx,
    )


def load_ruleset(path) -> RuleSet:
    with open(path) as fh:
        return parse_ruleset(json.load(fh))


def default_rules() -> RuleSet:
    """The bundled rule document (47 rules over the bundled space)."""
    with resources.files("sparktune.data").joinpath("default_rules.json").open("r") as fh:
        return parse_ruleset(json.load(fh))


# ------------------------------------------------------------------ applying


def _clamp_to_space(param_def, value: float) -> Value:
    if param_def.is_numerical:
        return float(min(max(value, param_def.lower), param_def.upper))
    numeric = [c for c in param_def.choices if not isinstance(c, str)]
    if not numeric:
        return None  # cannot snap onto non-numeric choices
    best = min(numeric, key=lambda c: (abs(float(c) - value), param_def.choices.index(c)))
    return best


def apply_rules_explain(
    rules: RuleSet,
    config: Configuration,
    metrics,
    space: SearchSpace,
) -> tuple[Configuration, dict[str, int]]:
    """Apply one rule pass; also report which rule index fired per parameter.

    Conditions and formulas all read the pre-pass configuration, so the
    outcome does not depend on rule order beyond first-match-wins.
    """
    snapshot = config
    updates: dict[str, Value] = {}
    fired: dict[str, int] = {}
    for rule in rules:
        if rule.parameter in fired or rule.parameter not in space:
            continue
        if not eval_condition(rule.condition, metrics, snapshot):
            continue
        if isinstance(rule.step, Multiply):
            current = snapshot[rule.parameter]
            if isinstance(current, str):
                continue
            value = float(current) * rule.step.factor
        elif isinstance(rule.step, SetToBound):
            value = rule.lower
        else:
            value = _eval_arith(rule.step.expr, snapshot)
        value = min(max(value, rule.lower), rule.upper)
        snapped = _clamp_to_space(space.get(rule.parameter), value)
        if snapped is None:
            continue
        updates[rule.parameter] = snapped
        fired[rule.parameter] = rule.index
    if not updates:
        return config, fired
    merged = dict(config.values)
    merged.update(updates)
    return Configuration(merged), fired


def apply_rules(
    rules: RuleSet,
    config: Configuration,
    metrics,
    space: SearchSpace,
) -> Configuration:
    """One rule pass over the configuration; see apply_rules_explain."""
    updated, _ = apply_rules_explain(rules, config, metrics, space)
    return updated


def expert_init_suggest(
    previous: Configuration,
    metrics,
    rules: RuleSet,
    space: SearchSpace,
    radius: float = NEIGHBORHOOD_RADIUS,
    rng: np.random.Generator | None = None,
) -> Configuration:
    """Rule-update the previous configuration, then sample its neighborhood.

    radius 0 returns the rule-updated configuration itself.
    """
    updated = apply_rules(rules, previous, metrics, space)
    if radius == 0:
        return updated
    if rng is None:
        rng = np.random.default_rng()
    return sample_neighborhood(updated, space, radius, rng)
