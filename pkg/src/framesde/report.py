"""Verification report container and its JSON wire format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any


def _clean(value):
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "tolist"):
        return _clean(value.tolist())
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


@dataclass
class Entry:
    """One named check.

    ``passed`` is never stored independently: it is recomputed from the
    numbers through ``rule`` so a report cannot disagree with itself.
    """

    name: str
    value: Any
    target: Any = None
    tol: float | None = None
    se: float | None = None
    rule: str = "abs"
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return evaluate_rule(self.rule, self.value, self.target, self.tol, self.se)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "value": self.value,
            "target": self.target,
            "tol": self.tol,
            "se": self.se,
            "pass": self.passed,
        }
        if self.details:
            out["details"] = self.details
        return _clean(out)


def evaluate_rule(rule, value, target, tol, se) -> bool:
    """Pass/fail as a pure function of the entry's numbers.

    Rules:
      abs   |value - target| <= tol (+ 3 se when a standard error is present)
      le    value <= target (+ tol)
      ge    value >= target (- tol)
      gt    value > target (infinite values allowed)
      range target[0] - tol <= value <= target[1] + tol
      true  bool(value)
    """
    if rule == "true":
        return bool(value)
    tol = 0.0 if tol is None else float(tol)
    slack = tol + (3.0 * float(se) if se is not None else 0.0)
    if rule == "abs":
        v = _as_list(value)
        t = _as_list(target)
        if len(t) == 1 and len(v) > 1:
            t = t * len(v)
        return all(_finite(a) and abs(a - b) <= slack for a, b in zip(v, t))
    if rule == "le":
        return all(not math.isnan(a) and a <= float(target) + slack for a in _as_list(value))
    if rule == "ge":
        return all(_finite(a) and a >= float(target) - slack for a in _as_list(value))
    if rule == "gt":
        return all(not math.isnan(a) and a > float(target) for a in _as_list(value))
    if rule == "range":
        lo, hi = target
        return all(_finite(a) and lo - slack <= a <= hi + slack for a in _as_list(value))
    raise ValueError(f"unknown rule {rule!r}")


def _as_list(x):
    if hasattr(x, "tolist"):
        x = x.tolist()
    if isinstance(x, (list, tuple)):
        return [float(v) for v in x]
    return [float(x)]


def _finite(x) -> bool:
    return math.isfinite(x)


@dataclass
class VerificationReport:
    entries: list[Entry] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, name, value, target=None, tol=None, se=None, rule="abs", **details) -> Entry:
        entry = Entry(name, value, target, tol, se, rule, details)
        self.entries.append(entry)
        return entry

    def extend(self, other: "VerificationReport") -> "VerificationReport":
        self.entries.extend(other.entries)
        return self

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def __getitem__(self, name: str) -> Entry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries], "meta": _clean(self.meta)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = []
        for e in self.entries:
            flag = "PASS" if e.passed else "FAIL"
            lines.append(f"[{flag}] {e.name}: value={_clean(e.value)} target={_clean(e.target)}")
        return "\n".join(lines)
