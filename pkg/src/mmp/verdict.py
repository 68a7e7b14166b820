from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Optional


@dataclass
class Verdict:
    name: str
    passed: bool
    cutoff: Optional[int] = None
    worst_residual: Any = 0
    witness: Optional[dict] = None
    details: dict = field(default_factory=dict)
    note: str = ""

    def __bool__(self) -> bool:
        return self.passed

    def __post_init__(self):
        if self.cutoff is not None and not self.note:
            self.note = f"certified up to cutoff {self.cutoff}"


def jsonable(x: Any) -> Any:
    """Convert results to JSON-compatible values; rationals become "p/q" strings."""
    if isinstance(x, bool) or x is None or isinstance(x, str):
        return x
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x.numerator)
    if isinstance(x, int):
        return x
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(x, Enum):
        return x.value
    if hasattr(x, "tolist"):
        return jsonable(x.tolist())
    if isinstance(x, dict):
        return {str(k) if not isinstance(k, str) else k: jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if is_dataclass(x):
        return {f.name: jsonable(getattr(x, f.name)) for f in fields(x)
                if not f.name.startswith("_") and f.repr}
    return repr(x)
