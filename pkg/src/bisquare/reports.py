"""Shared report record for empirical-constant measurements."""
from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class EstimateReport:
    """Sup of tested ratios for one estimate, with the witness achieving it.

    The constant is an empirical lower bound for the true best constant;
    extra holds measurement-specific diagnostics (tail bounds, per-level
    tables, family sizes).
    """

    assumption_id: str
    empirical_constant: float
    sample_count: int
    worst_case_witness: object = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def default(o):
            try:
                return o.item()
            except AttributeError:
                return repr(o)
        return json.dumps({
            "assumption_id": self.assumption_id,
            "constant": self.empirical_constant,
            "samples": self.sample_count,
            "witness": self.worst_case_witness,
            "extra": self.extra,
        }, default=default)
