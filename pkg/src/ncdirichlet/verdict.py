"""Outcome records for sampled and exact checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .algebra import Element

PASS = "PASS"
FAIL = "FAIL"
SAMPLED_PASS = "SAMPLED-PASS"


def _plain(value):
    """Convert numpy scalars/arrays and Elements into JSON-friendly values."""
    if isinstance(value, Element):
        from .serialization import element_to_json
        return element_to_json(value)
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return [[float(v.real), float(v.imag)] for v in value.reshape(-1)]
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


@dataclass
class Verdict:
    """Result of a check.

    ``margin`` is the smallest (normalized) slack observed; negative means
    violated.  A FAIL always carries a ``witness``.
    """

    status: str
    margin: float
    witness: Optional[Any] = None
    samples: int = 0
    seed: Optional[int] = None
    method: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status in (PASS, SAMPLED_PASS)

    @property
    def failed(self) -> bool:
        return self.status == FAIL

    def to_json(self) -> dict:
        out = {"status": self.status, "margin": _plain(float(self.margin)),
               "samples": int(self.samples), "seed": self.seed, "method": self.method}
        if self.witness is not None:
            out["witness"] = _plain(self.witness)
        if self.metadata:
            out["metadata"] = _plain(self.metadata)
        return out


def combine(verdicts, method: str = "combined") -> Verdict:
    """Worst-case merge: any FAIL fails, otherwise SAMPLED-PASS if any part was sampled."""
    verdicts = list(verdicts)
    fails = [v for v in verdicts if v.failed]
    if fails:
        worst = min(fails, key=lambda v: v.margin)
        return Verdict(FAIL, worst.margin, worst.witness, sum(v.samples for v in verdicts),
                       worst.seed, method, {"failed_part": worst.method})
    status = SAMPLED_PASS if any(v.status == SAMPLED_PASS for v in verdicts) else PASS
    margin = min((v.margin for v in verdicts), default=0.0)
    return Verdict(status, margin, None, sum(v.samples for v in verdicts),
                   verdicts[0].seed if verdicts else None, method)
