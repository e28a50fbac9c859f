"""Confounding strength needed to explain an ETV value away."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class SensitivityBound:
    etv: float
    support_size: float
    b_lower: float

    def to_dict(self) -> dict:
        return {
            "etv": self.etv,
            "support_size": "inf" if math.isinf(self.support_size) else self.support_size,
            "b_lower": self.b_lower,
        }


def confounding_lower_bound(etv: float, support_size) -> SensitivityBound:
    """Smallest multiplicative confounding strength ``B`` consistent with ``etv``.

    ``B >= 1 + 2 (1 - 1/|Y|) ETV``; an infinite support uses factor 1.
    """
    if not 0.0 <= etv <= 1.0:
        raise ParameterError(f"etv must lie in [0, 1], got {etv}")
    if support_size is None or math.isinf(support_size):
        factor, size = 1.0, math.inf
    else:
        if support_size < 2:
            raise ParameterError("support_size must be >= 2")
        factor, size = 1.0 - 1.0 / support_size, float(support_size)
    return SensitivityBound(float(etv), size, 1.0 + 2.0 * factor * etv)
