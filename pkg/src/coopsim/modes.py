"""Per-vehicle coordination modes shared by the vehicle stack, the RSU and the wire format."""

from __future__ import annotations

import enum


class CoordinationMode(enum.Enum):
    """Coordination state of one vehicle as seen by the roadside unit.

    AUTO: the vehicle plans for itself.
    C_SLOW: coordinated slow-down; the RSU overrides speeds with zero.
    C_FAST: coordinated speed-up; the RSU overrides speeds with the road maximum.
    """

    AUTO = "auto"
    C_SLOW = "c_slow"
    C_FAST = "c_fast"

    @property
    def is_coordinated(self) -> bool:
        return self is not CoordinationMode.AUTO
