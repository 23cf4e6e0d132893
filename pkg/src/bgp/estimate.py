from dataclasses import dataclass, field
from typing import Any

METHODS = ("ode", "closed-form", "simulation")


@dataclass(frozen=True)
class CriticalTimeEstimate:
    """A value of the critical time t_c(K) and where it came from.

    ``uncertainty`` is the blowup bracket half-width for ``ode``, zero for
    ``closed-form`` and the standard error over seeds for ``simulation``.
    """

    K: float
    t_c: float
    method: str
    uncertainty: float = 0.0
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.t_c >= 0.0:
            raise ValueError(f"t_c must be non-negative, got {self.t_c}")
        if not self.uncertainty >= 0.0:
            raise ValueError(f"uncertainty must be non-negative, got {self.uncertainty}")
