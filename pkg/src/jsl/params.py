from __future__ import annotations

import math
from dataclasses import dataclass, asdict


SOLITON_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Jump-length rate ``lam``, modulation exponent ``n`` and event rate scale."""

    lam: float = 1.0
    n: float = 0.0
    base_rate: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be finite and > 0, got {self.lam}")
        if not math.isfinite(self.n):
            raise ValueError(f"n must be finite, got {self.n}")
        if not (math.isfinite(self.base_rate) and self.base_rate > 0):
            raise ValueError(f"base_rate must be finite and > 0, got {self.base_rate}")

    @classmethod
    def from_m(cls, m: float, base_rate: float = 1.0) -> "ModelParams":
        """Parameters on the soliton line lam = m = 2 - n."""
        return cls(lam=float(m), n=2.0 - float(m), base_rate=base_rate)

    def soliton_constrained(self) -> bool:
        return self.lam > 0 and abs(self.lam - (2.0 - self.n)) < SOLITON_TOL

    @property
    def m(self) -> float:
        """Profile exponent of the exact traveling density (only meaningful on the soliton line)."""
        return 2.0 - self.n

    def to_dict(self) -> dict:
        return asdict(self)
