from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..io import write_csv

SLACK = 1e-9


@dataclass
class SobolIndexReport:
    """First-order and total Sobol' indices of one scalar function."""

    names: tuple
    first_order: np.ndarray
    total: np.ndarray
    variance: float
    kind: str
    constant: bool = False
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.first_order = np.asarray(self.first_order, dtype=float)
        self.total = np.asarray(self.total, dtype=float)
        self.names = tuple(self.names)

    @classmethod
    def constant_function(cls, names, kind, provenance=None):
        n = len(names)
        return cls(names, np.zeros(n), np.zeros(n), 0.0, kind, True, dict(provenance or {}))

    def bounds_violations(self, slack: float = SLACK) -> list:
        """Human-readable list of broken ``0 <= S_k <= S_k^tot <= 1``, ``sum S_k <= 1``."""
        out = []
        S, T = self.first_order, self.total
        for k, name in enumerate(self.names):
            if S[k] < -slack:
                out.append(f"S[{name}] = {S[k]:.3g} < 0")
            if S[k] > T[k] + slack:
                out.append(f"S[{name}] = {S[k]:.6g} > S_tot = {T[k]:.6g}")
            if T[k] > 1 + slack:
                out.append(f"S_tot[{name}] = {T[k]:.6g} > 1")
        if S.sum() > 1 + slack:
            out.append(f"sum of first-order indices {S.sum():.6g} > 1")
        return out

    def ranking(self, which: str = "total") -> list:
        """Input names by decreasing index; negatives count as 0, ties keep input order."""
        vals = np.clip(self.total if which == "total" else self.first_order, 0.0, None)
        order = sorted(range(len(vals)), key=lambda k: (-vals[k], k))
        return [self.names[k] for k in order]

    def as_dict(self) -> dict:
        return {"kind": self.kind, "variance": self.variance, "constant": self.constant,
                "first_order": dict(zip(self.names, self.first_order.tolist())),
                "total": dict(zip(self.names, self.total.tolist())),
                "provenance": self.provenance}

    def rows(self):
        return [(name, s, t) for name, s, t in zip(self.names, self.first_order, self.total)]

    def to_csv(self, path, meta=None):
        m = {"surrogate": self.kind, "variance": self.variance, "constant": self.constant,
             **self.provenance, **(meta or {})}
        return write_csv(path, ["input", "first_order", "total"], self.rows(), m)
