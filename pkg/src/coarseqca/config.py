"""Tolerance and resource configuration.

All numerical verdicts are made against a read-only :class:`Tolerances`
instance captured at call time; there is no other global state.  Rank
decisions use relative singular-value thresholds with an explicit
indeterminacy band: a normalized singular value inside
``[tol_rank, GAP_FACTOR * tol_rank]`` raises instead of guessing.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

GAP_FACTOR = 10.0


@dataclass(frozen=True)
class Tolerances:
    tol_alg: float = 1e-9    # algebraic residuals (unitarity, homomorphism, closure)
    tol_rank: float = 1e-8   # relative singular-value threshold for rank decisions
    tol_eq: float = 1e-9     # operator-norm distance for equality of operators
    max_ambient: int | None = None  # ambient cap for algebra solves; None -> env/default

    def ambient_cap(self) -> int:
        if self.max_ambient is not None:
            return self.max_ambient
        return int(os.environ.get("COARSEQCA_MAX_AMBIENT", "64"))


DEFAULT = Tolerances()
