"""Finite-difference verification of analytic gradients.

Central differences are evaluated on a seeded random subsample of each
parameter block (at least 200 coordinates, or the whole block if smaller).
Errors are scaled relative: |analytic - numeric| / max(1, |analytic|,
|numeric|), so coordinates with O(1) gradients are compared relatively and
tiny gradients absolutely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckResult:
    max_error: float
    per_block: dict[str, float] = field(default_factory=dict)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_error < tol


def grad_check(loss_fn, params: dict[str, np.ndarray], analytic: dict[str, np.ndarray],
               eps: float = 1e-5, n_coords: int = 200, seed: int = 0) -> GradCheckResult:
    """Compare analytic gradients against fp64 central differences.

    loss_fn(params) must return a scalar and is re-evaluated with perturbed
    parameter blocks; params are modified in place during probing and
    restored afterwards.
    """
    rng = np.random.default_rng(seed)
    per_block = {}
    for key, p in params.items():
        if p.dtype != np.float64:
            raise ValueError(f"grad_check requires float64 params, {key!r} is {p.dtype}")
        grad = analytic[key]
        flat = p.reshape(-1)
        size = flat.shape[0]
        coords = np.arange(size) if size <= n_coords else rng.choice(size, n_coords, replace=False)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            up = loss_fn(params)
            flat[c] = orig - eps
            down = loss_fn(params)
            flat[c] = orig
            numeric = (up - down) / (2.0 * eps)
            a = float(grad.reshape(-1)[c])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
        per_block[key] = worst
    return GradCheckResult(max_error=max(per_block.values()), per_block=per_block)
