"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_err: float
    tolerance: float
    checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def grad_check(fn, inputs, tolerance: float = 1e-4, h: float = 1e-6,
               max_probe: int = 64, rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic gradients of a scalar-valued function against
    central finite differences at float64.

    `fn` takes len(inputs) Tensors and returns a scalar Tensor; `inputs`
    are numpy arrays.  At most `max_probe` elements per input are probed
    (all of them for small inputs).
    """
    rng = rng or np.random.default_rng(0)
    arrays = [np.asarray(a, dtype=np.float64) for a in inputs]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(*tensors)
    out.backward()

    max_rel = 0.0
    checked = 0
    for ti, a in enumerate(arrays):
        analytic = tensors[ti].grad
        if analytic is None:
            analytic = np.zeros_like(a)
        flat_idx = np.arange(a.size)
        if a.size > max_probe:
            flat_idx = rng.choice(a.size, size=max_probe, replace=False)
        for idx in flat_idx:
            step = h * max(1.0, abs(a.flat[idx]))
            probes = []
            for sgn in (1.0, -1.0):
                pert = [arr.copy() for arr in arrays]
                pert[ti].flat[idx] += sgn * step
                val = fn(*[Tensor(p) for p in pert])
                probes.append(float(val.data))
            numeric = (probes[0] - probes[1]) / (2.0 * step)
            an = float(analytic.flat[idx])
            rel = abs(an - numeric) / max(1.0, abs(an), abs(numeric))
            max_rel = max(max_rel, rel)
            checked += 1
    return GradCheckReport(max_rel_err=max_rel, tolerance=tolerance, checked=checked)
