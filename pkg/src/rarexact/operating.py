"""Exact operating characteristics: rejection rates, patient benefit, and
profiles over success-rate grids.

Profiles precompute the Hadamard product of the rejection indicator with
the path weights once and reuse it across every grid point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import PathWeightTable, TerminalFunctional
from .numerics import normal_quantile


@dataclass
class AsymptoticRule:
    """Two-sided asymptotic Wald test; kept interface-compatible with the
    exact rules."""

    alpha: float

    kind = "asymptotic"
    certificate = None

    @property
    def z(self) -> float:
        return normal_quantile(1.0 - self.alpha / 2.0)

    def reject(self, t: np.ndarray, s=None) -> np.ndarray:
        return np.abs(t) >= self.z

    def reject_table(self, table: PathWeightTable) -> np.ndarray:
        return self.reject(table.wald_statistics())


def rejection_rate(table: PathWeightTable, rule, theta: tuple[float, float]) -> float:
    """Exact rejection probability of ``rule`` under ``theta``."""
    f = rule.reject_table(table).astype(np.float64)
    return TerminalFunctional(f, table).value(theta)


def _benefit_functionals(table: PathWeightTable):
    _, _, n_c, n_d = table.layer.arrays()
    n = table.n
    return (
        TerminalFunctional(n_c / n, table),
        TerminalFunctional(n_d / n, table),
    )


def patient_benefit(table: PathWeightTable, theta: tuple[float, float]) -> float:
    """Expected proportion of participants allocated to the superior arm;
    exactly 1/2 by convention when the arms are equivalent."""
    tc, td = theta
    if tc == td:
        return 0.5
    frac_c, frac_d = _benefit_functionals(table)
    return (frac_c if tc > td else frac_d).value(theta)


@dataclass
class OcProfile:
    """Rejection rate and patient benefit over a grid of success rates."""

    thetas: list = field(repr=False)
    rejection_rates: np.ndarray = field(repr=False)
    patient_benefits: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.thetas)


def profile(table: PathWeightTable, rule, thetas, meta: dict | None = None) -> OcProfile:
    """Evaluate rejection rate and patient benefit over ``thetas``, reusing
    the precomputed indicator-weight product across the grid."""
    thetas = list(thetas)
    if not thetas:
        raise ValueError("empty evaluation grid")
    f = rule.reject_table(table).astype(np.float64)
    fn = TerminalFunctional(f, table)
    frac_c, frac_d = _benefit_functionals(table)
    rates = np.empty(len(thetas))
    bene = np.empty(len(thetas))
    for i, (tc, td) in enumerate(thetas):
        rates[i] = fn.value((tc, td))
        if tc == td:
            bene[i] = 0.5
        else:
            bene[i] = (frac_c if tc > td else frac_d).value((tc, td))
    info = dict(meta or {})
    info.setdefault("test", getattr(rule, "kind", "unknown"))
    info.setdefault("alpha", getattr(rule, "alpha", None))
    info.update(table.meta if isinstance(table.meta, dict) else {})
    return OcProfile(thetas, rates, bene, info)


def null_diagonal(points: int = 99) -> list[tuple[float, float]]:
    """Evenly spaced null grid ``theta_C = theta_D`` on (0, 1)."""
    vals = np.linspace(0.0, 1.0, points + 2)[1:-1]
    return [(float(v), float(v)) for v in vals]


def power_curves(theta_c_values, step: float = 0.01) -> list[tuple[float, float]]:
    """Curve family: for each anchor rate, sweep the developmental rate
    upward from it."""
    out = []
    for tc in theta_c_values:
        td = np.arange(tc, 1.0 + 1e-12, step)
        out.extend((float(tc), float(min(v, 1.0))) for v in td)
    return out
