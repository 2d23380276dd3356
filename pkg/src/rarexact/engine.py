"""Forward computation of the parameter-free path coefficients over the
terminal layer, and evaluation of parameter-dependent expectations.

For every terminal state the coefficient collects the allocation-path
probabilities leading to it; multiplying by the per-arm outcome
likelihood and summing gives any exact operating characteristic.  The
sweep keeps two rolling layers, works entirely in log space, and visits
edges in a fixed order (canonical state order, control before
developmental arm, success before failure) so results are bit-stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import log_binom, logsumexp_fixed
from .policies import EqualAllocation, Policy
from .states import Layer, TrialState, layer as make_layer

LN2 = float(np.log(2.0))


@dataclass
class PathWeightTable:
    """Log-domain path coefficients for every state of one layer."""

    layer: Layer
    log_g: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    _wald: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.layer.t

    @property
    def burn_in(self) -> int:
        return self.layer.b

    def normalization_error(self) -> float:
        """Deviation of ``sum(g) * 2**-n`` from one (zero for any policy)."""
        total = logsumexp_fixed(self.log_g)
        return abs(np.exp(total - self.n * LN2) - 1.0)

    def wald_statistics(self) -> np.ndarray:
        from .wald import layer_wald_statistics

        if self._wald is None:
            self._wald = layer_wald_statistics(self.layer)
        return self._wald

    def successes(self) -> np.ndarray:
        s_c, s_d, _, _ = self.layer.arrays()
        return s_c + s_d


def _symmetrize(log_g: np.ndarray, lay: Layer) -> np.ndarray:
    """Average a table with its arm-swapped image in log space; the result
    is exactly swap-invariant, removing last-ulp asymmetry from the sweep."""
    perm = lay.swap_permutation()
    other = log_g[perm]
    hi = np.maximum(log_g, other)
    lo = np.minimum(log_g, other)
    out = np.full_like(log_g, -np.inf)
    mask = hi > -np.inf
    out[mask] = hi[mask] + np.log1p(np.exp(lo[mask] - hi[mask])) - LN2
    return out


def _burn_in_table(b: int) -> np.ndarray:
    """Log weights at epoch ``2b``: the number of outcome paths through the
    balanced burn-in is a product of binomial coefficients."""
    lb = log_binom(b, np.arange(b + 1))
    return np.add.outer(lb, lb).ravel()


def forward_g(policy: Policy, n: int | None = None, b: int | None = None) -> PathWeightTable:
    """Terminal path-weight table of ``policy`` over horizon ``n``.

    Starts from the balanced burn-in layer and pushes each state's weight
    to all four successors, with the allocation probability attached to the
    arm and both outcome branches receiving the full arm mass (outcome
    likelihoods enter later, through the evaluation weights).
    """
    n = policy.n if n is None else n
    b = policy.burn_in if b is None else b
    if n < 2 * b:
        raise ValueError("horizon shorter than the burn-in")
    if isinstance(policy, EqualAllocation):
        return equal_allocation_g(n, b)

    cur = _burn_in_table(b)
    for t in range(2 * b, n):
        src = make_layer(t, b, n)
        dst = make_layer(t + 1, b, n)
        lq, l1q = policy.layer_log_probs(src)
        if np.any(lq > 1e-9) or np.any(l1q > 1e-9) or np.any(np.isnan(lq)):
            raise ValueError(f"policy probabilities outside [0, 1] at epoch {t}")
        nxt = np.full(dst.size, -np.inf)
        for n_c, n_d, sl in src.blocks():
            shape = (n_c + 1, n_d + 1)
            s = cur[sl].reshape(shape)
            to_c = s + lq[sl].reshape(shape)
            to_d = s + l1q[sl].reshape(shape)
            dc = nxt[dst.block_slice(n_c + 1)].reshape(n_c + 2, n_d + 1)
            np.logaddexp(dc[1:], to_c, out=dc[1:])
            np.logaddexp(dc[:-1], to_c, out=dc[:-1])
            dd = nxt[dst.block_slice(n_c)].reshape(n_c + 1, n_d + 2)
            np.logaddexp(dd[:, 1:], to_d, out=dd[:, 1:])
            np.logaddexp(dd[:, :-1], to_d, out=dd[:, :-1])
        cur = nxt

    lay = make_layer(n, b, n)
    if policy.is_symmetric:
        cur = _symmetrize(cur, lay)
    return PathWeightTable(lay, cur, meta=policy.descriptor())


def equal_allocation_g(n: int, b: int = 0) -> PathWeightTable:
    """Closed-form terminal table of the fixed 50/50 design: weights
    concentrate on the balanced split and count the per-arm outcome paths."""
    if n % 2 != 0:
        raise ValueError("equal allocation requires an even horizon")
    if b > n // 2:
        raise ValueError("burn-in exceeds the balanced group size")
    lay = make_layer(n, b, n)
    log_g = np.full(lay.size, -np.inf)
    half = n // 2
    lb = log_binom(half, np.arange(half + 1))
    log_g[lay.block_slice(half)] = np.add.outer(lb, lb).ravel()
    return PathWeightTable(lay, log_g, meta={"kind": "EqualAllocation", "n": n, "burn_in": b})


def _count_log_prob(count: np.ndarray, prob: float) -> np.ndarray | float:
    """``count * ln(prob)`` with the convention ``0 * ln 0 = 0``."""
    if prob == 0.0:
        return np.where(count == 0, 0.0, -np.inf)
    return count * np.log(prob)


def log_likelihood_weight(x: TrialState, theta: tuple[float, float]) -> float:
    """Log outcome likelihood of a state: each success contributes
    ``ln(theta_a)`` and each failure ``ln(1 - theta_a)``."""
    tc, td = theta
    parts = [
        _count_log_prob(np.asarray(x.s_c), tc),
        _count_log_prob(np.asarray(x.n_c - x.s_c), 1.0 - tc),
        _count_log_prob(np.asarray(x.s_d), td),
        _count_log_prob(np.asarray(x.n_d - x.s_d), 1.0 - td),
    ]
    return float(sum(parts))


def layer_log_likelihood(lay: Layer, theta: tuple[float, float]) -> np.ndarray:
    """Vectorized :func:`log_likelihood_weight` over a layer."""
    tc, td = theta
    s_c, s_d, n_c, n_d = lay.arrays()
    return (
        _count_log_prob(s_c, tc)
        + _count_log_prob(n_c - s_c, 1.0 - tc)
        + _count_log_prob(s_d, td)
        + _count_log_prob(n_d - s_d, 1.0 - td)
    )


class TerminalFunctional:
    """Precomputed Hadamard product of a terminal function with the path
    weights, reusable across evaluation parameters.

    Negative function values are carried in a separate log-domain part, so
    only two stable reductions are needed per parameter point.
    """

    def __init__(self, f: np.ndarray, table: PathWeightTable):
        f = np.asarray(f, dtype=np.float64)
        if f.shape != table.log_g.shape:
            raise ValueError("function/table dimension mismatch")
        if not np.all(np.isfinite(f)):
            raise ValueError("terminal function must be finite")
        self.layer = table.layer
        with np.errstate(divide="ignore"):
            log_af = np.log(np.abs(f))
        self._log_pos = np.where(f > 0, log_af + table.log_g, -np.inf)
        self._log_neg = np.where(f < 0, log_af + table.log_g, -np.inf)
        self._has_neg = bool(np.any(f < 0))

    def value(self, theta: tuple[float, float]) -> float:
        ll = layer_log_likelihood(self.layer, theta)
        total = np.exp(logsumexp_fixed(self._log_pos + ll))
        if self._has_neg:
            total -= np.exp(logsumexp_fixed(self._log_neg + ll))
        return float(total)


def oc_value(f: np.ndarray, table: PathWeightTable, theta: tuple[float, float]) -> float:
    """Exact expectation of a terminal function under ``theta``."""
    return TerminalFunctional(f, table).value(theta)
