"""Allocation policies: the probability of assigning the next participant
to the control arm, as a function of the current trial state.

Every policy is defined for epochs ``t >= 2b``; the first ``2b``
participants are always allocated by the canonical alternating burn-in,
which the engine and simulator handle directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import gammaln_table, log_prob_beta_greater
from .states import Layer, TrialState, layer as make_layer

# Allocation probabilities are kept away from 0 and 1 so no state becomes
# absorbing and every log weight stays finite.
DBCD_CLIP = (0.01, 0.99)


def neyman_target(theta_c: float, theta_d: float) -> float:
    """Allocation proportion to control that minimizes the variance of the
    difference-in-means estimate (proportional to per-arm standard
    deviations)."""
    if not (0.0 < theta_c < 1.0 and 0.0 < theta_d < 1.0):
        raise ValueError("neyman_target requires rates strictly inside (0, 1)")
    sc = np.sqrt(theta_c * (1.0 - theta_c))
    sd = np.sqrt(theta_d * (1.0 - theta_d))
    return float(sc / (sc + sd))


def _shrunk_estimates(s_c, s_d, n_c, n_d):
    """Per-arm success-rate estimates shrunk half a success toward 1/2,
    keeping them strictly inside (0, 1) so the targeting map is defined."""
    tc = (s_c + 0.5) / (n_c + 1.0)
    td = (s_d + 0.5) / (n_d + 1.0)
    return tc, td


def _dbcd_alloc(rho, r, gamma):
    """Biased-coin allocation function steering the realized proportion
    ``r`` toward the target ``rho``."""
    w1 = rho * (rho / r) ** gamma
    w0 = (1.0 - rho) * ((1.0 - rho) / (1.0 - r)) ** gamma
    return w1 / (w1 + w0)


@dataclass(frozen=True)
class Policy:
    """Base class; concrete policies implement :meth:`control_prob` and the
    vectorized :meth:`layer_control_probs`."""

    n: int
    burn_in: int

    is_symmetric = False

    def control_prob(self, state: TrialState) -> float:
        raise NotImplementedError

    def layer_control_probs(self, lay: Layer) -> np.ndarray:
        """Allocation probabilities for every state of ``lay`` in canonical
        order; only called for epochs ``2b <= t < n``."""
        raise NotImplementedError

    def layer_log_probs(self, lay: Layer) -> tuple[np.ndarray, np.ndarray]:
        """``(log q, log(1 - q))`` per state; subclasses override when the
        tails need more accuracy than ``log(q)`` provides."""
        q = self.layer_control_probs(lay)
        with np.errstate(divide="ignore"):
            return np.log(q), np.log1p(-q)

    def descriptor(self) -> dict:
        return {"kind": type(self).__name__, "n": self.n, "burn_in": self.burn_in}


@dataclass(frozen=True)
class EqualAllocation(Policy):
    """Fixed 50/50 design; the engine uses its closed-form terminal weights,
    so the per-state probability is only a sentinel."""

    is_symmetric = True

    def control_prob(self, state: TrialState) -> float:
        return 0.5

    def layer_control_probs(self, lay: Layer) -> np.ndarray:
        return np.full(lay.size, 0.5)


@dataclass(frozen=True)
class DbcdNeyman(Policy):
    """Doubly adaptive biased coin targeting the Neyman proportion."""

    gamma: float = 2.0

    is_symmetric = True

    def control_prob(self, state: TrialState) -> float:
        t = state.epoch
        if state.n_c == 0 or state.n_d == 0:
            raise ValueError("DBCD allocation requires both group sizes positive")
        tc, td = _shrunk_estimates(state.s_c, state.s_d, state.n_c, state.n_d)
        rho = neyman_target(tc, td)
        q = _dbcd_alloc(rho, state.n_c / t, self.gamma)
        return float(np.clip(q, *DBCD_CLIP))

    def layer_control_probs(self, lay: Layer) -> np.ndarray:
        s_c, s_d, n_c, n_d = lay.arrays()
        tc, td = _shrunk_estimates(s_c, s_d, n_c, n_d)
        sc = np.sqrt(tc * (1.0 - tc))
        sd = np.sqrt(td * (1.0 - td))
        rho = sc / (sc + sd)
        q = _dbcd_alloc(rho, n_c / lay.t, self.gamma)
        return np.clip(q, *DBCD_CLIP)

    def descriptor(self) -> dict:
        return dict(super().descriptor(), gamma=self.gamma)


@dataclass(frozen=True)
class TemperedDbcdNeyman(DbcdNeyman):
    """DBCD Neyman allocation tempered to never favor the arm currently
    estimated inferior: outside the agreeing branches the target is 1/2."""

    is_symmetric = True

    def control_prob(self, state: TrialState) -> float:
        q = super().control_prob(state)
        tc, td = _shrunk_estimates(state.s_c, state.s_d, state.n_c, state.n_d)
        if (q > 0.5 and tc > td) or (q < 0.5 and td > tc):
            return q
        return 0.5

    def layer_control_probs(self, lay: Layer) -> np.ndarray:
        q = super().layer_control_probs(lay)
        s_c, s_d, n_c, n_d = lay.arrays()
        tc, td = _shrunk_estimates(s_c, s_d, n_c, n_d)
        keep = ((q > 0.5) & (tc > td)) | ((q < 0.5) & (td > tc))
        return np.where(keep, q, 0.5)


@dataclass(frozen=True)
class BayesianRar(Policy):
    """Power-tuned posterior probability that control is the better arm,
    under independent uniform priors.

    The tuning exponent is ``u / (2n)`` with ``u`` the one-based index of
    the participant being allocated (the state epoch plus one).
    """

    def _exponent(self, epoch: int) -> float:
        return (epoch + 1) / (2.0 * self.n)

    is_symmetric = True

    def control_prob(self, state: TrialState) -> float:
        lp, ls = log_prob_beta_greater(
            state.s_c + 1, state.n_c - state.s_c + 1,
            state.s_d + 1, state.n_d - state.s_d + 1,
        )
        e = self._exponent(state.epoch)
        a, c = e * lp, e * ls
        m = np.logaddexp(a, c)
        return float(np.exp(a - m))

    def layer_log_probs(self, lay: Layer) -> tuple[np.ndarray, np.ndarray]:
        log_p, log_s = _posterior_log_probs(lay)
        e = self._exponent(lay.t)
        a = e * log_p
        c = e * log_s
        m = np.logaddexp(a, c)
        return a - m, c - m

    def layer_control_probs(self, lay: Layer) -> np.ndarray:
        return np.exp(self.layer_log_probs(lay)[0])


def _posterior_log_probs(lay: Layer) -> tuple[np.ndarray, np.ndarray]:
    """``(ln P, ln(1 - P))`` with ``P = P(theta_C > theta_D | state)`` under
    uniform priors, for every state of a layer.

    Starting from the closed form for zero control successes, rows are
    filled by the exact two-term recurrence that moves one control success
    from the failure count, batched across all blocks sharing the row index.
    """
    t = lay.t
    g = gammaln_table(2 * t + 8)
    s_c, s_d, n_c, _ = lay.arrays()

    # success-major ordering: all rows with the same s_c are contiguous
    order = np.lexsort((s_d, n_c, s_c))
    sm_n_c = n_c[order]
    sm_s_d = s_d[order]
    seg_start = np.searchsorted(s_c[order], np.arange(t + 2))

    def lbeta(a, b):
        return g[a] + g[b] - g[a + b]

    p = np.empty(lay.size)
    # row s_c = 0: P = B(a2, b2 + n_c + 1) / B(a2, b2)
    sl = slice(seg_start[0], seg_start[1])
    a2 = sm_s_d[sl] + 1
    b2 = t - sm_n_c[sl] - sm_s_d[sl] + 1
    p[sl] = np.exp(lbeta(a2, b2 + sm_n_c[sl] + 1) - lbeta(a2, b2))

    max_sc = int(s_c.max()) if lay.size else 0
    for k in range(max_sc):
        dst = slice(seg_start[k + 1], seg_start[k + 2])
        if dst.start == dst.stop:
            break
        # source: the tail of row k restricted to blocks with n_c >= k + 1
        src = slice(seg_start[k + 1] - (dst.stop - dst.start), seg_start[k + 1])
        ncv = sm_n_c[dst]
        sdv = sm_s_d[dst]
        a2 = sdv + 1
        b2 = (t - ncv) - sdv + 1
        lb2 = lbeta(a2, b2)
        a1, b1 = k + 1, ncv - k + 1
        step_a = np.exp(lbeta(a1 + a2, b1 + b2) - np.log(a1) - lbeta(a1, b1) - lb2)
        a1p, b1p = k + 2, ncv - k
        step_b = np.exp(lbeta(a1p + a2, b1p + b2) - np.log(b1p) - lbeta(a1p, b1p) - lb2)
        p[dst] = p[src] + step_a + step_b

    np.clip(p, 0.0, 1.0, out=p)
    out_p = np.empty(lay.size)
    out_p[order] = p
    with np.errstate(divide="ignore"):
        return np.log(out_p), np.log1p(-out_p)


@dataclass(frozen=True)
class PolicyTable:
    """Dense per-layer action codes of an optimized design.

    Codes: ``0 -> 1 - p``, ``1 -> 1/2``, ``2 -> p``; layers before the end
    of the burn-in carry the sentinel ``-1``.
    """

    n: int
    burn_in: int
    p: float
    codes: tuple = field(repr=False)  # one int8 array per epoch 0 .. n-1

    BURN_IN_CODE = -1

    def __post_init__(self):
        if not 0.5 <= self.p <= 1.0:
            raise ValueError("maximum randomized allocation rate must lie in [0.5, 1]")
        if len(self.codes) != self.n:
            raise ValueError("need one code array per epoch 0 .. n-1")

    @property
    def action_probs(self) -> np.ndarray:
        return np.array([1.0 - self.p, 0.5, self.p])

    def probs_for_epoch(self, t: int) -> np.ndarray:
        """Control-allocation probabilities for every state of layer ``t``."""
        codes = self.codes[t]
        if np.any(codes == self.BURN_IN_CODE):
            raise ValueError(f"epoch {t} is inside the burn-in")
        return self.action_probs[codes]

    def __eq__(self, other):
        if not isinstance(other, PolicyTable):
            return NotImplemented
        return (
            (self.n, self.burn_in, self.p) == (other.n, other.burn_in, other.p)
            and all(np.array_equal(a, b) for a, b in zip(self.codes, other.codes))
        )


@dataclass(frozen=True)
class TablePolicy(Policy):
    """Policy backed by a :class:`PolicyTable` lookup."""

    table: PolicyTable = None

    def __post_init__(self):
        if self.table is None:
            raise ValueError("TablePolicy requires a table")
        if (self.n, self.burn_in) != (self.table.n, self.table.burn_in):
            raise ValueError("table horizon/burn-in mismatch")

    def control_prob(self, state: TrialState) -> float:
        lay = make_layer(state.epoch, self.burn_in, self.n)
        return float(self.table.probs_for_epoch(state.epoch)[lay.index(state)])

    def layer_control_probs(self, lay: Layer) -> np.ndarray:
        if lay.b != self.burn_in:
            raise ValueError("layer burn-in does not match the table")
        return self.table.probs_for_epoch(lay.t)

    def descriptor(self) -> dict:
        return dict(super().descriptor(), p=self.table.p)


def alloc_prob(policy: Policy, state: TrialState) -> float:
    """Dispatch the per-state allocation probability of ``policy``."""
    if state.epoch < 2 * policy.burn_in:
        raise ValueError("states inside the burn-in are allocated canonically")
    return policy.control_prob(state)
