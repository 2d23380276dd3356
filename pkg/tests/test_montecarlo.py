import numpy as np
import pytest
from scipy.stats import chisquare

from rarexact import (
    BayesianRar,
    DbcdNeyman,
    EqualAllocation,
    TrialState,
    forward_g,
    layer,
    permuted_block_sequence,
    randomization_rejection_rate,
    randomization_test,
    simulate_terminals,
    simulate_trial,
)
from rarexact.montecarlo import make_rng


def test_simulate_certain_outcomes():
    hist = simulate_trial(BayesianRar(12, 2), (1.0, 1.0), seed=1)
    assert np.all(hist.outcomes == 1)
    st = hist.terminal_state()
    assert st.successes == 12
    # alternating burn-in, control first
    assert hist.arms[:4].tolist() == [0, 1, 0, 1]


def test_simulate_equal_allocation_balance():
    pol = EqualAllocation(50, 6)
    for seed in range(5):
        hist = simulate_trial(pol, (0.4, 0.7), seed=seed)
        st = hist.terminal_state()
        assert st.n_c == st.n_d == 25


def test_control_proportion_path():
    hist = simulate_trial(DbcdNeyman(20, 3), (0.5, 0.5), seed=9)
    path = hist.control_proportion_path()
    assert path.shape == (20,)
    assert path[0] == 1.0          # first participant goes to control
    n_c = np.cumsum(hist.arms == 0)
    assert path[-1] == pytest.approx(n_c[-1] / 20)


def test_permuted_blocks():
    arms = permuted_block_sequence(10, 10, seed_or_rng=3)
    assert (arms == 0).sum() == 5
    arms = permuted_block_sequence(40, 10, seed_or_rng=4)
    for k in range(1, 5):
        assert (arms[: 10 * k] == 0).sum() == 5 * k
    # trailing partial block stays balanced
    arms = permuted_block_sequence(17, 10, seed_or_rng=5)
    assert (arms[10:] == 0).sum() in (3, 4)
    with pytest.raises(ValueError):
        permuted_block_sequence(10, 7, seed_or_rng=0)


def test_permuted_block_arrangements_uniform():
    # all 6 balanced arrangements of a block of 4 appear uniformly
    counts = {}
    rng = make_rng(123)
    for _ in range(20_000):
        key = tuple(permuted_block_sequence(4, 4, seed_or_rng=rng))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 6
    res = chisquare(list(counts.values()))
    assert res.pvalue > 0.001


def test_reproducibility_and_substreams():
    pol = DbcdNeyman(20, 2)
    a = simulate_trial(pol, (0.4, 0.6), seed=17, stream=5)
    b = simulate_trial(pol, (0.4, 0.6), seed=17, stream=5)
    assert np.array_equal(a.arms, b.arms) and np.array_equal(a.outcomes, b.outcomes)
    c = simulate_trial(pol, (0.4, 0.6), seed=17, stream=6)
    assert not (np.array_equal(a.arms, c.arms) and np.array_equal(a.outcomes, c.outcomes))
    # batch simulation's per-trial substreams match the scalar path
    s_c, s_d, n_c = simulate_terminals(pol, (0.4, 0.6), sims=8, seed=17)
    for i in range(8):
        st = simulate_trial(pol, (0.4, 0.6), seed=17, stream=i).terminal_state()
        assert (st.s_c, st.s_d, st.n_c) == (s_c[i], s_d[i], n_c[i])


def test_batch_chunking_invariance():
    pol = BayesianRar(10, 1)
    a = simulate_terminals(pol, (0.3, 0.7), sims=50, seed=3, batch=7)
    b = simulate_terminals(pol, (0.3, 0.7), sims=50, seed=3, batch=50)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_empirical_frequencies_match_exact_distribution():
    pol = BayesianRar(10, 1)
    table = forward_g(pol)
    sims = 40_000
    s_c, s_d, n_c = simulate_terminals(pol, (0.5, 0.5), sims=sims, seed=77)
    lay = table.layer
    idx = lay.offsets[n_c - lay.n_c_min] + s_c * (10 - n_c + 1) + s_d
    counts = np.bincount(idx, minlength=lay.size)
    probs = np.exp(table.log_g - 10 * np.log(2.0))
    # pool cells with small expectation for a valid chi-square
    order = np.argsort(-probs)
    pooled_counts, pooled_probs = [], []
    acc_c = acc_p = 0.0
    for i in order:
        acc_c += counts[i]
        acc_p += probs[i]
        if acc_p * sims >= 10:
            pooled_counts.append(acc_c)
            pooled_probs.append(acc_p)
            acc_c = acc_p = 0.0
    pooled_counts[-1] += acc_c
    pooled_probs[-1] += acc_p
    expected = np.asarray(pooled_probs)
    expected = expected / expected.sum() * sims
    res = chisquare(pooled_counts, expected)
    assert res.pvalue > 0.001


def test_randomization_test_degenerate_outcomes():
    pol = EqualAllocation(20, 2)
    hist = simulate_trial(pol, (0.0, 0.0), seed=5)
    assert np.all(hist.outcomes == 0)
    reject, p = randomization_test(hist, pol, reps=200, alpha=0.05, seed=6)
    assert p == 1.0 and not reject


def test_randomization_test_requires_reps():
    pol = EqualAllocation(10, 1)
    hist = simulate_trial(pol, (0.5, 0.5), seed=1)
    with pytest.raises(ValueError):
        randomization_test(hist, pol, reps=50, alpha=0.05, seed=1)


def test_randomization_ratetest_reproducible():
    pol = DbcdNeyman(16, 2)
    a = randomization_rejection_rate(pol, (0.4, 0.8), sims=120, reps=120, alpha=0.05, seed=42)
    b = randomization_rejection_rate(pol, (0.4, 0.8), sims=120, reps=120, alpha=0.05, seed=42)
    assert a == b
    assert a.half_width == pytest.approx(
        1.96 * np.sqrt(a.estimate * (1 - a.estimate) / 120), abs=1e-12
    )


def test_randomization_null_within_ci():
    pol = EqualAllocation(20, 2)
    est = randomization_rejection_rate(pol, (0.4, 0.4), sims=400, reps=199, alpha=0.05, seed=2024)
    assert abs(est.estimate - 0.05) <= max(est.half_width, 0.03)


def test_exchangeability_of_rerandomized_statistics():
    # under the null the observed statistic is exchangeable with the
    # re-randomization draws: its p-value is approximately uniform
    pol = DbcdNeyman(20, 2)
    pvals = []
    for i in range(300):
        hist = simulate_trial(pol, (0.5, 0.5), seed=99, stream=i)
        _, p = randomization_test(hist, pol, reps=199, alpha=0.05, seed=99, stream=10_000 + i)
        pvals.append(p)
    # coarse uniformity check on quartiles
    qs = np.quantile(pvals, [0.25, 0.5, 0.75])
    assert np.all(np.abs(qs - [0.25, 0.5, 0.75]) < 0.12)
