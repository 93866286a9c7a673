import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oasis.siren import SirenConfig, adjust_batch, brute_force_oracle

EXACT = SirenConfig(exact_mode=True)

# frozen output of brute_force_oracle on default_rng(20240601).normal(size=(6, 5))
GOLDEN_GRADS = np.array([
    [0.6479062041731867, 0.4693207943802901, -0.6430206107408429, -1.1782586485051316, -0.1446904068952663],
    [1.2034583961932943, 1.333583812903236, 0.9083014032879105, 0.34656442984553604, 1.6000346749383478],
    [1.2328398158997746, -0.22031750392712676, -1.061964641201837, -0.36456878996907954, -0.42001856219517336],
    [0.6875091126951889, -1.8991159625601923, -0.19136868930570952, 1.6712221291321379, -0.9202837558478939],
    [-0.7584636198504452, -0.08426070436959497, -1.4178210869627719, -0.1296129934270962, -0.015652895541861434],
    [-0.004655182959846793, -0.9885139058919145, -0.36583041215273976, 0.6538175542587453, -0.7145507176945846],
])
GOLDEN_ADJUSTED = [2.9416306674821158, 9.70771116534193, 3.1399202924947067,
                   7.7558377907148985, 3.7668367871063886, 1.468549764965819]
GOLDEN_PICKS = [3, 1, 0, 4, 2, 5]


def _random_batch(rng, n, dim=6):
    g = rng.normal(size=(n, dim))
    return (g ** 2).sum(axis=1), g


def test_identical_directions():
    adj, picks = adjust_batch([5.0, 3.0], [[1.0, 0.0], [2.0, 0.0]])
    np.testing.assert_allclose(adj, [5.0, -2.0])
    assert picks == [0, 1]


def test_orthogonal_pair():
    adj, picks = adjust_batch([5.0, 3.0], [[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(adj, [5.0, 3.0])
    assert picks == [0, 1]


def test_single_sample():
    adj, picks = brute_force_oracle([4.0], [[2.0, 0.0]])
    assert adj == [4.0] and picks == [0]
    adj, picks = adjust_batch([4.0], [[2.0, 0.0]])
    assert list(adj) == [4.0] and picks == [0]


def test_oracle_two_sample_closed_form():
    adj, picks = brute_force_oracle([5.0, 3.0], [[1.0, 0.0], [2.0, 0.0]])
    assert adj == pytest.approx([5.0, -2.0])
    assert picks == [0, 1]


def test_golden_fixture_oracle():
    info = (GOLDEN_GRADS ** 2).sum(axis=1)
    adj, picks = brute_force_oracle(info, GOLDEN_GRADS)
    np.testing.assert_allclose(adj, GOLDEN_ADJUSTED, rtol=0, atol=1e-12)
    assert picks == GOLDEN_PICKS


def test_golden_fixture_adjust_batch():
    info = (GOLDEN_GRADS ** 2).sum(axis=1)
    adj, picks = adjust_batch(info, GOLDEN_GRADS, EXACT)
    np.testing.assert_allclose(adj, GOLDEN_ADJUSTED, rtol=0, atol=1e-12)
    assert picks == GOLDEN_PICKS


def test_five_seeded_matches_oracle():
    info, g = _random_batch(np.random.default_rng(5), 5)
    adj, picks = adjust_batch(info, g, EXACT)
    ref, ref_picks = brute_force_oracle(info, g)
    np.testing.assert_allclose(adj, ref, rtol=0, atol=1e-12)
    assert picks == ref_picks


@pytest.mark.parametrize("n", range(2, 11))
def test_exact_mode_matches_oracle_sweep(n):
    rng = np.random.default_rng(1000 + n)
    for _ in range(10):
        info, g = _random_batch(rng, n, dim=int(rng.integers(2, 9)))
        adj, picks = adjust_batch(info, g, EXACT)
        ref, ref_picks = brute_force_oracle(info, g)
        np.testing.assert_allclose(adj, ref, rtol=0, atol=1e-12)
        assert picks == ref_picks


def test_capped_order_matches_truncated_oracle_when_small():
    # with at most max_order picks the cap is not binding
    info, g = _random_batch(np.random.default_rng(9), 4)
    adj, _ = adjust_batch(info, g, SirenConfig(max_order=3))
    ref, _ = brute_force_oracle(info, g)
    np.testing.assert_allclose(adj, ref, atol=1e-12)


def test_truncation_error_is_reported_scale():
    # the cap only changes later-picked samples; first pick is always untouched
    info, g = _random_batch(np.random.default_rng(10), 8)
    capped, capped_picks = adjust_batch(info, g, SirenConfig(max_order=1))
    exact, exact_picks = adjust_batch(info, g, EXACT)
    assert capped_picks[0] == exact_picks[0]
    assert capped[capped_picks[0]] == exact[exact_picks[0]] == info.max()


def test_disabled_is_identity():
    info, g = _random_batch(np.random.default_rng(2), 7)
    adj, picks = adjust_batch(info, g, SirenConfig(enabled=False))
    np.testing.assert_array_equal(adj, info)
    assert picks == list(np.argsort(-info, kind="stable"))


@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=8))
def test_orthogonal_is_identity(values):
    info = np.array(values)
    grads = np.diag(np.sqrt(info))
    adj, picks = adjust_batch(info, grads, EXACT)
    np.testing.assert_allclose(adj, info, atol=1e-12)
    assert picks == [int(i) for i in np.argsort(-info, kind="stable")]


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_permutation_equivariance(n, seed):
    rng = np.random.default_rng(seed)
    info, g = _random_batch(rng, n)
    perm = rng.permutation(n)
    adj, picks = adjust_batch(info, g, EXACT)
    padj, ppicks = adjust_batch(info[perm], g[perm], EXACT)
    np.testing.assert_allclose(padj, adj[perm], atol=1e-9)
    assert [int(perm[i]) for i in ppicks] == picks


@given(st.floats(0.01, 100.0), st.integers(0, 2**32 - 1))
def test_duplicate_fully_discounted(scale, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=4) * scale
    g = np.stack([v, v])
    info = (g ** 2).sum(axis=1)
    adj, picks = adjust_batch(info, g, EXACT)
    assert adj[picks[1]] <= 1e-9 * info[0]


def test_errors():
    with pytest.raises(ValueError):
        adjust_batch([1.0, 2.0], [[1.0, 0.0]])
    with pytest.raises(ValueError):
        adjust_batch([-1.0], [[1.0]])
    with pytest.raises(ValueError):
        brute_force_oracle([1.0] * 13, [[1.0]] * 13)
    with pytest.raises(ValueError):
        brute_force_oracle([1.0, 1.0], [[1.0, 0.0], [1.0]])
    with pytest.raises(ValueError):
        SirenConfig(max_order=0)


def test_order_cap_at_batch_size_is_exact():
    info, g = _random_batch(np.random.default_rng(21), 9)
    exact, picks = adjust_batch(info, g, EXACT)
    capped, capped_picks = adjust_batch(info, g, SirenConfig(max_order=8))
    np.testing.assert_allclose(capped, exact, atol=1e-12)
    assert capped_picks == picks


def test_truncation_error_measured(capsys):
    # Measured, not bounded: partial sums of the alternating subset series
    # do not shrink with the cap, so the error is printed for the record.
    rng = np.random.default_rng(22)
    errors = {k: [] for k in (1, 2, 3, 4)}
    for _ in range(20):
        info, g = _random_batch(rng, 10)
        exact, picks = adjust_batch(info, g, EXACT)
        for k in errors:
            capped, capped_picks = adjust_batch(info, g, SirenConfig(max_order=k))
            assert capped_picks[0] == picks[0]
            errors[k].append(np.max(np.abs(capped - exact)) / info.mean())
    with capsys.disabled():
        print("\ntruncation error, N_B = 10, median max|capped - exact| / mean I: "
              + ", ".join(f"order {k}: {np.median(v):.2f}" for k, v in errors.items()))
    assert all(np.all(np.isfinite(v)) for v in errors.values())
