import numpy as np
import pytest

from fedsim.rng import SeededRng, gaussian


def test_same_seed_same_sequence():
    a, b = SeededRng(7), SeededRng(7)
    assert np.array_equal(a.uniform(0, 1, 100), b.uniform(0, 1, 100))
    assert np.array_equal(a.normal(1.0, 100), b.normal(1.0, 100))
    assert np.array_equal(a.permutation(50), b.permutation(50))


def test_different_seeds_differ():
    assert not np.array_equal(
        SeededRng(1).uniform(0, 1, 20), SeededRng(2).uniform(0, 1, 20)
    )


def test_children_independent_of_parent_draws():
    # deriving after the parent has drawn must give the same child stream
    fresh, used = SeededRng(7), SeededRng(7)
    used.uniform(0, 1, 1000)
    used.normal(2.0, 17)
    assert np.array_equal(
        fresh.derive("x").uniform(0, 1, 8), used.derive("x").uniform(0, 1, 8)
    )


def test_labels_give_distinct_streams():
    r = SeededRng(7)
    a = r.derive("alpha").uniform(0, 1, 8)
    b = r.derive("beta").uniform(0, 1, 8)
    assert not np.array_equal(a, b)


def test_derivation_chains_stable():
    a = SeededRng(3).derive("x").derive("y").uniform(0, 1, 4)
    b = SeededRng(3).derive("x").derive("y").uniform(0, 1, 4)
    assert np.array_equal(a, b)
    assert SeededRng(3).derive("x").derive("y").signature == \
        SeededRng(3).derive("x").derive("y").signature


def test_signature_distinguishes_paths():
    r = SeededRng(5)
    sigs = {r.signature, r.derive("a").signature, r.derive("b").signature,
            r.derive("a").derive("b").signature}
    assert len(sigs) == 4


def test_seed_bounds():
    SeededRng(0)
    SeededRng(2**64 - 1)
    with pytest.raises(ValueError):
        SeededRng(-1)
    with pytest.raises(ValueError):
        SeededRng(2**64)


def test_sample_without_replacement():
    r = SeededRng(11)
    ids = r.sample_without_replacement(10, 4)
    assert len(ids) == 4
    assert len(set(ids.tolist())) == 4
    assert all(0 <= i < 10 for i in ids)
    # full draw covers everything
    full = SeededRng(11).sample_without_replacement(6, 6)
    assert sorted(full.tolist()) == list(range(6))


def test_gaussian_zero_sigma_and_errors():
    r = SeededRng(1)
    assert np.array_equal(gaussian(r, 5, 0.0), np.zeros(5))
    with pytest.raises(ValueError):
        gaussian(r, 5, -0.1)


def test_gaussian_statistics_fixed_seed():
    # frozen draws: exact values recorded once, plus the distributional bounds
    v = gaussian(SeededRng(20250825).derive("gaussian-oracle"), 100_000, 1.0)
    mean, std = float(v.mean()), float(v.std(ddof=0))
    assert abs(mean - (-0.002528303100125649)) < 1e-12
    assert abs(std - 0.9963104687789254) < 1e-12
    assert abs(mean) < 0.02
    assert 0.98 < std < 1.02


def test_gaussian_deterministic():
    a = gaussian(SeededRng(42).derive("g"), 64, 2.5)
    b = gaussian(SeededRng(42).derive("g"), 64, 2.5)
    assert np.array_equal(a, b)
