import numpy as np
import pytest

from ldpc_replica import (
    BernoulliMessagePair,
    Ensemble,
    ValidationError,
    new_ensemble,
    rate_functional,
    verify_rate_maximizer,
)
from ldpc_replica.ensemble import check_node_mass


def test_design_rates():
    assert new_ensemble(3, 6).rate == 0.5
    assert new_ensemble(3, 4).rate == 0.25
    assert new_ensemble(6, 12).rate == 0.5


@pytest.mark.parametrize("l,r", [(1, 4), (0, 3), (3, 3), (4, 3)])
def test_degenerate_degrees_rejected(l, r):
    with pytest.raises(ValidationError):
        new_ensemble(l, r)


def test_rate_functional_uniform_messages():
    # closed form: Z_v = 2^(1-l), Z_f = 1/2, Z_e = 1/2 gives 1 - l/r
    e = new_ensemble(3, 6)
    v = rate_functional(e, BernoulliMessagePair(0.5, 0.5))
    assert abs(v - 0.5) < 1e-12
    v24 = rate_functional(new_ensemble(2, 4), BernoulliMessagePair(0.5, 0.5))
    assert abs(v24 - 0.5) < 1e-12


def test_rate_functional_all_ones_even_r():
    # all-ones has even parity for r = 6, so every Z equals 1
    v = rate_functional(new_ensemble(3, 6), BernoulliMessagePair(1.0, 1.0))
    assert v == 0.0


@pytest.mark.parametrize("l,r", [(2, 4), (3, 6), (4, 8), (5, 10), (6, 12), (3, 8)])
def test_uniform_value_is_design_rate_for_even_r(l, r):
    e = new_ensemble(l, r)
    v = rate_functional(e, BernoulliMessagePair(0.5, 0.5))
    assert abs(v - e.rate) < 1e-12


def test_deterministic_conflict_gives_minus_infinity():
    # p_vf = 1 with odd r kills the parity factor
    v = rate_functional(new_ensemble(3, 5), BernoulliMessagePair(1.0, 1.0))
    assert v == float("-inf")
    # opposite deterministic messages kill the edge normalizer
    v2 = rate_functional(new_ensemble(3, 6), BernoulliMessagePair(0.0, 1.0))
    assert v2 == float("-inf")


def test_rate_functional_domain_errors():
    e = new_ensemble(3, 6)
    with pytest.raises(ValidationError):
        rate_functional(e, BernoulliMessagePair(-0.1, 0.5))
    with pytest.raises(ValidationError):
        rate_functional(e, BernoulliMessagePair(0.5, 1.2))


def test_check_node_mass_matches_parity_convolution():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = rng.random()
        r = rng.integers(3, 9)
        # brute force over the r-1 companion bits
        total = 0.0
        for bits in range(2 ** (r - 1)):
            ones = bin(bits).count("1")
            if ones % 2 == 1:
                total += p**ones * (1 - p) ** (r - 1 - ones)
        assert abs(check_node_mass(p, r) - total) < 1e-12


@pytest.mark.parametrize("l,r,steps", [(3, 6, 101), (4, 8, 101), (2, 4, 11)])
def test_maximizer_at_uniform(l, r, steps):
    rep = verify_rate_maximizer(new_ensemble(l, r), steps)
    assert rep.max_location == 0.5
    assert abs(rep.max_value - (1 - l / r)) < 1e-10


@pytest.mark.parametrize("l,r", [(2, 4), (3, 6), (4, 8), (5, 10), (2, 6)])
def test_grid_max_never_beats_uniform(l, r):
    e = new_ensemble(l, r)
    rep = verify_rate_maximizer(e, 201)
    at_uniform = rate_functional(e, BernoulliMessagePair(0.5, 0.5))
    assert rep.max_value <= at_uniform + 1e-12


def test_odd_r_scan_reports_without_assuming():
    # odd check degrees can spike near the boundary where the scanned pair
    # stops being saddle-consistent; the report just states what it found
    rep = verify_rate_maximizer(new_ensemble(3, 5), 101)
    assert np.isfinite(rep.max_value)
    assert 0.0 <= rep.max_location <= 1.0


def test_maximizer_grid_too_small():
    with pytest.raises(ValidationError):
        verify_rate_maximizer(new_ensemble(3, 6), 2)
