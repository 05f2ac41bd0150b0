import itertools

import numpy as np
import pytest

from ldpc_replica import (
    ChannelClass,
    MarkovChannelSpec,
    ValidationError,
    channel_spec_hash,
    check_irreducible_q0,
    classify,
    embed_memoryless,
    frozen_solution_exists,
    is_generalized_erasure,
    load_channel_spec,
    make_bec,
    make_bsc,
    make_dec,
    make_gilbert_elliott,
    make_z_channel,
    save_channel_spec,
    stationary_left_message,
)
from ldpc_replica.channels import SUPPORT_CLAMP, q0_support_and_matrix

Y = {"-1": 0, "0": 1, "1": 2, "*": 3}


def test_dec_tensors():
    c = make_dec(0.0)
    assert c.W[0, 0, Y["0"]] == 1.0 and c.W[0, 0, Y["*"]] == 0.0
    c1 = make_dec(1.0)
    assert np.all(c1.W[:, :, Y["*"]] == 1.0)
    c5 = make_dec(0.5)
    assert c5.W[1, 0, Y["1"]] == 0.5 and c5.W[1, 0, Y["*"]] == 0.5
    # next state always equals the input
    assert np.all(c5.V[:, 1, 0, 1] == 1.0)
    assert np.all(c5.V[:, 0, 1, 0] == 1.0)


def test_dec_domain_error():
    with pytest.raises(ValidationError):
        make_dec(1.5)


def test_embeddings():
    bec = embed_memoryless(make_bec(0.3))
    assert bec.num_states == 1
    assert np.allclose(bec.W[:, 0, 2], 0.3)
    bsc = embed_memoryless(make_bsc(0.1))
    assert bsc.W[0, 0, 1] == 0.1
    z = embed_memoryless(make_z_channel(0.2))
    assert classify(z) is ChannelClass.FINITE_STATE_MARKOV


def test_classification():
    assert classify(make_dec(0.5)) is ChannelClass.INTERSYMBOL_INTERFERENCE
    assert classify(make_gilbert_elliott(0.2, 0.3)) is ChannelClass.FINITE_STATE_MARKOV
    # V depending on the output is the general case
    ge = make_gilbert_elliott(0.2, 0.3)
    V = ge.V.copy()
    V[0] = np.array([[[0.9, 0.1], [0.9, 0.1]]] * 2)
    gen = MarkovChannelSpec(outputs=ge.outputs, states=ge.states, W=ge.W, V=V, V0=ge.V0)
    assert classify(gen) is ChannelClass.GENERAL
    for w in (make_bec(0.3), make_bsc(0.2), make_z_channel(0.4)):
        assert classify(embed_memoryless(w)) is ChannelClass.FINITE_STATE_MARKOV


def test_q0_dec_all_positive_and_irreducible():
    t0, q0 = q0_support_and_matrix(make_dec(0.5))
    assert list(t0) == [0, 1]
    assert np.all(q0 > 0)
    # hand oracle: every entry of the 2x2 chain is 1/2
    assert np.allclose(q0, 0.5)
    assert check_irreducible_q0(make_dec(0.5))


def test_q0_row_sums_exactly_one():
    rng = np.random.default_rng(3)
    for _ in range(10):
        W = rng.random((2, 3, 4))
        W /= W.sum(axis=2, keepdims=True)
        V = rng.random((4, 2, 3, 3))
        V /= V.sum(axis=3, keepdims=True)
        V0 = np.full(3, 1 / 3)
        c = MarkovChannelSpec(outputs=("a", "b", "c", "d"), states=("0", "1", "2"),
                              W=W, V=V, V0=V0)
        _, q0 = q0_support_and_matrix(c)
        assert np.all(q0.sum(axis=1) == 1.0)


def test_reducible_chain_detected():
    # identity transitions: two closed classes
    W = np.full((2, 2, 2), 0.5)
    V = np.zeros((2, 2, 2, 2))
    V[:, :, 0, 0] = 1.0
    V[:, :, 1, 1] = 1.0
    c = MarkovChannelSpec(outputs=("0", "1"), states=("a", "b"), W=W, V=V,
                          V0=np.array([0.5, 0.5]))
    assert not check_irreducible_q0(c)


def test_single_state_irreducible():
    assert check_irreducible_q0(embed_memoryless(make_bsc(0.1)))


def test_stationary_left_message_dec():
    for eps in (0.0, 0.3, 0.9):
        m = stationary_left_message(make_dec(eps))
        assert np.allclose(m, [0.5, 0.5], atol=1e-10)


def test_stationary_left_message_gilbert_elliott():
    g, b = 0.15, 0.35
    m = stationary_left_message(make_gilbert_elliott(g, b))
    assert np.allclose(m, [b / (g + b), g / (g + b)], atol=1e-10)


def test_stationary_matches_eigenvector_oracle():
    rng = np.random.default_rng(11)
    chain = rng.random((2, 2)) + 0.1
    chain /= chain.sum(axis=1, keepdims=True)
    W = np.full((2, 2, 2), 0.5)
    V = np.broadcast_to(chain, (2, 2, 2, 2)).copy()
    c = MarkovChannelSpec(outputs=("0", "1"), states=("a", "b"), W=W, V=V,
                          V0=np.array([0.5, 0.5]))
    m = stationary_left_message(c)
    vals, vecs = np.linalg.eig(chain.T)
    ref = np.real(vecs[:, np.argmax(np.real(vals))])
    ref = ref / ref.sum()
    assert np.allclose(m, ref, atol=1e-9)


def test_stationary_is_fixed_point_of_update():
    for c in (make_dec(0.4), make_gilbert_elliott(0.2, 0.1)):
        m = stationary_left_message(c)
        kernel = np.einsum("x,xsy,yxst->st", np.array([0.5, 0.5]), c.W, c.V)
        reapplied = kernel.T @ m
        reapplied /= reapplied.sum()
        assert np.max(np.abs(reapplied - m)) < 1e-10


def test_periodic_chain_still_converges():
    # deterministic alternation between the two states
    W = np.full((2, 2, 2), 0.5)
    V = np.zeros((2, 2, 2, 2))
    V[:, :, 0, 1] = 1.0
    V[:, :, 1, 0] = 1.0
    c = MarkovChannelSpec(outputs=("0", "1"), states=("a", "b"), W=W, V=V,
                          V0=np.array([1.0, 0.0]))
    assert check_irreducible_q0(c)
    assert np.allclose(stationary_left_message(c), [0.5, 0.5], atol=1e-10)


def brute_force_frozen(c):
    """Exhaustive enumeration over all (y, x2, s2, s1) tuples."""
    ns, ny = c.num_states, c.num_outputs
    W = np.where(c.W > SUPPORT_CLAMP, c.W, 0.0)
    V = np.where(c.V > SUPPORT_CLAMP, c.V, 0.0)
    for y in range(ny):
        for x2, s2 in itertools.product(range(2), range(ns)):
            if sum(W[x2, s2, y] * V[y, x2, s2, s1] > 0 for s1 in range(ns)) > 1:
                return False
        for s1 in range(ns):
            hits = [
                (x2, s2)
                for x2, s2 in itertools.product(range(2), range(ns))
                if W[x2, s2, y] * V[y, x2, s2, s1] > 0
            ]
            if len(hits) > 1:
                return False
    return True


def test_frozen_dec_examples():
    ok, wit = frozen_solution_exists(make_dec(0.0))
    assert ok and wit is None
    ok5, wit5 = frozen_solution_exists(make_dec(0.5))
    assert not ok5
    assert wit5.y == "*"
    assert wit5.kind == "multiple_sources"
    assert wit5.fixed == ("0",)
    assert set(wit5.offenders) == {("0", "0"), ("0", "1")}


def test_frozen_noiseless_identity_true():
    ok, _ = frozen_solution_exists(embed_memoryless(make_bec(0.0)))
    assert ok


@pytest.mark.parametrize("eps", [0.0, 0.3, 0.5, 1.0])
def test_frozen_matches_enumeration_oracle(eps):
    c = make_dec(eps)
    assert frozen_solution_exists(c)[0] == brute_force_frozen(c)


def _frozen_true_two_state():
    # one W row with two outputs; all other rows single-output; frozen holds
    outputs = ("a", "b", "c", "d")
    W = np.zeros((2, 2, 4))
    W[0, 0, 0] = 0.5
    W[0, 0, 1] = 0.5
    W[0, 1, 2] = 1.0
    W[1, 0, 3] = 1.0
    W[1, 1, 3] = 0.0
    W[1, 1, 2] = 0.0
    W[1, 1, 0] = 1.0
    V = np.zeros((4, 2, 2, 2))
    for x in range(2):
        V[:, x, :, x] = 1.0
    return MarkovChannelSpec(outputs=outputs, states=("0", "1"), W=W, V=V,
                             V0=np.array([0.5, 0.5]))


def test_frozen_monotone_under_support_shrinkage():
    base = _frozen_true_two_state()
    assert frozen_solution_exists(base)[0]
    assert brute_force_frozen(base)
    # zero out W(a|0,0), renormalizing mass onto b: support shrinks
    W = base.W.copy()
    W[0, 0, 0] = 0.0
    W[0, 0, 1] = 1.0
    smaller = MarkovChannelSpec(outputs=base.outputs, states=base.states,
                                W=W, V=base.V, V0=base.V0)
    assert frozen_solution_exists(smaller)[0]


def test_spec_file_round_trip(tmp_path):
    path = tmp_path / "dec.json"
    c = make_dec(0.4)
    save_channel_spec(c, path)
    back = load_channel_spec(path)
    assert back.outputs == c.outputs and back.states == c.states
    assert np.allclose(back.W, c.W) and np.allclose(back.V, c.V)
    assert channel_spec_hash(back) == channel_spec_hash(c)

    mpath = tmp_path / "bec.json"
    save_channel_spec(make_bec(0.3), mpath)
    b = load_channel_spec(mpath)
    assert not isinstance(b, MarkovChannelSpec)
    assert np.allclose(b.W, make_bec(0.3).W)


def test_malformed_spec_names_row(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"outputs": ["0", "1"], "W": [[0.5, 0.4], [0.5, 0.5]]}')
    with pytest.raises(ValidationError, match="row"):
        load_channel_spec(path)


def test_bad_json_rejected(tmp_path):
    path = tmp_path / "junk.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError):
        load_channel_spec(path)


def test_near_one_rows_are_normalized():
    W = np.array([[0.7 + 3e-7, 0.3], [0.3, 0.7 - 3e-7]])
    c = make_bsc(0.3)
    from ldpc_replica.channels import MemorylessChannelSpec

    spec = MemorylessChannelSpec(outputs=("0", "1"), W=W)
    assert np.allclose(spec.W.sum(axis=1), 1.0, atol=1e-15)
    assert np.allclose(spec.W, c.W, atol=1e-6)


def test_generalized_erasure_detection():
    assert is_generalized_erasure(make_dec(0.7))
    assert is_generalized_erasure(embed_memoryless(make_bec(0.2)))
    assert not is_generalized_erasure(embed_memoryless(make_bsc(0.1)))
    assert not is_generalized_erasure(make_gilbert_elliott(0.1, 0.2, 0.1, 0.5))
