import numpy as np
import pytest

from ldpc_replica import (
    embed_memoryless,
    empirical_threshold,
    joint_bp_decode,
    make_bec,
    make_bsc,
    make_dec,
    make_gilbert_elliott,
    new_ensemble,
    sample_tanner_graph,
    simulate_channel,
    simulate_rate,
)
from ldpc_replica.simulator import residual_errors, sim_stats_to_csv

from oracles import (
    brute_force_marginals,
    empty_code_graph,
    random_markov_channel,
    random_tree_code,
)

E36 = new_ensemble(3, 6)


@pytest.mark.parametrize("seed", range(6))
def test_chain_only_exact_for_coupled_markov_channels(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 8))
    g = empty_code_graph(n)
    c = random_markov_channel(rng, ny=int(rng.integers(2, 5)), state_coupled=True)
    x = rng.integers(0, 2, n)
    y, _ = simulate_channel(c, x, seed=seed + 50)
    marg, state = joint_bp_decode(g, c, y, max_iter=50)
    ref = brute_force_marginals(g, c, y)
    assert np.max(np.abs(marg - ref)) < 1e-9
    assert state.converged


@pytest.mark.parametrize("seed", range(6))
def test_tree_code_exact_for_decoupled_state_channels(seed):
    rng = np.random.default_rng(100 + seed)
    g = random_tree_code(rng, int(rng.integers(5, 10)))
    c = random_markov_channel(rng, ny=3, state_coupled=False)
    x = np.zeros(g.n, dtype=np.int64)  # all-zero always satisfies the checks
    y, _ = simulate_channel(c, x, seed=seed)
    marg, _ = joint_bp_decode(g, c, y, max_iter=200)
    ref = brute_force_marginals(g, c, y)
    assert np.max(np.abs(marg - ref)) < 1e-9


def test_tree_code_exact_single_state_bsc():
    rng = np.random.default_rng(7)
    g = random_tree_code(rng, 8)
    c = embed_memoryless(make_bsc(0.2))
    x = np.zeros(g.n, dtype=np.int64)
    y, _ = simulate_channel(c, x, seed=1)
    marg, _ = joint_bp_decode(g, c, y, max_iter=100)
    ref = brute_force_marginals(g, c, y)
    assert np.max(np.abs(marg - ref)) < 1e-9


def test_bec_no_erasures_resolves_in_one_iteration():
    g = sample_tanner_graph(E36, 24, seed=2)
    c = embed_memoryless(make_bec(0.0))
    from ldpc_replica import encode_random_codeword

    x = encode_random_codeword(g, seed=3)
    y, _ = simulate_channel(c, x, seed=4)
    marg, _ = joint_bp_decode(g, c, y, max_iter=1)
    assert np.array_equal(np.argmax(marg, axis=1), x)
    assert np.all(np.max(marg, axis=1) == 1.0)


def test_dec_all_erased_gives_uniform_marginals():
    g = sample_tanner_graph(E36, 12, seed=1)
    c = make_dec(1.0)
    y = np.full(12, 3)  # every output is the erasure symbol
    marg, _ = joint_bp_decode(g, c, y, max_iter=50)
    assert np.all(marg == 0.5)


def test_erasure_channel_message_algebra_and_no_wrong_bits():
    g = sample_tanner_graph(E36, 600, seed=5)
    from ldpc_replica import encode_random_codeword

    x = encode_random_codeword(g, seed=6)
    c = make_dec(0.55)
    y, _ = simulate_channel(c, x, seed=7)
    marg, state = joint_bp_decode(g, c, y, max_iter=300)
    assert np.all(np.isin(state.c2v, [0.0, 0.5, 1.0]))
    assert np.all(np.isin(state.v2c, [0.0, 0.5, 1.0]))
    resolved = np.abs(marg[:, 0] - 0.5) > 1e-9
    assert np.all(np.argmax(marg[resolved], axis=1) == x[resolved])


def test_residual_error_metrics():
    marg = np.array([[0.5, 0.5], [0.9, 0.1], [0.2, 0.8]])
    truth = np.array([0, 1, 1])
    assert residual_errors(marg, truth, erasure_like=True) == 1.0
    # general metric: one wrong argmax plus a half for the tie
    assert residual_errors(marg, truth, erasure_like=False) == 1.5


def test_simulate_rate_deterministic():
    c = make_dec(0.5)
    a = simulate_rate(E36, 120, c, trials=3, max_iter=100, seed=9)
    b = simulate_rate(E36, 120, c, trials=3, max_iter=100, seed=9)
    assert np.array_equal(a.errors_per_trial, b.errors_per_trial)
    assert a.mean_rate == b.mean_rate
    threaded = simulate_rate(E36, 120, c, trials=3, max_iter=100, seed=9, workers=3)
    assert np.array_equal(a.errors_per_trial, threaded.errors_per_trial)


def test_simulate_rate_monotone_in_eps():
    rates, ses = [], []
    for eps in (0.30, 0.50, 0.70):
        st = simulate_rate(E36, 512, make_dec(eps), trials=4, max_iter=200, seed=13)
        rates.append(st.mean_rate)
        ses.append(st.std_err)
    assert rates[1] >= rates[0] - 2 * (ses[0] + ses[1])
    assert rates[2] >= rates[1] - 2 * (ses[1] + ses[2])
    assert rates[2] > rates[0]


def test_simulate_rate_gilbert_elliott_runs():
    c = make_gilbert_elliott(0.1, 0.3, 0.05, 0.6)
    st = simulate_rate(E36, 240, c, trials=2, max_iter=100, seed=3)
    assert 0.0 <= st.mean_rate <= 1.0
    assert st.metric == "erasure" or st.metric == "bit_error"


def test_reused_graph_flag():
    c = make_dec(0.5)
    st = simulate_rate(E36, 120, c, trials=3, max_iter=50, seed=4, fresh_graph=False)
    assert st.trials == 3


def test_empirical_threshold_embedded_bec():
    family = lambda p: embed_memoryless(make_bec(p))
    th = empirical_threshold(E36, family, n=2000, trials=4, seed=17,
                             param_tol=5e-3, max_iter=300)
    assert abs(th - 0.4294398144) < 0.03


def test_empirical_threshold_ordering_2_4_above_3_6():
    th36 = empirical_threshold(E36, make_dec, n=6000, trials=5, seed=41,
                               param_tol=3e-3, max_iter=400)
    th24 = empirical_threshold(new_ensemble(2, 4), make_dec, n=6000, trials=5,
                               seed=42, param_tol=3e-3, max_iter=400)
    assert th24 > th36


def test_sim_csv_format(tmp_path):
    st = simulate_rate(E36, 120, make_dec(0.5), trials=2, max_iter=50, seed=1, param=0.5)
    out = tmp_path / "stats.csv"
    with open(out, "w") as fh:
        sim_stats_to_csv(st, fh)
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "param,n,trials,mean_rate,std_err,avg_iters"
    assert lines[1].startswith("0.5,120,2,")
