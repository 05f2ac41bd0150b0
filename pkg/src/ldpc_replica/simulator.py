"""Finite-N joint belief propagation over an LDPC graph and a channel trellis.

Per decoder iteration: one forward and one backward sweep over the hidden
state chain (driven by the current code beliefs), fresh channel extrinsics,
then one flooding round of LDPC variable/check updates.  Messages are
renormalized at every step, so underflow shows up as rescaling rather than
silent zeros.

Transmission uses uniformly random codewords: channels with memory and
asymmetric channels are not output-symmetric, so the all-zero shortcut is
unsound here.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from ._rng import derive_seed, rng_for
from .channels import MarkovChannelSpec, is_generalized_erasure
from .dec import fmt12
from .ensemble import Ensemble
from .errors import ConfigurationError, ValidationError
from .graphs import TannerGraph, encode_random_codeword, sample_tanner_graph

ERASURE_TIE_TOL = 1e-9


@dataclass(frozen=True)
class DecoderState:
    v2c: np.ndarray
    c2v: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    iterations: int
    converged: bool


@dataclass(frozen=True)
class SimStats:
    trials: int
    n: int
    param: float
    errors_per_trial: np.ndarray
    iters_per_trial: np.ndarray
    mean_rate: float
    std_err: float
    metric: str

    @property
    def avg_iters(self) -> float:
        return float(self.iters_per_trial.mean())


def _padded_adjacency(edge_node, count, num_edges):
    """(count, max_degree) edge-id matrix padded with the sentinel num_edges."""
    degrees = np.bincount(edge_node, minlength=count)
    width = int(degrees.max()) if count else 0
    adj = np.full((count, max(width, 1)), num_edges, dtype=np.int64)
    cursor = np.zeros(count, dtype=np.int64)
    for eid, node in enumerate(edge_node):
        adj[node, cursor[node]] = eid
        cursor[node] += 1
    return adj


def _excl_prod(mat):
    """Leave-one-out products along axis 1 via prefix/suffix cumulants."""
    n, k = mat.shape
    pre = np.ones((n, k))
    suf = np.ones((n, k))
    if k > 1:
        pre[:, 1:] = np.cumprod(mat[:, :-1], axis=1)
        suf[:, :-1] = np.cumprod(mat[:, :0:-1], axis=1)[:, ::-1]
    return pre * suf


@njit(cache=True)
def _state_sweeps(wtab, vtab, v0, q, alpha, beta, lam):
    """Forward/backward over the state chain and per-symbol channel extrinsics.

    wtab[i, x, s] = W(y_i | x, s); vtab[i, x, s, s'] = V(s' | y_i, x, s).
    """
    n = wtab.shape[0]
    ns = v0.size
    for s in range(ns):
        alpha[0, s] = v0[s]
    for i in range(n):
        tot = 0.0
        for s1 in range(ns):
            acc = 0.0
            for x in range(2):
                for s in range(ns):
                    acc += alpha[i, s] * q[i, x] * wtab[i, x, s] * vtab[i, x, s, s1]
            alpha[i + 1, s1] = acc
            tot += acc
        if tot <= 0.0:
            for s1 in range(ns):
                alpha[i + 1, s1] = 1.0 / ns
        else:
            for s1 in range(ns):
                alpha[i + 1, s1] /= tot
    for s in range(ns):
        beta[n, s] = 1.0 / ns
    for i in range(n - 1, -1, -1):
        tot = 0.0
        for s in range(ns):
            acc = 0.0
            for x in range(2):
                down = 0.0
                for s1 in range(ns):
                    down += vtab[i, x, s, s1] * beta[i + 1, s1]
                acc += q[i, x] * wtab[i, x, s] * down
            beta[i, s] = acc
            tot += acc
        if tot <= 0.0:
            for s in range(ns):
                beta[i, s] = 1.0 / ns
        else:
            for s in range(ns):
                beta[i, s] /= tot
    for i in range(n):
        tot = 0.0
        for x in range(2):
            acc = 0.0
            for s in range(ns):
                down = 0.0
                for s1 in range(ns):
                    down += vtab[i, x, s, s1] * beta[i + 1, s1]
                acc += alpha[i, s] * wtab[i, x, s] * down
            lam[i, x] = acc
            tot += acc
        if tot <= 0.0:
            lam[i, 0] = 0.5
            lam[i, 1] = 0.5
        else:
            lam[i, 0] /= tot
            lam[i, 1] /= tot


def joint_bp_decode(g: TannerGraph, c: MarkovChannelSpec, y: np.ndarray,
                    max_iter: int = 200, tol: float = 1e-10):
    """Approximate posterior marginals p(x_i | y) and the final decoder state."""
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (g.n,):
        raise ValidationError(f"output length {y.shape} does not match n={g.n}")
    num_edges = g.num_edges
    var_adj = _padded_adjacency(g.edge_var, g.n, num_edges)
    check_adj = _padded_adjacency(g.edge_check, g.m, num_edges)
    ns = c.num_states
    wtab = np.ascontiguousarray(np.transpose(c.W[:, :, y], (2, 0, 1)))
    vtab = np.ascontiguousarray(c.V[y])
    # sentinel row: neutral for both the parity product and the mass product
    v2c = np.full((num_edges + 1, 2), 0.5)
    v2c[num_edges] = (1.0, 0.0)
    c2v = np.full((num_edges + 1, 2), 0.5)
    c2v[num_edges] = (1.0, 1.0)
    alpha = np.empty((g.n + 1, ns))
    beta = np.empty((g.n + 1, ns))
    lam = np.full((g.n, 2), 0.5)
    converged = False
    iterations = 0
    for it in range(max_iter):
        iterations = it + 1
        # code beliefs feeding the trellis
        q = np.prod(c2v[var_adj], axis=1)
        qs = q.sum(axis=1, keepdims=True)
        q = np.where(qs > 0, q / np.where(qs > 0, qs, 1.0), 0.5)
        prev_lam = lam.copy()
        lam = np.empty_like(prev_lam)
        _state_sweeps(wtab, vtab, c.V0, q, alpha, beta, lam)
        # variable to check
        incoming = c2v[var_adj]
        ex0 = _excl_prod(incoming[:, :, 0])
        ex1 = _excl_prod(incoming[:, :, 1])
        num0 = lam[:, 0:1] * ex0
        num1 = lam[:, 1:2] * ex1
        tot = num0 + num1
        tot = np.where(tot > 0, tot, 1.0)
        prev_v2c = v2c.copy()
        real = var_adj < num_edges
        v2c[var_adj[real], 0] = (num0 / tot)[real]
        v2c[var_adj[real], 1] = (num1 / tot)[real]
        # check to variable (parity convolution of the companions)
        delta = v2c[check_adj, 0] - v2c[check_adj, 1]
        exd = _excl_prod(delta)
        realc = check_adj < num_edges
        prev_c2v = c2v.copy()
        c2v[check_adj[realc], 0] = 0.5 * (1.0 + exd[realc])
        c2v[check_adj[realc], 1] = 0.5 * (1.0 - exd[realc])
        change = max(
            float(np.max(np.abs(v2c - prev_v2c))),
            float(np.max(np.abs(c2v - prev_c2v))),
            float(np.max(np.abs(lam - prev_lam))),
        )
        if change < tol:
            converged = True
            break
    post = lam * np.prod(c2v[var_adj], axis=1)
    ps = post.sum(axis=1, keepdims=True)
    post = np.where(ps > 0, post / np.where(ps > 0, ps, 1.0), 0.5)
    state = DecoderState(v2c=v2c[:num_edges], c2v=c2v[:num_edges],
                         alpha=alpha, beta=beta,
                         iterations=iterations, converged=converged)
    return post, state


@njit(cache=True)
def _simulate_channel(W, V, V0, xs, uy, us):
    n = xs.size
    ns = V0.size
    ny = W.shape[2]
    ys = np.empty(n, dtype=np.int64)
    ss = np.empty(n + 1, dtype=np.int64)
    acc = 0.0
    ss[0] = ns - 1
    for s in range(ns):
        acc += V0[s]
        if us[0] < acc:
            ss[0] = s
            break
    for i in range(n):
        acc = 0.0
        y = ny - 1
        for cand in range(ny):
            acc += W[xs[i], ss[i], cand]
            if uy[i] < acc:
                y = cand
                break
        ys[i] = y
        acc = 0.0
        nxt = ns - 1
        for cand in range(ns):
            acc += V[y, xs[i], ss[i], cand]
            if us[i + 1] < acc:
                nxt = cand
                break
        ss[i + 1] = nxt
    return ys, ss


def simulate_channel(c: MarkovChannelSpec, x: np.ndarray, seed: int):
    """Hidden state path and output sequence for a given input word."""
    rng = rng_for(seed)
    xs = np.asarray(x, dtype=np.int64)
    uy = rng.random(xs.size)
    us = rng.random(xs.size + 1)
    return _simulate_channel(c.W, c.V, c.V0, xs, uy, us)


def residual_errors(marginals: np.ndarray, truth: np.ndarray, erasure_like: bool) -> float:
    """Erasure channels: unresolved bits; otherwise argmax mismatches, ties half."""
    if erasure_like:
        return float(np.sum(np.abs(marginals[:, 0] - 0.5) <= ERASURE_TIE_TOL))
    ties = np.abs(marginals[:, 0] - marginals[:, 1]) <= ERASURE_TIE_TOL
    hard = np.argmax(marginals, axis=1)
    wrong = (~ties) & (hard != truth)
    return float(np.sum(wrong) + 0.5 * np.sum(ties))


def simulate_rate(e: Ensemble, n: int, c: MarkovChannelSpec, trials: int,
                  max_iter: int, seed: int, fresh_graph: bool = True,
                  param: float = float("nan"), workers: int = 1) -> SimStats:
    """Monte-Carlo residual error rate of joint BP at block length n.

    Per trial: sample a graph (fresh by default, so the estimate averages over
    the ensemble), a uniform codeword, and a channel realization; decode and
    count residual errors.  Per-trial streams derive from (seed, trial, stage),
    so results are reproducible and aggregation order-independent, including
    under multi-worker scheduling.
    """
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    erasure_like = is_generalized_erasure(c)
    errors = np.empty(trials)
    iters = np.empty(trials)
    graph = None if fresh_graph else sample_tanner_graph(e, n, derive_seed(seed, 0, 0))

    def one_trial(t):
        g = sample_tanner_graph(e, n, derive_seed(seed, t, 0)) if fresh_graph else graph
        x = encode_random_codeword(g, derive_seed(seed, t, 1))
        y, _ = simulate_channel(c, x, derive_seed(seed, t, 2))
        marginals, state = joint_bp_decode(g, c, y, max_iter=max_iter)
        errors[t] = residual_errors(marginals, x, erasure_like)
        iters[t] = state.iterations

    if workers <= 1 or trials == 1:
        for t in range(trials):
            one_trial(t)
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            for f in [pool.submit(one_trial, t) for t in range(trials)]:
                f.result()
    rates = errors / n
    std_err = float(rates.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return SimStats(
        trials=trials, n=n, param=param,
        errors_per_trial=errors, iters_per_trial=iters,
        mean_rate=float(rates.mean()), std_err=std_err,
        metric="erasure" if erasure_like else "bit_error",
    )


def empirical_threshold(e: Ensemble, c_family, n: int, trials: int, seed: int,
                        target_rate: float = 1e-2, max_iter: int = 500,
                        param_lo: float = 0.0, param_hi: float = 1.0,
                        param_tol: float = 2e-3) -> float:
    """Bisection on the channel parameter for the target residual-rate crossing.

    ``c_family`` maps a parameter in [param_lo, param_hi] to a channel spec
    and must be monotone in residual rate.
    """
    def rate(p, k):
        return simulate_rate(e, n, c_family(p), trials, max_iter,
                             derive_seed(seed, k), param=p).mean_rate

    lo, hi = param_lo, param_hi
    if not rate(lo, 0) < target_rate:
        raise ValidationError("lower endpoint already exceeds the target rate")
    if not rate(hi, 1) > target_rate:
        raise ValidationError("upper endpoint does not exceed the target rate")
    k = 2
    while hi - lo > param_tol:
        mid = 0.5 * (lo + hi)
        if rate(mid, k) > target_rate:
            hi = mid
        else:
            lo = mid
        k += 1
    return 0.5 * (lo + hi)


SIM_CSV_HEADER = ["param", "n", "trials", "mean_rate", "std_err", "avg_iters"]


def sim_stats_to_csv(stats: SimStats, fh):
    fh.write(",".join(SIM_CSV_HEADER) + "\n")
    fh.write(",".join([
        fmt12(stats.param), str(stats.n), str(stats.trials),
        fmt12(stats.mean_rate), fmt12(stats.std_err), fmt12(stats.avg_iters),
    ]) + "\n")
