"""Population dynamics for the RS saddle equations on Markov channels.

Beyond the code-side pools phi/phi_hat this tracks two state-message pools:

  psi      -- right messages M(x, s), conditioned on (x, s): the summary of
              everything downstream in the channel trellis
  psi_hat  -- left state messages M(s), conditioned on s

plus the scalar stationary left message m_Ls, which is a fixed layer solved
once per channel and never resampled.

Sweep order is psi -> psi_hat -> check -> var, so channel information
propagates before code information inside a sweep.  All updates fully
resample their pool from the current generation under the chunked-stream
contract of the memoryless module.

On generalized erasure channels every message stays inside a finite erasure
algebra; pools are snapped back onto exact algebra representatives to stop
drift over long runs (a no-op in exact arithmetic).
"""

from dataclasses import dataclass, replace
from math import log

import numpy as np
from numba import njit

from ._rng import DEFAULT_CHUNK, derive_seed, rng_for
from .channels import MarkovChannelSpec, is_generalized_erasure, stationary_left_message
from .ensemble import Ensemble
from .errors import ConfigurationError, ConvergenceError
from .population import (
    MAX_RESAMPLE,
    MIN_POP,
    EntropyEstimate,
    _chunked,
    _parity_bits,
    _sample_rows,
    uniform_fraction,
)

SNAP_TOL = 1e-9


@dataclass(frozen=True)
class MarkovPopulations:
    phi: np.ndarray       # (2, P, 2)
    phi_hat: np.ndarray   # (2, P, 2)
    psi: np.ndarray       # (2, S, P, 2, S)
    psi_hat: np.ndarray   # (S, P, S)
    m_Ls: np.ndarray      # (S,)
    generation: int = 0
    resample_failures: int = 0
    snap_erasure: bool = False

    @property
    def pop_size(self) -> int:
        return self.phi.shape[1]

    @property
    def num_states(self) -> int:
        return self.psi_hat.shape[0]


def init_markov_populations(c: MarkovChannelSpec, pop_size: int, seed: int,
                            snap_erasure=None) -> MarkovPopulations:
    """Uniform pools plus the converged stationary left message."""
    if pop_size < MIN_POP:
        raise ConfigurationError(f"pop_size={pop_size} below minimum {MIN_POP}")
    m_ls = stationary_left_message(c)
    ns = c.num_states
    if snap_erasure is None:
        snap_erasure = is_generalized_erasure(c)
    return MarkovPopulations(
        phi=np.full((2, pop_size, 2), 0.5),
        phi_hat=np.full((2, pop_size, 2), 0.5),
        psi=np.full((2, ns, pop_size, 2, ns), 1.0 / (2 * ns)),
        psi_hat=np.full((ns, pop_size, ns), 1.0 / ns),
        m_Ls=m_ls,
        snap_erasure=bool(snap_erasure),
    )


def _snap(arr):
    """Pull entries onto the exact erasure-algebra grid when within SNAP_TOL."""
    for t in (0.0, 1.0, 0.5, 0.25, 0.125):
        close = np.abs(arr - t) <= SNAP_TOL
        if np.any(close):
            arr[close] = t
    return arr


def _resample_guard(remaining, what):
    if remaining:
        raise ConvergenceError(
            f"{remaining} {what} samples found no positive normalizer "
            f"after {MAX_RESAMPLE} redraws"
        )


def _draw_l_product(phi_hat, x_idx, l, P, rng):
    """Product over l factor-to-variable draws conditioned per-row on x_idx."""
    idx = rng.integers(0, P, size=(x_idx.size, l))
    msgs = phi_hat[x_idx[:, None], idx, :]
    return np.prod(msgs, axis=1)


def update_psi(pop: MarkovPopulations, c: MarkovChannelSpec, e: Ensemble, seed: int,
               chunk: int = DEFAULT_CHUNK, workers: int = 1) -> MarkovPopulations:
    """Resample the right-message pool.

    Conditioned on (x, s): draw y ~ W(.|x,s), a uniform next input x1 and
    s1 ~ V(.|y,x,s); combine the drawn downstream summary and l code messages
    of the next position into the emitted message over (x', s').
    """
    P, ns = pop.pop_size, pop.num_states
    new_psi = np.empty_like(pop.psi)
    w_cdf = np.cumsum(c.W, axis=2)

    def cell(x, s, lo, hi, rng):
        B = hi - lo
        out = np.empty((B, 2, ns))
        remaining = np.arange(B)
        for _ in range(MAX_RESAMPLE):
            nb = remaining.size
            y = _sample_rows(np.broadcast_to(w_cdf[x, s], (nb, c.num_outputs)), rng.random(nb))
            x1 = rng.integers(0, 2, size=nb)
            s1 = _sample_rows(np.cumsum(c.V[y, x, s, :], axis=1), rng.random(nb))
            m_next = pop.psi[x1, s1, rng.integers(0, P, size=nb)]
            g = _draw_l_product(pop.phi_hat, x1, e.l, P, rng)
            # future evidence: G(x', s') = sum_{x1', s1'} M'(x1',s1') g(x1') V(s1'|y,x',s')
            cs = np.einsum("bat,ba->bt", m_next, g)
            gfac = np.einsum("bxst,bt->bxs", c.V[y], cs)
            num = np.transpose(c.W[:, :, y], (2, 0, 1)) * gfac
            norm = num.sum(axis=(1, 2))
            good = norm > 0.0
            out[remaining[good]] = num[good] / norm[good, None, None]
            remaining = remaining[~good]
            if remaining.size == 0:
                break
        _resample_guard(remaining.size, "psi")
        new_psi[x, s, lo:hi] = _snap(out) if pop.snap_erasure else out

    for x in range(2):
        for s in range(ns):
            _chunked(P, derive_seed(seed, x, s), chunk,
                     lambda lo, hi, rng, x=x, s=s: cell(x, s, lo, hi, rng), workers)
    return replace(pop, psi=new_psi, generation=pop.generation + 1)


def update_psi_hat(pop: MarkovPopulations, c: MarkovChannelSpec, e: Ensemble, seed: int,
                   chunk: int = DEFAULT_CHUNK, denominator: str = "printed",
                   workers: int = 1) -> MarkovPopulations:
    """Resample the left state-message pool.

    The emitted message's denominator follows the printed saddle equation,
    which carries no transition factor; with transition rows normalized on the
    emission support this coincides with plain normalization, selectable via
    ``denominator="normalized"``.
    """
    if denominator not in ("printed", "normalized"):
        raise ConfigurationError(f"unknown denominator convention {denominator!r}")
    P, ns = pop.pop_size, pop.num_states
    new_hat = np.empty_like(pop.psi_hat)
    # joint draw weight for target s: m_Ls(s2) * 1/2 * W(y|x2,s2) * V(s|y,x2,s2)
    weights = np.einsum("t,xty,yxtu->uxty", pop.m_Ls, c.W, c.V) * 0.5

    def cell(s, lo, hi, rng):
        B = hi - lo
        flat_w = weights[s].reshape(-1)
        total = flat_w.sum()
        if total <= 0.0:
            new_hat[s, lo:hi] = pop.psi_hat[s, lo:hi]
            return
        cdf = np.cumsum(flat_w / total)
        out = np.empty((B, ns))
        remaining = np.arange(B)
        for _ in range(MAX_RESAMPLE):
            nb = remaining.size
            flat = np.searchsorted(cdf, rng.random(nb), side="right")
            flat = np.minimum(flat, flat_w.size - 1)
            x2 = flat // (ns * c.num_outputs)
            s2 = (flat // c.num_outputs) % ns
            y = flat % c.num_outputs
            m_prev = pop.psi_hat[s2, rng.integers(0, P, size=nb)]
            g = _draw_l_product(pop.phi_hat, x2, e.l, P, rng)
            contrib = g[:, :, None] * m_prev[:, None, :] * np.transpose(c.W[:, :, y], (2, 0, 1))
            num = np.einsum("bxs,bxst->bt", contrib, c.V[y])
            if denominator == "printed":
                den = contrib.sum(axis=(1, 2))
            else:
                den = num.sum(axis=1)
            good = den > 0.0
            out[remaining[good]] = num[good] / den[good, None]
            remaining = remaining[~good]
            if remaining.size == 0:
                break
        _resample_guard(remaining.size, "psi_hat")
        new_hat[s, lo:hi] = _snap(out) if pop.snap_erasure else out

    for s in range(ns):
        _chunked(P, derive_seed(seed, s), chunk,
                 lambda lo, hi, rng, s=s: cell(s, lo, hi, rng), workers)
    return replace(pop, psi_hat=new_hat, generation=pop.generation + 1)


def update_markov_check(pop: MarkovPopulations, e: Ensemble, seed: int,
                        chunk: int = DEFAULT_CHUNK, workers: int = 1) -> MarkovPopulations:
    """Check-side resampling; no channel dependence, same rule as memoryless."""
    P = pop.pop_size
    new_hat = np.empty_like(pop.phi_hat)

    def body(lo, hi, rng):
        B = hi - lo
        for x in range(2):
            bits = _parity_bits(rng, B, e.r - 1, x)
            idx = rng.integers(0, P, size=(B, e.r - 1))
            q1 = pop.phi[bits, idx, 1]
            prod = np.prod(1.0 - 2.0 * q1, axis=1)
            new_hat[x, lo:hi, 0] = 0.5 * (1.0 + prod)
            new_hat[x, lo:hi, 1] = 0.5 * (1.0 - prod)

    _chunked(P, seed, chunk, body, workers)
    if pop.snap_erasure:
        _snap(new_hat)
    return replace(pop, phi_hat=new_hat, generation=pop.generation + 1)


def update_markov_var(pop: MarkovPopulations, c: MarkovChannelSpec, e: Ensemble, seed: int,
                      chunk: int = DEFAULT_CHUNK, workers: int = 1) -> MarkovPopulations:
    """Variable-side resampling: channel evidence enters through the state-
    marginalized product of a right message and a left state message."""
    P, ns = pop.pop_size, pop.num_states
    new_phi = np.empty_like(pop.phi)
    ls_cdf = np.cumsum(pop.m_Ls)

    def cell(x, lo, hi, rng):
        B = hi - lo
        out = np.empty((B, 2))
        remaining = np.arange(B)
        for _ in range(MAX_RESAMPLE):
            nb = remaining.size
            s = np.searchsorted(ls_cdf, rng.random(nb), side="right")
            s = np.minimum(s, ns - 1)
            m_r = pop.psi[x, s, rng.integers(0, P, size=nb)]
            m_l = pop.psi_hat[s, rng.integers(0, P, size=nb)]
            fvec = np.einsum("bat,bt->ba", m_r, m_l)
            msgs = pop.phi_hat[x, rng.integers(0, P, size=(nb, e.l - 1)), :]
            num = fvec * np.prod(msgs, axis=1)
            norm = num.sum(axis=1)
            good = norm > 0.0
            out[remaining[good]] = num[good] / norm[good, None]
            remaining = remaining[~good]
            if remaining.size == 0:
                break
        _resample_guard(remaining.size, "phi")
        new_phi[x, lo:hi] = _snap(out) if pop.snap_erasure else out

    for x in range(2):
        _chunked(P, derive_seed(seed, x), chunk,
                 lambda lo, hi, rng, x=x: cell(x, lo, hi, rng), workers)
    return replace(pop, phi=new_phi, generation=pop.generation + 1)


def markov_sweep(pop: MarkovPopulations, c: MarkovChannelSpec, e: Ensemble, seed: int,
                 chunk: int = DEFAULT_CHUNK, workers: int = 1) -> MarkovPopulations:
    pop = update_psi(pop, c, e, derive_seed(seed, 0), chunk, workers)
    pop = update_psi_hat(pop, c, e, derive_seed(seed, 1), chunk, workers=workers)
    pop = update_markov_check(pop, e, derive_seed(seed, 2), chunk, workers)
    pop = update_markov_var(pop, c, e, derive_seed(seed, 3), chunk, workers)
    return pop


def run_markov_population_dynamics(c: MarkovChannelSpec, e: Ensemble, pop_size: int,
                                   sweeps: int, seed: int,
                                   chunk: int = DEFAULT_CHUNK, workers: int = 1) -> MarkovPopulations:
    if sweeps < 1:
        raise ConfigurationError("sweeps must be >= 1")
    pop = init_markov_populations(c, pop_size, seed)
    for sweep in range(sweeps):
        pop = markov_sweep(pop, c, e, derive_seed(seed, 100, sweep), chunk, workers)
    return pop


def psi_g_const_fraction(pop: MarkovPopulations, c: MarkovChannelSpec, e: Ensemble,
                         seed: int, samples=None) -> float:
    """Fraction of right-message updates whose future evidence is flat.

    Replays the psi sampling rule and tests whether the evidence factor
    G(x', s') is constant, i.e. carries no information about the current
    symbol.  On the dicode erasure channel this fraction is the fixed-point
    erasure parameter of the right-message family.
    """
    P, ns = pop.pop_size, pop.num_states
    B = P if samples is None else int(samples)
    rng = rng_for(seed)
    x = rng.integers(0, 2, size=B)
    s = _sample_rows(np.broadcast_to(np.cumsum(pop.m_Ls), (B, ns)), rng.random(B))
    w_cdf = np.cumsum(c.W, axis=2)
    y = _sample_rows(w_cdf[x, s], rng.random(B))
    x1 = rng.integers(0, 2, size=B)
    s1 = _sample_rows(np.cumsum(c.V[y, x, s, :], axis=1), rng.random(B))
    m_next = pop.psi[x1, s1, rng.integers(0, P, size=B)]
    g = _draw_l_product(pop.phi_hat, x1, e.l, P, rng)
    cs = np.einsum("bat,ba->bt", m_next, g)
    gfac = np.einsum("bxst,bt->bxs", c.V[y], cs).reshape(B, -1)
    spread = gfac.max(axis=1) - gfac.min(axis=1)
    scale = np.maximum(gfac.max(axis=1), 1e-30)
    return float(np.mean(spread <= 1e-9 * np.maximum(scale, 1.0)))


@dataclass(frozen=True)
class DecErasureEstimate:
    """Sweep-averaged erasure fractions of the four message families."""

    e_fv: float
    e_vf: float
    e_Rv: float
    e_Ls: float
    se_fv: float
    se_vf: float
    se_Rv: float
    se_Ls: float
    sweeps_measured: int


def estimate_dec_erasure_fixed_point(c: MarkovChannelSpec, e: Ensemble, pop_size: int,
                                     warmup: int, measure: int, seed: int,
                                     chunk: int = DEFAULT_CHUNK,
                                     batches: int = 10):
    """Run to stationarity, then average per-sweep erasure fractions.

    Returns (populations, DecErasureEstimate); standard errors come from
    batch means over the measurement sweeps.
    """
    pop = init_markov_populations(c, pop_size, seed)
    for sweep in range(warmup):
        pop = markov_sweep(pop, c, e, derive_seed(seed, 100, sweep), chunk)
    recs = np.empty((measure, 4))
    for k in range(measure):
        pop = markov_sweep(pop, c, e, derive_seed(seed, 100, warmup + k), chunk)
        recs[k, 0] = uniform_fraction(pop.phi_hat)
        recs[k, 1] = uniform_fraction(pop.phi)
        recs[k, 2] = psi_g_const_fraction(pop, c, e, derive_seed(seed, 200, k))
        recs[k, 3] = uniform_fraction(pop.psi_hat)
    bm = recs[: (measure // batches) * batches].reshape(batches, -1, 4).mean(axis=1)
    means = recs.mean(axis=0)
    ses = bm.std(axis=0, ddof=1) / np.sqrt(batches)
    est = DecErasureEstimate(
        e_fv=means[0], e_vf=means[1], e_Rv=means[2], e_Ls=means[3],
        se_fv=ses[0], se_vf=ses[1], se_Rv=ses[2], se_Ls=ses[3],
        sweeps_measured=measure,
    )
    return pop, est


@njit(cache=True)
def _hmm_loglik_steps(W, V, V0, xs, uy, us, logc):
    """Per-step log normalizers of the forward recursion along one simulated run."""
    ns = V0.size
    ny = W.shape[2]
    alpha = V0.copy()
    s_true = 0
    # draw the initial hidden state from V0
    acc = 0.0
    u0 = us[0]
    for s in range(ns):
        acc += V0[s]
        if u0 < acc:
            s_true = s
            break
    steps = xs.size
    for i in range(steps):
        x = xs[i]
        # sample the emission
        y = ny - 1
        acc = 0.0
        for cand in range(ny):
            acc += W[x, s_true, cand]
            if uy[i] < acc:
                y = cand
                break
        # forward update with the observed (x, y)
        c_i = 0.0
        beta = np.zeros(ns)
        for s2 in range(ns):
            a = alpha[s2] * W[x, s2, y]
            if a > 0.0:
                for s1 in range(ns):
                    beta[s1] += a * V[y, x, s2, s1]
        for s1 in range(ns):
            c_i += beta[s1]
        logc[i] = np.log(c_i)
        for s1 in range(ns):
            alpha[s1] = beta[s1] / c_i
        # advance the hidden state
        acc = 0.0
        nxt = ns - 1
        for cand in range(ns):
            acc += V[y, x, s_true, cand]
            if us[i + 1] < acc:
                nxt = cand
                break
        s_true = nxt
    return logc


def channel_log_likelihood_rate(c: MarkovChannelSpec, steps: int = 1_000_000,
                                seed: int = 0, burn_in: int = 1000,
                                batches: int = 20):
    """Per-symbol log-likelihood rate of the channel process (nats).

    Simulates i.i.d. uniform inputs through the channel and accumulates the
    state-marginalized log-likelihood via the forward recursion; this is the
    term subtracted from the RS functional to obtain conditional entropy.
    """
    rng = rng_for(seed)
    xs = rng.integers(0, 2, size=steps).astype(np.int64)
    uy = rng.random(steps)
    us = rng.random(steps + 1)
    logc = np.empty(steps)
    _hmm_loglik_steps(c.W, c.V, c.V0, xs, uy, us, logc)
    kept = logc[burn_in:]
    bm = kept[: (kept.size // batches) * batches].reshape(batches, -1).mean(axis=1)
    return float(kept.mean()), float(bm.std(ddof=1) / np.sqrt(batches))


def rs_entropy_markov(pop: MarkovPopulations, c: MarkovChannelSpec, e: Ensemble,
                      mc_samples: int, seed: int, batches: int = 20,
                      channel_steps: int = 1_000_000) -> EntropyEstimate:
    """Monte-Carlo conditional entropy (bits) of the Markov RS functional.

    Evaluates the coupled two-symbol channel term, the single-site
    subtraction term, the factor term and the edge term at the empirical
    pools, minus the channel-process log-likelihood rate.
    """
    if mc_samples < 10_000:
        raise ConfigurationError("mc_samples must be >= 10^4")
    P, ns = pop.pop_size, pop.num_states
    l, r = e.l, e.r
    rng = rng_for(seed)
    w_cdf = np.cumsum(c.W, axis=2)
    ls_cdf = np.cumsum(pop.m_Ls)
    c_rate, c_se = channel_log_likelihood_rate(c, steps=channel_steps, seed=derive_seed(seed, 7))
    per_batch = mc_samples // batches
    vals = np.empty(batches)
    for b in range(batches):
        B = per_batch
        # coupled two-symbol channel term
        x1 = rng.integers(0, 2, size=B)
        x2 = rng.integers(0, 2, size=B)
        s2 = _sample_rows(np.broadcast_to(ls_cdf, (B, ns)), rng.random(B))
        y = _sample_rows(w_cdf[x2, s2], rng.random(B))
        s1 = _sample_rows(np.cumsum(c.V[y, x2, s2, :], axis=1), rng.random(B))
        m_r = pop.psi[x1, s1, rng.integers(0, P, size=B)]
        m_l = pop.psi_hat[s2, rng.integers(0, P, size=B)]
        p1 = _draw_l_product(pop.phi_hat, x1, l, P, rng)
        p2 = _draw_l_product(pop.phi_hat, x2, l, P, rng)
        k = np.einsum("bxst,bat->baxs", c.V[y], m_r)
        inner = np.einsum("ba,baxs->bxs", p1, k)
        wy = np.transpose(c.W[:, :, y], (2, 0, 1))
        za = (wy * inner * p2[:, :, None] * m_l[:, None, :]).sum(axis=(1, 2))
        # single-site subtraction term
        x = rng.integers(0, 2, size=B)
        s = _sample_rows(np.broadcast_to(ls_cdf, (B, ns)), rng.random(B))
        m_r2 = pop.psi[x, s, rng.integers(0, P, size=B)]
        m_l2 = pop.psi_hat[s, rng.integers(0, P, size=B)]
        pv = _draw_l_product(pop.phi_hat, x, l, P, rng)
        zb = (m_r2 * m_l2[:, None, :] * pv[:, :, None]).sum(axis=(1, 2))
        # factor term
        bits = _parity_bits(rng, B, r, 0)
        idx = rng.integers(0, P, size=(B, r))
        q1 = pop.phi[bits, idx, 1]
        zf = 0.5 * (1.0 + np.prod(1.0 - 2.0 * q1, axis=1))
        # edge term
        xe = rng.integers(0, 2, size=B)
        mv = pop.phi[xe, rng.integers(0, P, size=B), :]
        mh = pop.phi_hat[xe, rng.integers(0, P, size=B), :]
        ze = (mv * mh).sum(axis=1)
        for name, z in (("channel", za), ("site", zb), ("factor", zf), ("edge", ze)):
            if np.any(z <= 0.0):
                raise ConvergenceError(f"{name}-term normalizer vanished; populations inconsistent")
        bracket = (
            np.log(za).mean() - np.log(zb).mean()
            + (l / r) * np.log(zf).mean() - l * np.log(ze).mean()
        )
        vals[b] = (bracket - c_rate) / log(2.0)
    mc_se = float(vals.std(ddof=1) / np.sqrt(batches)) if batches > 1 else 0.0
    stderr = float(np.hypot(mc_se, c_se / log(2.0)))
    return EntropyEstimate(value=float(vals.mean()), stderr=stderr, batches=batches)


def export_markov_snapshot(pop: MarkovPopulations, path, meta: dict):
    """Long-format CSV over all four pools, with state columns where defined."""
    import json

    with open(path, "w") as fh:
        fh.write("family,x,s,mass_on_0\n")
        for x in range(2):
            for v in pop.phi[x, :, 0]:
                fh.write(f"phi,{x},,{v:.12g}\n")
            for v in pop.phi_hat[x, :, 0]:
                fh.write(f"phi_hat,{x},,{v:.12g}\n")
        for x in range(2):
            for s in range(pop.num_states):
                for row in pop.psi[x, s, :, 0, :].sum(axis=1):
                    fh.write(f"psi,{x},{s},{row:.12g}\n")
        for s in range(pop.num_states):
            for v in pop.psi_hat[s, :, 0]:
                fh.write(f"psi_hat,,{s},{v:.12g}\n")
    with open(f"{path}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
