"""Population dynamics for the RS saddle equations on memoryless channels.

Message distributions conditioned on the transmitted symbol are represented
by sample pools (arrays of normalized two-component messages).  One sweep
resamples the whole pool through the check- and variable-node saddle
equations with the scalar node weights fixed at 1/2, which for regular
ensembles is exact.

Updates rebuild pools from the previous generation (full resampling), so a
sweep has no within-sweep order dependence.  Random streams are chunked:
chunk c of an update seeded with s draws from the stream (s, c), making
results a function of (seed, pop_size, chunk) only.
"""

import json
from dataclasses import dataclass, replace
from math import log

import numpy as np

from ._rng import DEFAULT_CHUNK, chunk_slices, derive_seed, rng_for
from .channels import MemorylessChannelSpec
from .ensemble import Ensemble
from .errors import ConfigurationError, ConvergenceError

MIN_POP = 100
MAX_RESAMPLE = 100


@dataclass(frozen=True)
class DePopulations:
    """phi: variable-to-factor pool, phi_hat: factor-to-variable pool.

    Arrays have shape (2, pop_size, 2): conditioning symbol, sample, mass on
    the symbols 0 and 1.
    """

    phi: np.ndarray
    phi_hat: np.ndarray
    generation: int = 0
    resample_failures: int = 0

    @property
    def pop_size(self) -> int:
        return self.phi.shape[1]


def init_populations(pop_size: int, seed: int) -> DePopulations:
    """All messages start uniform (total ignorance); the seed only feeds later
    resampling, so any seed yields the same initial state."""
    if pop_size < MIN_POP:
        raise ConfigurationError(f"pop_size={pop_size} below minimum {MIN_POP}")
    uniform = np.full((2, pop_size, 2), 0.5)
    return DePopulations(phi=uniform.copy(), phi_hat=uniform.copy())


def _parity_bits(rng, count, width, parity):
    """Uniform bit tuples of the given width whose XOR equals parity, exactly."""
    bits = np.empty((count, width), dtype=np.int64)
    if width > 1:
        bits[:, :-1] = rng.integers(0, 2, size=(count, width - 1))
        bits[:, -1] = np.bitwise_xor.reduce(bits[:, :-1], axis=1) ^ parity
    else:
        bits[:, 0] = parity
    return bits


def _sample_rows(cdf_rows, u):
    """Index of first cdf entry above u, one draw per row."""
    return np.argmax(u[:, None] < cdf_rows, axis=1)


def _chunked(pop_size, seed, chunk, body, workers=1):
    """Run body(lo, hi, rng) over chunks; chunk c draws from stream (seed, c).

    Outputs are written into disjoint slices, so scheduling across workers
    cannot change the result.
    """
    slices = chunk_slices(pop_size, chunk)
    if workers <= 1 or len(slices) <= 1:
        for ci, (lo, hi) in enumerate(slices):
            body(lo, hi, rng_for(seed, ci))
        return
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(body, lo, hi, rng_for(seed, ci))
            for ci, (lo, hi) in enumerate(slices)
        ]
        for f in futures:
            f.result()


def update_check_population(pop: DePopulations, e: Ensemble, seed: int,
                            chunk: int = DEFAULT_CHUNK, workers: int = 1) -> DePopulations:
    """Resample the factor-to-variable pool.

    Conditioned on x, the r-1 companion symbols are uniform subject to parity
    x; the emitted message is the parity convolution of the drawn messages.
    """
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
    return replace(pop, phi_hat=new_hat, generation=pop.generation + 1)


def update_var_population(pop: DePopulations, e: Ensemble, w: MemorylessChannelSpec,
                          seed: int, chunk: int = DEFAULT_CHUNK, workers: int = 1) -> DePopulations:
    """Resample the variable-to-factor pool.

    Conditioned on x, draw an output y ~ W(.|x) and l-1 incoming messages,
    then emit the normalized product W(y|.) * prod_i M_i(.).  Zero normalizers
    (possible only on zero-probability outputs) are redrawn a bounded number
    of times and counted.
    """
    P = pop.pop_size
    new_phi = np.empty_like(pop.phi)
    cdf = np.cumsum(w.W, axis=1)
    failures = 0

    def body(lo, hi, rng):
        nonlocal failures
        B = hi - lo
        for x in range(2):
            remaining = np.arange(B)
            out = np.empty((B, 2))
            for _ in range(MAX_RESAMPLE):
                nb = remaining.size
                y = _sample_rows(np.broadcast_to(cdf[x], (nb, cdf.shape[1])), rng.random(nb))
                idx = rng.integers(0, P, size=(nb, e.l - 1))
                msgs = pop.phi_hat[x, idx, :]
                prod = np.prod(msgs, axis=1)
                numer = w.W[:, y].T * prod
                norm = numer.sum(axis=1)
                good = norm > 0.0
                out[remaining[good]] = numer[good] / norm[good, None]
                remaining = remaining[~good]
                if remaining.size == 0:
                    break
            if remaining.size:
                failures += remaining.size
                raise ConvergenceError(
                    f"{remaining.size} samples found no positive normalizer "
                    f"after {MAX_RESAMPLE} redraws"
                )
            new_phi[x, lo:hi] = out

    _chunked(P, seed, chunk, body, workers)
    return replace(pop, phi=new_phi, generation=pop.generation + 1,
                   resample_failures=pop.resample_failures + failures)


def run_population_dynamics(e: Ensemble, w: MemorylessChannelSpec, pop_size: int,
                            sweeps: int, seed: int,
                            chunk: int = DEFAULT_CHUNK, workers: int = 1) -> DePopulations:
    """Alternate check/variable updates for the given number of sweeps."""
    if sweeps < 1:
        raise ConfigurationError("sweeps must be >= 1")
    pop = init_populations(pop_size, seed)
    for sweep in range(sweeps):
        pop = update_check_population(pop, e, derive_seed(seed, sweep, 0), chunk, workers)
        pop = update_var_population(pop, e, w, derive_seed(seed, sweep, 1), chunk, workers)
    return pop


def uniform_fraction(pool: np.ndarray, tol: float = 1e-9) -> float:
    """Fraction of messages indistinguishable from the uniform message."""
    flat = pool.reshape(-1, pool.shape[-1])
    return float(np.mean(np.all(np.abs(flat - 1.0 / flat.shape[-1]) <= tol, axis=1)))


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    stderr: float
    batches: int = 20


def memoryless_channel_term(w: MemorylessChannelSpec) -> float:
    """sum_x (1/2) sum_y W(y|x) log W(y|x), in nats (0 log 0 = 0)."""
    W = w.W
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(W > 0, W * np.log(np.where(W > 0, W, 1.0)), 0.0)
    return float(0.5 * t.sum())


def rs_entropy_memoryless(pop: DePopulations, e: Ensemble, w: MemorylessChannelSpec,
                          mc_samples: int, seed: int, batches: int = 20) -> EntropyEstimate:
    """Monte-Carlo conditional entropy (bits) at the given populations.

    Evaluates the extremized RS functional (factor + variable - l * edge
    terms, uniform node weights) and subtracts the channel term, with batch
    means for the standard error.
    """
    if mc_samples < 10_000:
        raise ConfigurationError("mc_samples must be >= 10^4")
    P = pop.pop_size
    l, r = e.l, e.r
    rng = rng_for(seed)
    per_batch = mc_samples // batches
    cdf = np.cumsum(w.W, axis=1)
    c_term = memoryless_channel_term(w)
    vals = np.empty(batches)
    for b in range(batches):
        B = per_batch
        # factor term: even-parity r-tuples through the parity convolution
        bits = _parity_bits(rng, B, r, 0)
        idx = rng.integers(0, P, size=(B, r))
        q1 = pop.phi[bits, idx, 1]
        zf = 0.5 * (1.0 + np.prod(1.0 - 2.0 * q1, axis=1))
        if np.any(zf <= 0.0):
            raise ConvergenceError("factor-term normalizer vanished; populations inconsistent")
        t_f = np.log(zf).mean()
        # variable term
        x = rng.integers(0, 2, size=B)
        y = _sample_rows(cdf[x], rng.random(B))
        idx = rng.integers(0, P, size=(B, l))
        msgs = pop.phi_hat[x[:, None], idx, :]
        zv = (w.W[:, y].T * np.prod(msgs, axis=1)).sum(axis=1)
        if np.any(zv <= 0.0):
            raise ConvergenceError("variable-term normalizer vanished; populations inconsistent")
        t_v = np.log(zv).mean()
        # edge term
        x = rng.integers(0, 2, size=B)
        mv = pop.phi[x, rng.integers(0, P, size=B), :]
        mh = pop.phi_hat[x, rng.integers(0, P, size=B), :]
        ze = (mv * mh).sum(axis=1)
        if np.any(ze <= 0.0):
            raise ConvergenceError("edge-term normalizer vanished; populations inconsistent")
        t_e = np.log(ze).mean()
        vals[b] = ((l / r) * t_f + t_v - l * t_e - c_term) / log(2.0)
    stderr = float(vals.std(ddof=1) / np.sqrt(batches)) if batches > 1 else 0.0
    return EntropyEstimate(value=float(vals.mean()), stderr=stderr, batches=batches)


def export_population_snapshot(pop: DePopulations, path, meta: dict):
    """CSV of the variable-to-factor pool (x, mass_on_0) plus a metadata sidecar."""
    with open(path, "w") as fh:
        fh.write("x,mass_on_0\n")
        for x in range(2):
            for v in pop.phi[x, :, 0]:
                fh.write(f"{x},{v:.12g}\n")
    with open(f"{path}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
