"""Tanner multigraph sampling and GF(2) codeword sampling.

Graphs come from the configuration model: the n*l variable sockets are paired
with the n*(1-R)*r check sockets by a uniform random permutation.  Multi-edges
are kept; a double edge contributes multiplicity 2 to its check, which cancels
mod 2 in the parity-check matrix but still occupies two decoder sockets.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from ._rng import rng_for
from .ensemble import Ensemble
from .errors import ConfigurationError


@dataclass(frozen=True)
class TannerGraph:
    """Bipartite multigraph: edge k joins variable edge_var[k] to check edge_check[k].

    Edges of a configuration-model graph are listed in variable-socket order
    (variable i owns sockets i*l .. i*l+l-1).  Instances are immutable; all
    derived views are recomputed by consumers.
    """

    n: int
    m: int
    edge_var: np.ndarray
    edge_check: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "edge_var", np.asarray(self.edge_var, dtype=np.int64))
        object.__setattr__(self, "edge_check", np.asarray(self.edge_check, dtype=np.int64))
        if self.edge_var.shape != self.edge_check.shape:
            raise ConfigurationError("edge endpoint arrays must have equal length")

    @property
    def num_edges(self) -> int:
        return int(self.edge_var.size)

    def var_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_var, minlength=self.n)

    def check_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_check, minlength=self.m)


def sample_tanner_graph(e: Ensemble, n: int, seed: int) -> TannerGraph:
    """Uniform socket permutation under the given seed; deterministic."""
    if (n * e.l) % e.r != 0:
        raise ConfigurationError(
            f"n*l = {n * e.l} sockets not divisible by check degree r = {e.r}"
        )
    m = (n * e.l) // e.r
    num_edges = n * e.l
    perm = rng_for(seed).permutation(num_edges)
    edge_var = np.arange(num_edges, dtype=np.int64) // e.l
    edge_check = perm // e.r
    return TannerGraph(n=n, m=m, edge_var=edge_var, edge_check=edge_check)


def parity_ok(g: TannerGraph, x: np.ndarray) -> bool:
    """True iff every check sees an even number of ones (multiplicities count)."""
    sums = np.bincount(g.edge_check, weights=x[g.edge_var].astype(np.float64), minlength=g.m)
    return bool(np.all(np.rint(sums).astype(np.int64) % 2 == 0))


def _packed_parity_matrix(g: TannerGraph) -> np.ndarray:
    """Bit-packed H over GF(2); multi-edge multiplicities reduced mod 2."""
    nw = (g.n + 63) // 64
    words = np.zeros((g.m, nw), dtype=np.uint64)
    for a, i in zip(g.edge_check, g.edge_var):
        words[a, i >> 6] ^= np.uint64(1) << np.uint64(i & 63)
    return words


@njit(cache=True)
def _gf2_eliminate(words, ncols):
    """In-place Gauss-Jordan; pivots taken in column order, first nonzero row.

    Returns pivot_row_of_col (-1 where the column is free).
    """
    m, nw = words.shape
    used = np.zeros(m, dtype=np.uint8)
    pivot_row_of_col = np.full(ncols, -1, dtype=np.int64)
    for col in range(ncols):
        w = col >> 6
        bit = np.uint64(1) << np.uint64(col & 63)
        piv = -1
        for i in range(m):
            if used[i] == 0 and (words[i, w] & bit) != 0:
                piv = i
                break
        if piv < 0:
            continue
        used[piv] = 1
        pivot_row_of_col[col] = piv
        for i in range(m):
            if i != piv and (words[i, w] & bit) != 0:
                for k in range(nw):
                    words[i, k] ^= words[piv, k]
    return pivot_row_of_col


@njit(cache=True)
def _popcount_and_parity(row, mask):
    acc = np.uint64(0)
    for k in range(row.size):
        v = row[k] & mask[k]
        # SWAR popcount
        v = v - ((v >> np.uint64(1)) & np.uint64(0x5555555555555555))
        v = (v & np.uint64(0x3333333333333333)) + ((v >> np.uint64(2)) & np.uint64(0x3333333333333333))
        v = (v + (v >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
        acc += (v * np.uint64(0x0101010101010101)) >> np.uint64(56)
    return int(acc & np.uint64(1))


def _solve_uniform_kernel(words, pivot_row_of_col, n, rng):
    """Uniform null-space sample: free variables random, pivots back-substituted."""
    free_cols = np.flatnonzero(pivot_row_of_col < 0)
    x = np.zeros(n, dtype=np.uint8)
    x[free_cols] = rng.integers(0, 2, size=free_cols.size, dtype=np.uint8)
    nw = words.shape[1]
    mask = np.zeros(nw, dtype=np.uint64)
    for c in free_cols:
        if x[c]:
            mask[c >> 6] |= np.uint64(1) << np.uint64(c & 63)
    for col in np.flatnonzero(pivot_row_of_col >= 0):
        row = words[pivot_row_of_col[col]]
        x[col] = _popcount_and_parity(row, mask)
    return x


def encode_random_codeword(g: TannerGraph, seed: int) -> np.ndarray:
    """Uniform random codeword of the code defined by the graph's checks.

    GF(2) elimination pivots columns left to right with first-nonzero-row
    selection; free variables are drawn from the seed, pivots follow by
    back-substitution.  The all-zero free assignment gives the all-zero word.
    """
    words = _packed_parity_matrix(g)
    pivots = _gf2_eliminate(words, g.n)
    return _solve_uniform_kernel(words, pivots, g.n, rng_for(seed))


def parity_check_rank(g: TannerGraph) -> int:
    words = _packed_parity_matrix(g)
    pivots = _gf2_eliminate(words, g.n)
    return int(np.count_nonzero(pivots >= 0))
