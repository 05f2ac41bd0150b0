"""Channel specifications: memoryless and Markov, with structural analyses.

A Markov channel is the triple W(y|x,s), V(s'|y,x,s), V0(s) over a binary
input alphabet.  Memoryless channels embed as the single-state case, so every
downstream solver only has to understand the Markov form.

Structural operations:
  * classify            -- general / intersymbol-interference / finite-state
  * check_irreducible_q0 -- irreducibility of the input-averaged state chain
  * stationary_left_message -- fixed point of the left state-message recursion
  * frozen_solution_exists  -- the hard-constraint support condition
"""

import hashlib
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConvergenceError, ValidationError

ROW_SUM_SLACK = 1e-6  # hand-written specs are renormalized up to this much
SUPPORT_CLAMP = 1e-15  # entries below this count as structural zeros


def _normalize_rows(arr, axis, what, mask=None):
    """Renormalize probability rows, rejecting sums off by more than the slack.

    ``mask`` restricts which rows must normalize (True = required); other rows
    are left untouched.
    """
    sums = arr.sum(axis=axis)
    need = np.ones_like(sums, dtype=bool) if mask is None else mask
    bad = need & (np.abs(sums - 1.0) > ROW_SUM_SLACK)
    if np.any(bad):
        idx = tuple(int(k) for k in np.argwhere(bad)[0])
        raise ValidationError(
            f"{what} row {idx} sums to {sums[bad][0]:.6g}, expected 1"
        )
    safe = np.where(need & (sums > 0), sums, 1.0)
    return arr / np.expand_dims(safe, axis)


@dataclass(frozen=True)
class MemorylessChannelSpec:
    """Binary-input memoryless channel: W[x, y] = W(y | x)."""

    outputs: tuple
    W: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != 2 or W.shape[1] != len(self.outputs):
            raise ValidationError(f"W must be (2, {len(self.outputs)}), got {W.shape}")
        if np.any(W < -1e-15) or np.any(W > 1 + 1e-12):
            raise ValidationError("W entries must lie in [0, 1]")
        W = _normalize_rows(np.clip(W, 0.0, None), axis=1, what="W")
        object.__setattr__(self, "outputs", tuple(str(o) for o in self.outputs))
        object.__setattr__(self, "W", W)

    def to_dict(self):
        return {"outputs": list(self.outputs), "W": self.W.tolist()}


@dataclass(frozen=True)
class MarkovChannelSpec:
    """Markov channel: W[x, s, y], V[y, x, s, s'], V0[s]."""

    outputs: tuple
    states: tuple
    W: np.ndarray
    V: np.ndarray
    V0: np.ndarray

    def __post_init__(self):
        ny, ns = len(self.outputs), len(self.states)
        W = np.asarray(self.W, dtype=np.float64)
        V = np.asarray(self.V, dtype=np.float64)
        V0 = np.asarray(self.V0, dtype=np.float64)
        if W.shape != (2, ns, ny):
            raise ValidationError(f"W must be (2, {ns}, {ny}), got {W.shape}")
        if V.shape != (ny, 2, ns, ns):
            raise ValidationError(f"V must be ({ny}, 2, {ns}, {ns}), got {V.shape}")
        if V0.shape != (ns,):
            raise ValidationError(f"V0 must be ({ns},), got {V0.shape}")
        if np.any(W < -1e-15) or np.any(V < -1e-15) or np.any(V0 < -1e-15):
            raise ValidationError("channel tensors must be nonnegative")
        W = _normalize_rows(np.clip(W, 0.0, None), axis=2, what="W")
        # V rows only need to normalize where the emitting event has mass
        support = np.transpose(W, (2, 0, 1)) > SUPPORT_CLAMP  # (y, x, s)
        V = _normalize_rows(np.clip(V, 0.0, None), axis=3, what="V", mask=support)
        V0 = _normalize_rows(np.clip(V0, 0.0, None)[None, :], axis=1, what="V0")[0]
        object.__setattr__(self, "outputs", tuple(str(o) for o in self.outputs))
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "V0", V0)

    @property
    def num_states(self):
        return len(self.states)

    @property
    def num_outputs(self):
        return len(self.outputs)

    def to_dict(self):
        return {
            "outputs": list(self.outputs),
            "states": list(self.states),
            "W": self.W.tolist(),
            "V": self.V.tolist(),
            "V0": self.V0.tolist(),
        }


class ChannelClass(Enum):
    GENERAL = "general"
    INTERSYMBOL_INTERFERENCE = "intersymbol_interference"
    FINITE_STATE_MARKOV = "finite_state_markov"


def classify(c: MarkovChannelSpec) -> ChannelClass:
    """Most specific class whose independence condition holds entrywise."""
    tol = 1e-12
    y_free = np.all(np.abs(c.V - c.V[:1]) <= tol)
    if not y_free:
        return ChannelClass.GENERAL
    x_free = np.all(np.abs(c.V[0] - c.V[0, :1]) <= tol)
    if x_free:
        return ChannelClass.FINITE_STATE_MARKOV
    return ChannelClass.INTERSYMBOL_INTERFERENCE


def make_dec(eps: float) -> MarkovChannelSpec:
    """Dicode erasure channel: output x - s or an erasure, next state x."""
    if not 0.0 <= eps <= 1.0:
        raise ValidationError(f"erasure probability {eps} outside [0, 1]")
    outputs = ("-1", "0", "1", "*")
    states = ("0", "1")
    W = np.zeros((2, 2, 4))
    for x in range(2):
        for s in range(2):
            W[x, s, (x - s) + 1] = 1.0 - eps
            W[x, s, 3] = eps
    V = np.zeros((4, 2, 2, 2))
    for x in range(2):
        V[:, x, :, x] = 1.0
    V0 = np.array([0.5, 0.5])
    return MarkovChannelSpec(outputs=outputs, states=states, W=W, V=V, V0=V0)


def make_bec(eps: float) -> MemorylessChannelSpec:
    if not 0.0 <= eps <= 1.0:
        raise ValidationError(f"erasure probability {eps} outside [0, 1]")
    W = np.array([[1 - eps, 0.0, eps], [0.0, 1 - eps, eps]])
    return MemorylessChannelSpec(outputs=("0", "1", "*"), W=W)


def make_bsc(p: float) -> MemorylessChannelSpec:
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"crossover probability {p} outside [0, 1]")
    W = np.array([[1 - p, p], [p, 1 - p]])
    return MemorylessChannelSpec(outputs=("0", "1"), W=W)


def make_z_channel(p: float) -> MemorylessChannelSpec:
    """Asymmetric: 0 is sent cleanly, 1 flips to 0 with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"flip probability {p} outside [0, 1]")
    W = np.array([[1.0, 0.0], [p, 1 - p]])
    return MemorylessChannelSpec(outputs=("0", "1"), W=W)


def make_gilbert_elliott(g: float, b: float, e_good: float = 0.1, e_bad: float = 0.5) -> MarkovChannelSpec:
    """Two-state bursty erasure channel; g = good->bad rate, b = bad->good."""
    for name, v in (("g", g), ("b", b), ("e_good", e_good), ("e_bad", e_bad)):
        if not 0.0 <= v <= 1.0:
            raise ValidationError(f"{name}={v} outside [0, 1]")
    outputs = ("0", "1", "*")
    states = ("good", "bad")
    W = np.zeros((2, 2, 3))
    for x in range(2):
        for s, e in enumerate((e_good, e_bad)):
            W[x, s, x] = 1 - e
            W[x, s, 2] = e
    chain = np.array([[1 - g, g], [b, 1 - b]])
    V = np.broadcast_to(chain, (3, 2, 2, 2)).copy()
    return MarkovChannelSpec(outputs=outputs, states=states, W=W, V=V, V0=np.array([0.5, 0.5]))


def embed_memoryless(w: MemorylessChannelSpec) -> MarkovChannelSpec:
    """Single-state embedding so the Markov machinery subsumes memoryless channels."""
    ny = len(w.outputs)
    W = w.W[:, None, :].copy()
    V = np.ones((ny, 2, 1, 1))
    return MarkovChannelSpec(outputs=w.outputs, states=("0",), W=W, V=V, V0=np.array([1.0]))


def is_generalized_erasure(c: MarkovChannelSpec) -> bool:
    """True when every output's likelihood over (x, s) is an indicator times a constant."""
    for y in range(c.num_outputs):
        vals = c.W[:, :, y]
        pos = vals[vals > SUPPORT_CLAMP]
        if pos.size and np.ptp(pos) > 1e-12:
            return False
    return True


def q0_support_and_matrix(c: MarkovChannelSpec):
    """Support set T0 and the row-stochastic input-averaged state chain on it.

    Q0(s1 | s2) is proportional to sum_y sum_x W(y|x,s2) V(s1|y,x,s2); rows are
    normalized with the largest entry compensated so each row sums to exactly 1.
    """
    W = np.where(c.W > SUPPORT_CLAMP, c.W, 0.0)
    V = np.where(c.V > SUPPORT_CLAMP, c.V, 0.0)
    # raw[s2, s1] = sum_{y,x} W(y|x,s2) V(s1|y,x,s2)
    raw = np.einsum("xsy,yxst->st", W, V)
    ns = c.num_states
    in_set = np.ones(ns, dtype=bool)
    while True:
        alive = raw[:, in_set].sum(axis=1) > 0
        new = in_set & alive
        if np.array_equal(new, in_set):
            break
        in_set = new
    if not np.any(in_set):
        raise ValidationError("channel has an empty recurrent state support")
    t0 = np.flatnonzero(in_set)
    sub = raw[np.ix_(t0, t0)]
    q0 = sub / sub.sum(axis=1, keepdims=True)
    for i in range(q0.shape[0]):
        j = int(np.argmax(q0[i]))
        q0[i, j] += 1.0 - q0[i].sum()
    return t0, q0


def _strongly_connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    for mat in (adj, adj.T):
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(mat[u]):
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        if not seen.all():
            return False
    return True


def check_irreducible_q0(c: MarkovChannelSpec) -> bool:
    """Strong connectivity of the positive-entry digraph of Q0 on T0."""
    _, q0 = q0_support_and_matrix(c)
    return _strongly_connected(q0 > 0.0)


def stationary_left_message(
    c: MarkovChannelSpec,
    m_fv_power: float = 0.5,
    tol: float = 1e-12,
    max_iter: int = 200_000,
) -> np.ndarray:
    """Stationary left state message by damped power iteration.

    ``m_fv_power`` is the relative weight the (already l-th-powered) scalar
    check-side message puts on input 1; 0.5 is the uniform-message case in
    which the input weighting drops out entirely.
    """
    if not 0.0 < m_fv_power < 1.0:
        raise ValidationError(f"m_fv_power={m_fv_power} outside (0, 1)")
    W = np.where(c.W > SUPPORT_CLAMP, c.W, 0.0)
    V = np.where(c.V > SUPPORT_CLAMP, c.V, 0.0)
    wx = np.array([1.0 - m_fv_power, m_fv_power])
    # kernel[s2, s1] = sum_x wx(x) sum_y W(y|x,s2) V(s1|y,x,s2)
    kernel = np.einsum("x,xsy,yxst->st", wx, W, V)
    t0, _ = q0_support_and_matrix(c)
    kernel = kernel[np.ix_(t0, t0)]
    ns = kernel.shape[0]
    m = np.full(ns, 1.0 / ns)
    # halving with the identity map makes the iteration converge even for
    # periodic chains, with the same fixed point
    for it in range(max_iter):
        nxt = kernel.T @ m
        total = nxt.sum()
        if total <= 0:
            raise ValidationError("left-message kernel annihilates the state simplex")
        nxt = 0.5 * m + 0.5 * (nxt / total)
        res = float(np.max(np.abs(nxt - m)))
        m = nxt
        if res <= tol:
            out = np.zeros(c.num_states)
            out[t0] = m / m.sum()
            return out
    raise ConvergenceError(
        f"stationary left message did not reach {tol} in {max_iter} iterations",
        residual=res,
        iterations=max_iter,
    )


@dataclass(frozen=True)
class FrozenWitness:
    """A concrete violation of the hard-constraint support condition."""

    kind: str  # "multiple_next_states" or "multiple_sources"
    y: str
    fixed: tuple
    offenders: tuple


def frozen_solution_exists(c: MarkovChannelSpec):
    """Hard-constraint test: (bool, witness or None).

    True iff for every output y, fixing (x2, s2) leaves at most one positive
    successor s1, and fixing s1 leaves at most one positive (x2, s2) source.
    """
    W = np.where(c.W > SUPPORT_CLAMP, c.W, 0.0)
    V = np.where(c.V > SUPPORT_CLAMP, c.V, 0.0)
    ns = c.num_states
    for y in range(c.num_outputs):
        supp = (W[:, :, y, None] * V[y]) > 0.0  # (x2, s2, s1)
        for x2 in range(2):
            for s2 in range(ns):
                s1s = np.flatnonzero(supp[x2, s2])
                if s1s.size > 1:
                    witness = FrozenWitness(
                        kind="multiple_next_states",
                        y=c.outputs[y],
                        fixed=(str(x2), c.states[s2]),
                        offenders=tuple(c.states[s] for s in s1s),
                    )
                    return False, witness
        for s1 in range(ns):
            pairs = np.argwhere(supp[:, :, s1])
            if pairs.shape[0] > 1:
                witness = FrozenWitness(
                    kind="multiple_sources",
                    y=c.outputs[y],
                    fixed=(c.states[s1],),
                    offenders=tuple((str(x), c.states[s]) for x, s in pairs),
                )
                return False, witness
    return True, None


def load_channel_spec(path):
    """Read a channel spec file; memoryless documents omit states/V/V0."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return channel_spec_from_dict(data, where=str(path))


def channel_spec_from_dict(data, where="<dict>"):
    if not isinstance(data, dict) or "outputs" not in data or "W" not in data:
        raise ValidationError(f"{where}: channel spec needs 'outputs' and 'W'")
    if "states" in data:
        for key in ("V", "V0"):
            if key not in data:
                raise ValidationError(f"{where}: Markov spec missing '{key}'")
        # file layout is W[x][s][y], V[y][x][s][s']
        return MarkovChannelSpec(
            outputs=tuple(data["outputs"]),
            states=tuple(data["states"]),
            W=np.asarray(data["W"], dtype=np.float64),
            V=np.asarray(data["V"], dtype=np.float64),
            V0=np.asarray(data["V0"], dtype=np.float64),
        )
    return MemorylessChannelSpec(
        outputs=tuple(data["outputs"]), W=np.asarray(data["W"], dtype=np.float64)
    )


def save_channel_spec(spec, path):
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def channel_spec_hash(spec) -> str:
    payload = json.dumps(spec.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()
