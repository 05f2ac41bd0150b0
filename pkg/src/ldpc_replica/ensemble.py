"""Regular LDPC ensemble parameters and the codeword-growth-rate functional.

The growth rate of the expected codeword count of an (l, r)-regular ensemble
is the maximum over saddle-consistent message pairs of

    (log Z_v + (l/r) log Z_f - l log Z_e) / log 2

with unnormalized two-component messages (1 - p, p).  For regular ensembles
the maximizer is the uniform pair and the value equals the design rate
R = 1 - l/r.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class Ensemble:
    """Regular degree pair: every variable node has degree l, every check r."""

    l: int
    r: int

    def __post_init__(self):
        if self.l < 2:
            raise ValidationError(f"variable degree l={self.l} must be >= 2")
        if self.r <= self.l:
            raise ValidationError(
                f"check degree r={self.r} must exceed l={self.l} for positive rate"
            )

    @property
    def rate(self) -> float:
        return 1.0 - self.l / self.r


def new_ensemble(l: int, r: int) -> Ensemble:
    return Ensemble(int(l), int(r))


@dataclass(frozen=True)
class BernoulliMessagePair:
    """Scalar message pair: mass each message family puts on the symbol 1."""

    p_fv: float
    p_vf: float


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"{name}={p} outside [0, 1]")


def check_node_mass(p_vf: float, r: int) -> float:
    """Mass on 1 of the check-side message induced by r-1 inputs of mass p_vf."""
    return 0.5 * (1.0 - (1.0 - 2.0 * p_vf) ** (r - 1))


def rate_functional(e: Ensemble, m: BernoulliMessagePair) -> float:
    """Growth-rate functional in bits per symbol.

    Deterministic messages incompatible with the parity factor (Z_f or Z_e
    equal to zero) yield -inf rather than raising.
    """
    _check_prob("p_fv", m.p_fv)
    _check_prob("p_vf", m.p_vf)
    l, r = e.l, e.r
    z_v = (1.0 - m.p_fv) ** l + m.p_fv**l
    z_f = 0.5 * (1.0 + (1.0 - 2.0 * m.p_vf) ** r)
    z_e = (1.0 - m.p_fv) * (1.0 - m.p_vf) + m.p_fv * m.p_vf
    if z_f <= 0.0 or z_e <= 0.0:
        return float("-inf")
    return (math.log(z_v) + (l / r) * math.log(z_f) - l * math.log(z_e)) / math.log(2.0)


@dataclass(frozen=True)
class RateMaximizerReport:
    max_location: float
    max_value: float
    grid_steps: int


def verify_rate_maximizer(e: Ensemble, grid_steps: int) -> RateMaximizerReport:
    """Scan the saddle-coupled message family on a grid and report the argmax.

    The grid runs over p_vf in [0, 1]; p_fv is the check-side response
    check_node_mass(p_vf, r), so only saddle-consistent pairs are scanned.
    The report states what the grid found; it does not assume the interior
    maximum.
    """
    if grid_steps < 3:
        raise ValidationError(f"grid_steps={grid_steps} must be >= 3")
    grid = np.linspace(0.0, 1.0, grid_steps)
    values = np.array(
        [
            rate_functional(e, BernoulliMessagePair(check_node_mass(p, e.r), p))
            for p in grid
        ]
    )
    best = int(np.argmax(values))
    return RateMaximizerReport(
        max_location=float(grid[best]),
        max_value=float(values[best]),
        grid_steps=grid_steps,
    )
