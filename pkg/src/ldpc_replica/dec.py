"""Closed-form replica analysis on the dicode erasure channel.

Density evolution of joint iterative decoding collapses to four scalar
erasure parameters obeying

    e_fv = 1 - (1 - e_vf)^(r-1)
    e_vf = e_fv^(l-1) * e_Rv * (eps + (1-eps)/2 * e_Ls)
    e_Rv = eps + (1-eps)/2 * e_Rv * e_fv^l
    e_Ls = e_fv^l * (eps + (1-eps)/2 * e_Ls)

and the per-symbol conditional entropy of a fixed point is

    h = -l*e_fv + eps*e_Ls + l*(r-1)/r * (1 - (1-e_fv)(1-e_vf))   [bits].

Forward iteration from the all-ones start converges to the largest fixed
point; the trivial point (0, 0, eps, 0) always exists and carries entropy 0.
"""

import csv
import math
from dataclasses import dataclass, replace

from numba import njit

from .ensemble import Ensemble
from .errors import ValidationError

NONTRIVIAL_EFV = 1e-6  # erasure level separating the two fixed-point branches


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-12
    max_iter: int = 1_000_000
    damping: float = 0.0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValidationError("tol must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValidationError("damping must lie in [0, 1)")


@dataclass(frozen=True)
class DecFixedPoint:
    e_fv: float
    e_vf: float
    e_Rv: float
    e_Ls: float
    residual: float
    iterations: int
    converged: bool

    @property
    def nontrivial(self) -> bool:
        return self.e_fv > NONTRIVIAL_EFV


@dataclass(frozen=True)
class EntropyPoint:
    eps: float
    h_nontrivial: float
    h_reported: float
    fp: DecFixedPoint


@njit(cache=True)
def _dec_sweeps(l, r, eps, tol, max_iter, damping):
    # update order e_Rv, e_Ls, e_vf, e_fv, each using the freshest values
    e_fv = 1.0
    e_vf = 1.0
    e_rv = 1.0
    e_ls = 1.0
    res = 0.0
    for it in range(max_iter):
        n_rv = eps + 0.5 * (1.0 - eps) * e_rv * e_fv**l
        n_rv = damping * e_rv + (1.0 - damping) * n_rv
        r1 = abs(n_rv - e_rv)
        e_rv = n_rv

        n_ls = e_fv**l * (eps + 0.5 * (1.0 - eps) * e_ls)
        n_ls = damping * e_ls + (1.0 - damping) * n_ls
        r2 = abs(n_ls - e_ls)
        e_ls = n_ls

        n_vf = e_fv ** (l - 1) * e_rv * (eps + 0.5 * (1.0 - eps) * e_ls)
        n_vf = damping * e_vf + (1.0 - damping) * n_vf
        r3 = abs(n_vf - e_vf)
        e_vf = n_vf

        n_fv = 1.0 - (1.0 - e_vf) ** (r - 1)
        n_fv = damping * e_fv + (1.0 - damping) * n_fv
        r4 = abs(n_fv - e_fv)
        e_fv = n_fv

        res = max(max(r1, r2), max(r3, r4))
        if res <= tol:
            return e_fv, e_vf, e_rv, e_ls, res, it + 1, True
    return e_fv, e_vf, e_rv, e_ls, res, max_iter, False


def dec_forward_de(e: Ensemble, eps: float, cfg: SolverConfig = SolverConfig()) -> DecFixedPoint:
    """Forward density evolution from the all-ones (total ignorance) start.

    Exhausting max_iter flags the result unconverged instead of raising.
    Converged runs that landed on the trivial branch are snapped to the exact
    trivial point, which is the iteration's limit there.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValidationError(f"eps={eps} outside [0, 1]")
    e_fv, e_vf, e_rv, e_ls, res, iters, conv = _dec_sweeps(
        e.l, e.r, eps, cfg.tol, cfg.max_iter, cfg.damping
    )
    fp = DecFixedPoint(
        e_fv=e_fv, e_vf=e_vf, e_Rv=e_rv, e_Ls=e_ls,
        residual=res, iterations=iters, converged=conv,
    )
    if conv and not fp.nontrivial:
        trivial = dec_trivial_fixed_point(eps)
        fp = replace(trivial, iterations=iters)
    return fp


def dec_trivial_fixed_point(eps: float) -> DecFixedPoint:
    """The analytic error-free point (0, 0, eps, 0); satisfies the system exactly."""
    if not 0.0 <= eps <= 1.0:
        raise ValidationError(f"eps={eps} outside [0, 1]")
    return DecFixedPoint(
        e_fv=0.0, e_vf=0.0, e_Rv=eps, e_Ls=0.0,
        residual=0.0, iterations=0, converged=True,
    )


def dec_fixed_point_residual(e: Ensemble, eps: float, fp: DecFixedPoint) -> float:
    """Max absolute defect of the four coupled equations at the given point."""
    l, r = e.l, e.r
    d1 = fp.e_fv - (1.0 - (1.0 - fp.e_vf) ** (r - 1))
    d2 = fp.e_vf - fp.e_fv ** (l - 1) * fp.e_Rv * (eps + 0.5 * (1 - eps) * fp.e_Ls)
    d3 = fp.e_Rv - (eps + 0.5 * (1 - eps) * fp.e_Rv * fp.e_fv**l)
    d4 = fp.e_Ls - fp.e_fv**l * (eps + 0.5 * (1 - eps) * fp.e_Ls)
    return max(abs(d1), abs(d2), abs(d3), abs(d4))


def dec_conditional_entropy(e: Ensemble, eps: float, fp: DecFixedPoint) -> float:
    """Per-symbol conditional entropy (bits) at a fixed point; negative on the
    nontrivial branch between the BP and MAP thresholds."""
    for name, v in (("e_fv", fp.e_fv), ("e_vf", fp.e_vf), ("e_Rv", fp.e_Rv), ("e_Ls", fp.e_Ls)):
        if not 0.0 <= v <= 1.0:
            raise ValidationError(f"{name}={v} outside [0, 1]")
    l, r = e.l, e.r
    return (
        -l * fp.e_fv
        + eps * fp.e_Ls
        + l * ((r - 1) / r) * (1.0 - (1.0 - fp.e_fv) * (1.0 - fp.e_vf))
    )


def _bisect(predicate, lo, hi, tol):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def dec_bp_threshold(e: Ensemble, bisect_tol: float = 1e-6,
                     cfg: SolverConfig = SolverConfig()) -> float:
    """Largest eps with only the trivial forward-DE fixed point, by bisection."""
    if bisect_tol <= 0:
        raise ValidationError("bisect_tol must be positive")
    lo_triv = not dec_forward_de(e, 0.0, cfg).nontrivial
    hi_nontriv = dec_forward_de(e, 1.0, cfg).nontrivial
    if not (lo_triv and hi_nontriv):
        raise ValidationError("no trivial/nontrivial bracket on [0, 1]")
    return _bisect(lambda x: dec_forward_de(e, x, cfg).nontrivial, 0.0, 1.0, bisect_tol)


@dataclass(frozen=True)
class MapThresholdInfo:
    value: float
    degenerate: bool
    bp_value: float


def dec_map_threshold_info(e: Ensemble, bisect_tol: float = 1e-6,
                           cfg: SolverConfig = SolverConfig()) -> MapThresholdInfo:
    """Zero crossing of the nontrivial-branch entropy above the BP threshold.

    If the branch is already nonnegative right above the BP threshold (the
    low-degree degenerate case), the BP threshold itself is returned, flagged.
    """
    bp = dec_bp_threshold(e, bisect_tol, cfg)

    def h_at(eps):
        return dec_conditional_entropy(e, eps, dec_forward_de(e, eps, cfg))

    probe = min(1.0, bp + max(bisect_tol, 1e-6))
    if h_at(probe) >= -1e-9:
        return MapThresholdInfo(value=bp, degenerate=True, bp_value=bp)
    value = _bisect(lambda x: h_at(x) >= 0.0, probe, 1.0, bisect_tol)
    return MapThresholdInfo(value=value, degenerate=False, bp_value=bp)


def dec_map_threshold(e: Ensemble, bisect_tol: float = 1e-6,
                      cfg: SolverConfig = SolverConfig()) -> float:
    return dec_map_threshold_info(e, bisect_tol, cfg).value


def dec_entropy_curve(e: Ensemble, eps_grid, cfg: SolverConfig = SolverConfig()):
    """Forward DE along an ascending grid, entropy with and without the
    nonnegativity cut (MAP decoding picks the trivial point where h < 0)."""
    grid = [float(x) for x in eps_grid]
    if any(not 0.0 <= x <= 1.0 for x in grid):
        raise ValidationError("grid values must lie in [0, 1]")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError("grid must be strictly ascending")
    points = []
    for eps in grid:
        fp = dec_forward_de(e, eps, cfg)
        h = dec_conditional_entropy(e, eps, fp)
        points.append(EntropyPoint(eps=eps, h_nontrivial=h, h_reported=max(0.0, h), fp=fp))
    return points


CURVE_CSV_HEADER = [
    "eps", "e_fv", "e_vf", "e_Rv", "e_Ls",
    "h_nontrivial", "h_reported", "converged", "iterations",
]


def fmt12(x: float) -> str:
    return f"{x:.12g}"


def entropy_curve_to_csv(points, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CURVE_CSV_HEADER)
    for p in points:
        writer.writerow([
            fmt12(p.eps), fmt12(p.fp.e_fv), fmt12(p.fp.e_vf),
            fmt12(p.fp.e_Rv), fmt12(p.fp.e_Ls),
            fmt12(p.h_nontrivial), fmt12(p.h_reported),
            str(p.fp.converged).lower(), str(p.fp.iterations),
        ])


def shannon_threshold_rate_half() -> float:
    """Erasure level at which the DEC's information rate drops to one half."""
    return (1.0 + math.sqrt(17.0)) / 8.0
