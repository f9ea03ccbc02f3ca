"""Besov norms of half-space symbols, three routes.

Heat route: (int_0^oo (t^-alpha ||t D e^{-tD} b||_p)^q dt/t)^(1/q) with D
the interface-Neumann Laplacian; t D e^{-tD} b is obtained from the
semigroup alone as -t d/dt e^{-tD} b, a centered difference in log t.

Difference route: (int ||f(.+t) - f||_p^q / |t|^{n+q alpha} dt)^(1/q),
truncated shifts in log-polar form.

Extension route: difference norms of the two even extensions, summed.

All integrals are truncated to a box and to [t_min, t_max]; symbols are
compactly supported with margin, which keeps the dropped tails small
relative to the totals.  Truncation is the dominant systematic error
and is the reason route comparisons use calibrated ratio windows, not
tight tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discretize import QuadratureGrid, Symbol, apply_semigroup
from .dyadic import SampledField

__all__ = [
    "BesovParams",
    "even_extension",
    "default_time_grid",
    "default_shift_grid",
    "besov_heat_norm",
    "besov_diff_norm",
    "besov_neumann_norm",
]

# centered log-t difference step for -t d/dt
_H_LOG = 0.05


@dataclass(frozen=True)
class BesovParams:
    alpha: float
    p: float
    q: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.p < 1 or not math.isfinite(self.p):
            raise ValueError("p must lie in [1, oo)")
        if self.q < 1 or not math.isfinite(self.q):
            raise ValueError("q must lie in [1, oo)")


def even_extension(f, half: str) -> Symbol:
    """Reflect the chosen half across the interface: the extension agrees
    with f there and satisfies f_e(x', -x_n) = f_e(x', x_n) exactly."""
    if half not in ("plus", "minus"):
        raise ValueError("half must be 'plus' or 'minus'")
    func = getattr(f, "func", f)
    sign = 1.0 if half == "plus" else -1.0

    def extended(x):
        x = np.asarray(x, dtype=float)
        folded = x.copy()
        folded[..., -1] = sign * np.abs(x[..., -1])
        return func(folded)

    name = getattr(f, "name", "symbol") + ("_e+" if half == "plus" else "_e-")
    return Symbol(name=name, func=extended, kind=getattr(f, "kind", "generic"))


def default_time_grid(t_min: float = 1e-3, t_max: float = 10.0, per_decade: int = 16) -> np.ndarray:
    if not 0 < t_min < t_max:
        raise ValueError("need 0 < t_min < t_max")
    decades = math.log10(t_max / t_min)
    count = int(math.ceil(decades * per_decade)) + 1
    return np.geomspace(t_min, t_max, count)


def default_shift_grid(grid: QuadratureGrid, per_decade: int = 16, angles: int = 16) -> np.ndarray:
    """Log-polar shift sample from 2 grid spacings up to the box diagonal.

    Built-in direction sampling covers n in {1, 2}; higher dimensions
    need an explicit shift set.
    """
    n = grid.dim
    r_min = 2.0 * float(np.max(grid.spacing))
    r_max = float(np.linalg.norm(grid.box[:, 1] - grid.box[:, 0]))
    radii = default_time_grid(r_min, r_max, per_decade)
    if n == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif n == 2:
        theta = 2.0 * np.pi * np.arange(angles) / angles
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    else:
        raise ValueError("default shift grid covers n <= 2; pass shift_grid explicitly")
    return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, n)


def _lp_norm(values: np.ndarray, weight: float, p: float) -> float:
    return float(np.sum(np.abs(values) ** p) * weight) ** (1.0 / p)


def besov_heat_norm(b, params: BesovParams, grid: QuadratureGrid, t_grid=None, half: str = None) -> float:
    """Heat-route Besov norm on the grid.

    t-nodes below the resolution floor max(spacing)^2 are dropped: the
    factored midpoint semigroup aliases below it (Poisson-summation
    error ~ exp(-4 pi^2 t / dx^2)) while the true integrand vanishes
    like t^(1-alpha) there.  `half` restricts the L^p node set to one
    half-space (the two evolutions are independent, so restriction is
    exact); None integrates over the whole box.
    """
    if t_grid is None:
        t_grid = default_time_grid()
    t_grid = np.sort(np.asarray(t_grid, dtype=float).ravel())
    if t_grid.size == 0:
        raise ValueError("empty t grid")
    if np.any(t_grid <= 0):
        raise ValueError("t grid must be positive")
    floor = float(np.max(grid.spacing)) ** 2
    t_used = t_grid[t_grid >= floor]
    if t_used.size < 2:
        raise ValueError("t grid has fewer than 2 nodes above the resolution floor")

    func = getattr(b, "func", b)
    fld = SampledField(grid, np.asarray(func(grid.nodes), dtype=float))
    if half is None:
        sel = slice(None)
        measure = grid.weight
    else:
        sel = grid.mask_plus if half == "plus" else grid.mask_minus
        measure = grid.weight

    integrand_q = np.empty(t_used.size)
    for i, t in enumerate(t_used):
        up = apply_semigroup(fld, t * math.exp(_H_LOG), grid, kernel="neumann-box")
        dn = apply_semigroup(fld, t * math.exp(-_H_LOG), grid, kernel="neumann-box")
        deriv = -(up.values - dn.values) / (2.0 * _H_LOG)
        integrand_q[i] = (t ** (-params.alpha) * _lp_norm(deriv[sel], measure, params.p)) ** params.q
    total = float(np.trapezoid(integrand_q, np.log(t_used)))
    return total ** (1.0 / params.q)


def _shift_weights(shifts: np.ndarray) -> np.ndarray:
    """Log-polar quadrature weights r^n dlog(r) dtheta for a product
    radius x direction sample (trapezoid in log r, uniform in angle)."""
    radii = np.linalg.norm(shifts, axis=1)
    uniq = np.unique(np.round(np.log(radii), 9))
    if uniq.size < 2:
        raise ValueError("shift grid needs at least 2 radii")
    dlog = np.zeros(uniq.size)
    dlog[1:-1] = (uniq[2:] - uniq[:-2]) / 2.0
    dlog[0] = (uniq[1] - uniq[0]) / 2.0
    dlog[-1] = (uniq[-1] - uniq[-2]) / 2.0
    which = np.searchsorted(uniq, np.round(np.log(radii), 9))
    counts = np.bincount(which, minlength=uniq.size)
    n = shifts.shape[1]
    sphere = 2.0 if n == 1 else 2.0 * np.pi if n == 2 else 4.0 * np.pi
    return radii**n * dlog[which] * (sphere / counts[which])


def besov_diff_norm(f, params: BesovParams, grid: QuadratureGrid, shift_grid=None) -> float:
    """Difference-quotient Besov norm, truncated to the grid box.

    The shift set must be a log-polar product sample (all radii repeated
    across a fixed direction set); weights are reconstructed from it, so
    a user-supplied set with that structure integrates correctly.
    """
    if shift_grid is None:
        shift_grid = default_shift_grid(grid)
    shifts = np.asarray(shift_grid, dtype=float)
    if shifts.size == 0:
        raise ValueError("empty shift grid")
    shifts = shifts.reshape(-1, grid.dim)
    radii = np.linalg.norm(shifts, axis=1)
    if np.any(radii == 0):
        raise ValueError("shift grid must exclude 0")

    func = getattr(f, "func", f)
    base = np.asarray(func(grid.nodes), dtype=float)
    weights = _shift_weights(shifts)
    total = 0.0
    for s, r, w in zip(shifts, radii, weights):
        diff = np.asarray(func(grid.nodes + s), dtype=float) - base
        lp = _lp_norm(diff, grid.weight, params.p)
        total += w * lp**params.q / r ** (grid.dim + params.q * params.alpha)
    return total ** (1.0 / params.q)


def besov_neumann_norm(b, params: BesovParams, grid: QuadratureGrid, shift_grid=None) -> float:
    """Sum of the difference norms of the two even extensions.

    Vanishes exactly on per-half constants (both extensions constant)
    and reduces to a single term when b is supported in one half.
    """
    plus = besov_diff_norm(even_extension(b, "plus"), params, grid, shift_grid)
    minus = besov_diff_norm(even_extension(b, "minus"), params, grid, shift_grid)
    return plus + minus
