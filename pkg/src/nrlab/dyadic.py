"""Dyadic cube systems on half-spaces, Haar bases and martingale sums.

A system is the standard binary lattice of side 2^-k translated by one
global shift vector h (|h| < 1), restricted to a bounding box and to one
closed half-space.  Cubes that straddle the interface x_n = 0 are kept
in a separate list and never enter averages or energy sums.  The global
shift realizes adjacent systems via h in {0, 1/3}^n: relative to the
unshifted lattice the per-generation offset alternates between 1/3 and
2/3 of the side, which is the usual one-third trick.

Sampled data lives on a quadrature grid (see discretize.QuadratureGrid);
this module only assumes the grid exposes `nodes`, `spacing` and node
count, so there is no import cycle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Cube",
    "DyadicSystem",
    "HaarFunction",
    "SampledField",
    "build_system",
    "haar_basis",
    "conditional_expectation",
    "martingale_difference",
    "median",
    "median_split",
    "companion_split",
    "dyadic_energy_sum",
    "separated_subcubes",
    "gradient_oscillation_check",
    "nodes_in_cube",
    "box_midpoint_mean",
    "numeric_gradient",
]


@dataclass(frozen=True)
class Cube:
    """Half-space dyadic cube: box = shift + 2^-k (m + [0,1)^n)."""

    k: int
    m: tuple
    shift: tuple
    half: str

    def __post_init__(self):
        if self.half not in ("plus", "minus"):
            raise ValueError("half must be 'plus' or 'minus'")
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        object.__setattr__(self, "shift", tuple(float(v) for v in self.shift))
        if len(self.m) != len(self.shift):
            raise ValueError("index and shift dimensions differ")

    @property
    def n(self) -> int:
        return len(self.m)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.k)

    @property
    def vertex(self) -> np.ndarray:
        return np.asarray(self.shift) + self.side * np.asarray(self.m, dtype=float)

    @property
    def center(self) -> np.ndarray:
        return self.vertex + 0.5 * self.side

    @property
    def box(self) -> np.ndarray:
        """Shape (n, 2): half-open extent [lo, hi) per axis."""
        v = self.vertex
        return np.stack([v, v + self.side], axis=1)

    @property
    def volume(self) -> float:
        return self.side**self.n

    def in_half(self) -> bool:
        lo, hi = self.vertex[-1], self.vertex[-1] + self.side
        return lo >= 0.0 if self.half == "plus" else hi <= 0.0

    def straddles(self) -> bool:
        lo = self.vertex[-1]
        return lo < 0.0 < lo + self.side

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        lo = self.vertex
        hi = lo + self.side
        return np.all((pts >= lo) & (pts < hi), axis=-1)


@dataclass
class DyadicSystem:
    """Admissible (and straddling) cubes of one shifted lattice on a box."""

    half: str
    shift: tuple
    box: np.ndarray
    k_min: int
    k_max: int
    cubes: dict = field(default_factory=dict)
    straddling: dict = field(default_factory=dict)
    _index: dict = field(default_factory=dict, repr=False)

    def generations(self) -> range:
        return range(self.k_min, self.k_max + 1)

    def at(self, k: int) -> list:
        if k not in self.cubes:
            raise ValueError(f"generation {k} outside system range")
        return self.cubes[k]

    def get(self, k: int, m: tuple):
        return self._index.get((k, tuple(m)))

    def children(self, Q: Cube) -> list:
        """Admissible children present in the system (all 2^n for an
        admissible parent inside the box)."""
        kids = []
        for s in itertools.product((0, 1), repeat=Q.n):
            child = self.get(Q.k + 1, tuple(2 * mi + si for mi, si in zip(Q.m, s)))
            if child is not None:
                kids.append(child)
        return kids

    def parent(self, Q: Cube):
        return self.get(Q.k - 1, tuple(mi // 2 for mi in Q.m))

    def cube_containing(self, x: np.ndarray, k: int):
        """Admissible generation-k cube containing x, or None."""
        x = np.asarray(x, dtype=float)
        side = 2.0 ** (-k)
        m = tuple(int(np.floor(v)) for v in (x - np.asarray(self.shift)) / side)
        return self.get(k, m)


def build_system(half: str, shift, box, k_range) -> DyadicSystem:
    """Enumerate the admissible cubes of a shifted lattice on box x half.

    Cubes fully contained in the bounding box are kept; those inside the
    closed half-space are admissible, those crossing x_n = 0 are flagged
    as straddling, and cubes on the wrong side are dropped.

    Raises "degenerate domain" when the box does not meet the requested
    half-space.
    """
    box = np.atleast_2d(np.asarray(box, dtype=float))
    n = box.shape[0]
    shift = tuple(float(v) for v in np.broadcast_to(np.asarray(shift, float), (n,)))
    if np.linalg.norm(shift) >= 1.0:
        raise ValueError("|shift| must be < 1")
    k_min, k_max = int(k_range[0]), int(k_range[1])
    if k_min > k_max:
        raise ValueError("k_min must be <= k_max")
    if half == "plus" and box[-1, 1] <= 0.0:
        raise ValueError("degenerate domain: box misses the plus half-space")
    if half == "minus" and box[-1, 0] >= 0.0:
        raise ValueError("degenerate domain: box misses the minus half-space")

    system = DyadicSystem(half=half, shift=shift, box=box, k_min=k_min, k_max=k_max)
    for k in range(k_min, k_max + 1):
        side = 2.0 ** (-k)
        # integer index windows per axis, with fuzz so exact box edges count
        ranges = []
        for j in range(n):
            lo = int(np.ceil((box[j, 0] - shift[j]) / side - 1e-9))
            hi = int(np.floor((box[j, 1] - shift[j]) / side + 1e-9)) - 1
            ranges.append(range(lo, hi + 1))
        admissible, crossing = [], []
        for m in itertools.product(*ranges):
            Q = Cube(k, m, shift, half)
            if Q.in_half():
                admissible.append(Q)
            elif Q.straddles():
                crossing.append(Q)
        system.cubes[k] = admissible
        system.straddling[k] = crossing
        for Q in admissible:
            system._index[(k, Q.m)] = Q
    return system


@dataclass
class SampledField:
    """One real value per grid node."""

    grid: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.grid.nodes),):
            raise ValueError("values must be one scalar per grid node")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")


@dataclass(frozen=True)
class HaarFunction:
    """Tensor Haar function: constant +-|Q|^(-1/2) on each child of Q.

    The sign on the child with binary position s is prod_j (-1)^(s_j e_j)
    for the index vector e != 0, which gives mean zero, unit L2 norm and
    pairwise orthogonality across indices.
    """

    parent: Cube
    eps: tuple
    child_signs: tuple  # one sign per child, children in lexicographic s order

    @property
    def amplitude(self) -> float:
        return self.parent.volume ** (-0.5)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        out = np.zeros(pts.shape[:-1])
        inside = self.parent.contains(pts)
        if not np.any(inside):
            return out
        rel = (pts - self.parent.vertex) / self.parent.side
        # child binary position per axis: 0 for [0, 1/2), 1 for [1/2, 1)
        s = (rel >= 0.5).astype(int)
        idx = np.zeros(pts.shape[:-1], dtype=int)
        for j in range(self.parent.n):
            idx = 2 * idx + s[..., j]
        signs = np.asarray(self.child_signs)
        out[inside] = self.amplitude * signs[idx[inside]]
        return out


def haar_basis(Q: Cube) -> list:
    """All 2^n - 1 Haar functions of a cube with its full set of children."""
    n = Q.n
    m_q = 2**n
    if m_q < 2:
        raise ValueError("no Haar functions")
    children = list(itertools.product((0, 1), repeat=n))
    basis = []
    for eps in itertools.product((0, 1), repeat=n):
        if not any(eps):
            continue
        signs = tuple(
            float(np.prod([(-1.0) ** (s[j] * eps[j]) for j in range(n)]))
            for s in children
        )
        basis.append(HaarFunction(parent=Q, eps=eps, child_signs=signs))
    return basis


def nodes_in_cube(grid, Q: Cube) -> np.ndarray:
    """Boolean mask of grid nodes inside the half-open cube box."""
    return Q.contains(grid.nodes)


def _require_resolved(grid, k: int):
    side = 2.0 ** (-k)
    if side / float(np.max(grid.spacing)) < 4.0 - 1e-9:
        raise ValueError(f"grid too coarse for generation {k}")


def conditional_expectation(f: SampledField, k: int, system: DyadicSystem) -> SampledField:
    """Average f over each admissible generation-k cube.

    Nodes not covered by an admissible cube (straddling or outside the
    box coverage) keep their original values; all downstream sums only
    ever look at nodes inside admissible cubes.
    """
    _require_resolved(f.grid, k)
    if k not in system.cubes:
        raise ValueError(f"generation {k} outside system range")
    out = f.values.copy()
    for Q in system.cubes[k]:
        mask = nodes_in_cube(f.grid, Q)
        if not np.any(mask):
            raise ValueError("grid too coarse")
        vals = f.values[mask]
        # constant blocks average to the exact constant, so energy sums
        # detect (per-half-)constant fields as exact zeros
        out[mask] = vals[0] if np.all(vals == vals[0]) else vals.mean()
    return SampledField(f.grid, out)


def martingale_difference(f: SampledField, k: int, system: DyadicSystem) -> SampledField:
    """E_{k+1}(f) - E_k(f); mean zero on every admissible generation-k cube."""
    fine = conditional_expectation(f, k + 1, system)
    coarse = conditional_expectation(f, k, system)
    return SampledField(f.grid, fine.values - coarse.values)


def median(values, S=None) -> float:
    """Median in the level-set sense with a deterministic tie-break.

    Returns the smallest sample value a such that both strict level sets
    {v > a} and {v < a} contain at most half of the nodes of S.  S may be
    a boolean mask or index array; None means all nodes.
    """
    vals = values.values if isinstance(values, SampledField) else np.asarray(values, float)
    if S is not None:
        vals = vals[S]
    if vals.size == 0:
        raise ValueError("median of an empty node set")
    sorted_vals = np.sort(vals)
    half = vals.size / 2.0
    for a in np.unique(sorted_vals):
        if np.count_nonzero(vals > a) <= half and np.count_nonzero(vals < a) <= half:
            return float(a)
    raise AssertionError("unreachable: a sample median always exists")


def median_split(Q: Cube, b: SampledField, alpha: float):
    """Split Q's nodes by level: E1 = {b <= alpha}, E2 = {b > alpha}.

    Returns two integer index arrays into the grid's node list.
    """
    idx = np.flatnonzero(nodes_in_cube(b.grid, Q))
    vals = b.values[idx]
    return idx[vals <= alpha], idx[vals > alpha]


def companion_split(mask, values, alpha: float):
    """Level split used on the companion ball: F1 = {v >= alpha},
    F2 = {v <= alpha}.  `mask` is boolean over nodes; values on ties land
    in both halves, mirroring the closed inequalities."""
    vals = values.values if isinstance(values, SampledField) else np.asarray(values, float)
    idx = np.flatnonzero(np.asarray(mask))
    sel = vals[idx]
    return idx[sel >= alpha], idx[sel <= alpha]


def dyadic_energy_sum(b: SampledField, system: DyadicSystem, p: float) -> float:
    """Sum over generations and admissible cubes of the cube-averaged
    p-th power of the martingale difference:

        sum_k sum_Q avg_Q |E_{k+1}(b) - E_k(b)|^p

    for k from k_min to k_max - 1.  Zero iff b is grid-constant on each
    admissible finest-generation cube.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    total = 0.0
    for k in range(system.k_min, system.k_max):
        delta = martingale_difference(b, k, system).values
        for Q in system.cubes[k]:
            mask = nodes_in_cube(b.grid, Q)
            total += float(np.mean(np.abs(delta[mask]) ** p))
    return total


def separated_subcubes(Q: Cube, a) -> tuple:
    """Two generation-(k+2) subcubes of Q with a guaranteed coordinate gap.

    With vertices at vertex(Q) + 2^-(k+2) (1 + a_j) and
    vertex(Q) + 2^-(k+2) (1 - a_j) per axis, every x in Q' and y in Q''
    satisfy a_j (x_j - y_j) >= 2^-(k+2) in every coordinate.  (The gap is
    2^-(k+2), a quarter of the side of Q.)
    """
    a = np.asarray(a, dtype=int)
    if a.shape != (Q.n,) or not np.all(np.abs(a) == 1):
        raise ValueError("a must be a vector of +-1 per axis")
    m1 = tuple(4 * mi + 1 + ai for mi, ai in zip(Q.m, a))
    m2 = tuple(4 * mi + 1 - ai for mi, ai in zip(Q.m, a))
    return (
        Cube(Q.k + 2, m1, Q.shift, Q.half),
        Cube(Q.k + 2, m2, Q.shift, Q.half),
    )


def box_midpoint_mean(func: Callable, box: np.ndarray, points_per_axis: int = 24) -> float:
    """Mean of func over an axis-aligned box by the tensor midpoint rule."""
    box = np.asarray(box, dtype=float)
    axes = [
        lo + (np.arange(points_per_axis) + 0.5) * (hi - lo) / points_per_axis
        for lo, hi in box
    ]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return float(np.mean(func(mesh.reshape(-1, box.shape[0]))))


def numeric_gradient(func: Callable, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a vectorized function."""
    x = np.asarray(x, dtype=float)
    n = x.size
    steps = h * np.eye(n)
    return np.array(
        [(float(func(x + steps[j])) - float(func(x - steps[j]))) / (2 * h) for j in range(n)]
    )


def gradient_oscillation_check(b, x0: np.ndarray, k: int, points_per_axis: int = 24):
    """Compare the separated-subcube mean gap against 2^-k |grad b(x0)|.

    b is a closed-form symbol (anything callable on (..., n) arrays, or
    an object with `.func` and optionally `.grad`).  The cube is the
    generation-k cube of the unshifted lattice containing x0, a_j is the
    sign of the j-th partial derivative (ties resolved to +1), and the
    two subcube means are evaluated by midpoint quadrature.

    Returns (lhs, rhs, lhs/rhs).
    """
    x0 = np.asarray(x0, dtype=float)
    func = getattr(b, "func", b)
    grad_fn = getattr(b, "grad", None)
    grad = np.asarray(grad_fn(x0) if grad_fn is not None else numeric_gradient(func, x0))
    norm = float(np.linalg.norm(grad))
    if norm < 1e-12:
        raise ValueError("degenerate gradient")

    side = 2.0 ** (-k)
    m = tuple(int(np.floor(v / side)) for v in x0)
    half = "plus" if x0[-1] >= 0 else "minus"
    Q = Cube(k, m, (0.0,) * x0.size, half)
    a = np.where(grad >= 0.0, 1, -1)
    q1, q2 = separated_subcubes(Q, a)
    lhs = abs(
        box_midpoint_mean(func, q1.box, points_per_axis)
        - box_midpoint_mean(func, q2.box, points_per_axis)
    )
    rhs = side * norm
    return lhs, rhs, lhs / rhs
