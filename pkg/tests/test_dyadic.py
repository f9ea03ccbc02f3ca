"""Dyadic machinery: lattice properties brute-forced over several
generations, Haar orthonormality/reconstruction, martingale identities
with frozen hand-computed values, medians and level splits, energy sums,
separated subcubes and the gradient-oscillation ratio."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrlab.discretize import make_grid
from nrlab.dyadic import (
    Cube,
    SampledField,
    box_midpoint_mean,
    build_system,
    companion_split,
    conditional_expectation,
    dyadic_energy_sum,
    gradient_oscillation_check,
    haar_basis,
    martingale_difference,
    median,
    median_split,
    nodes_in_cube,
    separated_subcubes,
)

BOX2 = ((0.0, 2.0), (0.0, 2.0))


def _chi_unit(points):
    pts = np.asarray(points)
    return np.all((pts >= 0.0) & (pts < 1.0), axis=-1).astype(float)


def _field(func, grid):
    return SampledField(grid, func(grid.nodes))


# ---------------------------------------------------------------------------
# system construction and lattice properties


def test_build_system_standard_unit_generation():
    sys0 = build_system("plus", (0.0, 0.0), ((-2, 2), (0, 2)), (0, 0))
    boxes = sorted(tuple(Q.m) for Q in sys0.at(0))
    assert boxes == sorted(
        (i, j) for i in range(-2, 2) for j in range(0, 2)
    )
    assert sys0.straddling[0] == []


def test_build_system_shifted_flags_straddlers():
    sysh = build_system("plus", (1 / 3, 1 / 3), ((-2, 2), (-2, 2)), (0, 0))
    for Q in sysh.at(0):
        assert Q.vertex[1] >= 0.0
    straddle_js = {Q.m[1] for Q in sysh.straddling[0]}
    assert straddle_js == {-1}
    for Q in sysh.straddling[0]:
        lo, hi = Q.box[1]
        assert lo < 0.0 < hi


def test_build_system_errors():
    with pytest.raises(ValueError, match="degenerate domain"):
        build_system("plus", (0.0, 0.0), ((-1, 1), (-2, -1)), (0, 1))
    with pytest.raises(ValueError, match="degenerate domain"):
        build_system("minus", (0.0, 0.0), ((-1, 1), (1, 2)), (0, 1))
    with pytest.raises(ValueError, match="shift"):
        build_system("plus", (1.0, 0.5), ((-1, 1), (0, 1)), (0, 1))
    with pytest.raises(ValueError):
        build_system("plus", (0.0, 0.0), ((-1, 1), (0, 1)), (2, 1))


def _boxes(cubes):
    lo = np.array([Q.vertex for Q in cubes])
    side = np.array([[Q.side] for Q in cubes])
    return lo, lo + side


@pytest.mark.parametrize("half", ["plus", "minus"])
@pytest.mark.parametrize("shift", [(0.0, 0.0), (1 / 3, 1 / 3)])
def test_lattice_properties_brute_force(half, shift):
    # six generations; properties restricted to the bounding box
    system = build_system(half, shift, ((-2, 2), (-2, 2)), (-1, 4))
    rng = np.random.default_rng(23)

    for k in system.generations():
        cubes = system.at(k) + system.straddling[k]
        assert cubes, f"generation {k} empty"
        lo, hi = _boxes(cubes)
        # (I) disjointness within a generation: no pairwise box overlap
        # (eps absorbs the one-ulp slack of vertex = shift + side*m sums)
        eps = 1e-12
        overlap = np.all(
            (lo[:, None, :] + eps < hi[None, :, :])
            & (lo[None, :, :] + eps < hi[:, None, :]),
            axis=-1,
        )
        np.fill_diagonal(overlap, False)
        assert not overlap.any()
        # (I) covering: interior points of box cap half lie in exactly one
        # kept cube (away from the frame, where cubes may be clipped)
        side = 2.0 ** (-k)
        pts = rng.uniform(-2 + side, 2 - side, size=(500, 2))
        pts[:, 1] = np.abs(pts[:, 1]) * (1 if half == "plus" else -1)
        pts = pts[np.abs(pts[:, 1]) > 1e-9]
        counts = np.sum(
            np.all((pts[:, None, :] >= lo[None]) & (pts[:, None, :] < hi[None]), axis=-1),
            axis=1,
        )
        assert np.all(counts == 1)

    gens = list(system.generations())
    for kc, kf in itertools.combinations(gens, 2):
        if not system.at(kc) or not system.at(kf):
            continue  # coarsest shifted generation may be all-straddling
        lo_c, hi_c = _boxes(system.at(kc))
        lo_f, hi_f = _boxes(system.at(kf))
        eps = 1e-12
        inter = np.all(
            (lo_f[:, None, :] + eps < hi_c[None, :, :])
            & (lo_c[None, :, :] + eps < hi_f[:, None, :]),
            axis=-1,
        )
        contained = np.all(
            (lo_f[:, None, :] >= lo_c[None, :, :] - eps)
            & (hi_f[:, None, :] <= hi_c[None, :, :] + eps),
            axis=-1,
        )
        # (II) fine and coarse cubes are nested or disjoint
        assert np.all(~inter | contained)
        # (III) at most one coarse admissible container per fine cube
        assert np.all(contained.sum(axis=1) <= 1)
        if shift == (0.0, 0.0):
            # aligned box: the unique container always exists
            assert np.all(contained.sum(axis=1) == 1)

    # (IV) every admissible cube splits into exactly 2^n admissible children
    for k in gens[:-1]:
        for Q in system.at(k):
            kids = system.children(Q)
            assert len(kids) == 4
            assert sum(c.volume for c in kids) == pytest.approx(Q.volume, rel=1e-12)
            for c in kids:
                assert np.all(c.vertex >= Q.vertex - 1e-12)
                assert np.all(c.vertex + c.side <= Q.vertex + Q.side + 1e-12)
                assert system.parent(c) == Q


def test_cube_containing_roundtrip():
    system = build_system("plus", (1 / 3, 1 / 3), ((-2, 2), (-2, 2)), (0, 3))
    rng = np.random.default_rng(4)
    for _ in range(100):
        k = rng.integers(0, 4)
        pts = rng.uniform(-1, 1, size=2)
        pts[1] = abs(pts[1]) + 0.4
        Q = system.cube_containing(pts, int(k))
        if Q is not None:
            assert Q.contains(pts[None])[0]
            assert Q.k == k


# ---------------------------------------------------------------------------
# Haar functions


def test_haar_count_orthonormality_and_support():
    Q = Cube(0, (0, 0), (0.0, 0.0), "plus")
    basis = haar_basis(Q)
    assert len(basis) == 3
    # quadrature Gram matrix against the identity, including the scaled
    # indicator as zeroth element
    def indicator(pts):
        return Q.contains(pts).astype(float) / math.sqrt(Q.volume)

    fns = [indicator] + [h.evaluate for h in basis]
    gram = np.empty((4, 4))
    for i, fi in enumerate(fns):
        for j, fj in enumerate(fns):
            gram[i, j] = box_midpoint_mean(
                lambda p: fi(p) * fj(p), Q.box, points_per_axis=8
            ) * Q.volume
    assert np.max(np.abs(gram - np.eye(4))) < 1e-12


def test_haar_mean_zero_and_l1_linf():
    Q = Cube(2, (1, -4), (0.0, 0.0), "minus")
    for h in haar_basis(Q):
        mean = box_midpoint_mean(h.evaluate, Q.box, points_per_axis=8)
        assert abs(mean) < 1e-14
        l1 = box_midpoint_mean(lambda p: np.abs(h.evaluate(p)), Q.box, 8) * Q.volume
        linf = h.amplitude
        assert 0.25 <= l1 * linf <= 4.0
        assert l1 * linf == pytest.approx(1.0, rel=1e-12)


def test_haar_vanishes_outside_parent():
    Q = Cube(0, (0, 0), (0.0, 0.0), "plus")
    h = haar_basis(Q)[0]
    outside = np.array([[1.5, 0.5], [-0.5, 0.5], [0.5, 1.01]])
    assert np.array_equal(h.evaluate(outside), np.zeros(3))


def test_haar_reconstruction_exact_at_child_resolution():
    # f = indicator of the left half of the unit cube
    Q = Cube(0, (0, 0), (0.0, 0.0), "plus")

    def f(pts):
        pts = np.asarray(pts)
        return (
            np.all((pts >= [0.0, 0.0]) & (pts < [0.5, 1.0]), axis=-1)
        ).astype(float)

    basis = haar_basis(Q)
    coeffs = [
        box_midpoint_mean(lambda p: f(p) * h.evaluate(p), Q.box, 8) * Q.volume
        for h in basis
    ]
    mean = box_midpoint_mean(f, Q.box, 8)
    child_centers = np.array(
        [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]]
    )
    recon = mean + sum(
        c * h.evaluate(child_centers) for c, h in zip(coeffs, basis)
    )
    assert np.allclose(recon, f(child_centers), atol=1e-14)


def test_haar_rejects_zero_dimensional():
    with pytest.raises(ValueError, match="no Haar"):
        haar_basis(Cube(0, (), (), "plus"))


# ---------------------------------------------------------------------------
# conditional expectations and martingale differences


def test_conditional_expectation_frozen_average():
    grid = make_grid(2, BOX2, 16)
    system = build_system("plus", (0.0, 0.0), BOX2, (-1, 1))
    f = _field(_chi_unit, grid)
    coarse = conditional_expectation(f, -1, system)
    assert np.all(coarse.values == 0.25)


def test_conditional_expectation_linear_symbol():
    grid = make_grid(2, ((0.0, 1.0), (0.0, 1.0)), 16)
    system = build_system("plus", (0.0, 0.0), ((0.0, 1.0), (0.0, 1.0)), (0, 2))
    f = SampledField(grid, grid.nodes[:, 0])
    avg = conditional_expectation(f, 0, system)
    assert np.allclose(avg.values, 0.5, atol=1e-15)


def test_conditional_expectation_rejects_coarse_grid():
    grid = make_grid(2, BOX2, 4)
    system = build_system("plus", (0.0, 0.0), BOX2, (-1, 3))
    f = _field(_chi_unit, grid)
    with pytest.raises(ValueError, match="too coarse"):
        conditional_expectation(f, 3, system)


def test_martingale_difference_frozen_values_and_mean_zero():
    grid = make_grid(2, BOX2, 16)
    system = build_system("plus", (0.0, 0.0), BOX2, (-1, 1))
    f = _field(_chi_unit, grid)
    delta = martingale_difference(f, -1, system)
    inside = _chi_unit(grid.nodes) == 1.0
    assert np.all(delta.values[inside] == 0.75)
    assert np.all(delta.values[~inside] == -0.25)
    assert abs(delta.values.mean()) < 1e-12


def test_tower_property():
    grid = make_grid(2, BOX2, 32)
    system = build_system("plus", (0.0, 0.0), BOX2, (-1, 2))
    rng = np.random.default_rng(9)
    f = SampledField(grid, np.sin(3 * grid.nodes[:, 0]) + rng.normal(size=len(grid.nodes)))
    two_step = conditional_expectation(
        conditional_expectation(f, 1, system), 0, system
    )
    one_step = conditional_expectation(f, 0, system)
    assert np.max(np.abs(two_step.values - one_step.values)) < 1e-10


def test_martingale_parseval_at_p2():
    # cube-averaged squared martingale differences match the Haar
    # coefficient mass, generation by generation
    grid = make_grid(2, BOX2, 64)
    system = build_system("plus", (0.0, 0.0), BOX2, (-1, 2))
    f = SampledField(grid, np.sin(2.1 * grid.nodes[:, 0]) * np.cos(1.3 * grid.nodes[:, 1]))
    w = grid.weight
    for k in range(-1, 2):
        delta = martingale_difference(f, k, system).values
        lhs = 0.0
        rhs = 0.0
        for Q in system.at(k):
            mask = nodes_in_cube(grid, Q)
            lhs += float(np.mean(delta[mask] ** 2))
            for h in haar_basis(Q):
                coeff = float(np.sum(f.values * h.evaluate(grid.nodes) * w))
                rhs += coeff**2 / Q.volume
        assert lhs == pytest.approx(rhs, abs=1e-10)


# ---------------------------------------------------------------------------
# medians and level splits


def test_median_frozen_examples():
    assert median(np.array([1.0, 1.0, 2.0, 5.0])) == 1.0
    assert median(np.array([1.0, 2.0, 3.0])) == 2.0
    assert median(np.full(7, 3.25)) == 3.25


def test_median_counting_inequalities_random():
    rng = np.random.default_rng(2)
    for _ in range(200):
        vals = rng.normal(size=rng.integers(1, 40))
        a = median(vals)
        assert a in vals
        assert np.count_nonzero(vals > a) <= vals.size / 2
        assert np.count_nonzero(vals < a) <= vals.size / 2


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=25))
@settings(max_examples=200, deadline=None)
def test_median_is_smallest_admissible_sample(values):
    vals = np.array(values, dtype=float)
    a = median(vals)
    admissible = [
        v
        for v in np.unique(vals)
        if np.count_nonzero(vals > v) <= vals.size / 2
        and np.count_nonzero(vals < v) <= vals.size / 2
    ]
    assert a == min(admissible)


def test_median_empty_error():
    with pytest.raises(ValueError, match="empty node set"):
        median(np.array([1.0, 2.0]), S=np.array([False, False]))


def test_median_split_two_level_symbol():
    grid = make_grid(2, ((-2.0, 2.0), (-2.0, 2.0)), 16)
    system = build_system("plus", (0.0, 0.0), ((-2.0, 2.0), (-2.0, 2.0)), (-1, 0))
    b = SampledField(grid, (grid.nodes[:, 0] > 0).astype(float))
    Q = system.at(-1)[0]  # [-2,0) x [0,2)
    mask = nodes_in_cube(grid, Q)
    alpha = median(b, S=mask)
    assert alpha == 0.0
    e1, e2 = median_split(Q, b, alpha)
    assert set(e1) | set(e2) == set(np.flatnonzero(mask))
    assert set(e1) & set(e2) == set()
    assert np.all(b.values[e1] <= alpha)
    assert np.all(b.values[e2] > alpha)
    # counting inequalities from the median make each part >= |Q|/2 ... |Q|
    assert len(e1) >= mask.sum() / 2
    assert len(e2) <= mask.sum() / 2


def test_companion_split_overlaps_on_ties():
    vals = np.array([0.0, 1.0, 2.0, 1.0])
    mask = np.array([True, True, True, True])
    f1, f2 = companion_split(mask, vals, 1.0)
    assert sorted(f1) == [1, 2, 3]
    assert sorted(f2) == [0, 1, 3]


# ---------------------------------------------------------------------------
# dyadic energy sums


def test_energy_sum_frozen_indicator_value():
    grid = make_grid(2, BOX2, 16)
    system = build_system("plus", (0.0, 0.0), BOX2, (-1, 1))
    b = _field(_chi_unit, grid)
    # single cross-generation term: mean of |E_0 b - E_{-1} b|^2 = 3/16,
    # plus an exactly-zero k=0 term (b is constant on unit cubes)
    assert dyadic_energy_sum(b, system, 2.0) == pytest.approx(3.0 / 16.0, abs=1e-15)


def test_energy_sum_vanishes_for_constants():
    grid = make_grid(2, BOX2, 16)
    system = build_system("plus", (0.0, 0.0), BOX2, (-1, 1))
    b = SampledField(grid, np.full(len(grid.nodes), 2.7))
    assert dyadic_energy_sum(b, system, 4.0) == 0.0


def test_energy_sum_sees_only_own_half():
    box = ((-2.0, 2.0), (-2.0, 2.0))
    grid = make_grid(2, box, 32)
    plus = build_system("plus", (0.0, 0.0), box, (-1, 1))
    b = SampledField(grid, np.where(grid.nodes[:, 1] > 0, 1.3, -5.0))
    # per-half constant: every admissible cube sees a constant field
    assert dyadic_energy_sum(b, plus, 2.0) == 0.0


def test_energy_sum_rejects_small_p():
    grid = make_grid(2, BOX2, 16)
    system = build_system("plus", (0.0, 0.0), BOX2, (-1, 1))
    b = _field(_chi_unit, grid)
    with pytest.raises(ValueError):
        dyadic_energy_sum(b, system, 0.5)


# ---------------------------------------------------------------------------
# separated subcubes


def test_separated_subcubes_frozen_boxes():
    Q = Cube(0, (0, 0), (0.0, 0.0), "plus")
    q1, q2 = separated_subcubes(Q, (1, 1))
    assert np.allclose(q1.box, [[0.5, 0.75], [0.5, 0.75]])
    assert np.allclose(q2.box, [[0.0, 0.25], [0.0, 0.25]])
    q1s, q2s = separated_subcubes(Q, (-1, -1))
    assert np.allclose(q1s.box, q2.box)
    assert np.allclose(q2s.box, q1.box)


@pytest.mark.parametrize("a", list(itertools.product((-1, 1), repeat=2)))
def test_separated_subcubes_gap_and_containment(a):
    Q = Cube(1, (3, -2), (0.0, 0.0), "minus")
    q1, q2 = separated_subcubes(Q, a)
    for q in (q1, q2):
        assert q.k == Q.k + 2
        assert np.all(q.vertex >= Q.vertex)
        assert np.all(q.vertex + q.side <= Q.vertex + Q.side)
    # signed coordinate gap >= quarter side in every axis
    for j in range(2):
        if a[j] == 1:
            gap = q1.box[j, 0] - q2.box[j, 1]
        else:
            gap = q2.box[j, 0] - q1.box[j, 1]
        assert gap >= Q.side / 4 - 1e-15


def test_separated_subcubes_rejects_bad_sign_vector():
    Q = Cube(0, (0, 0), (0.0, 0.0), "plus")
    with pytest.raises(ValueError):
        separated_subcubes(Q, (1, 0))
    with pytest.raises(ValueError):
        separated_subcubes(Q, (1,))


# ---------------------------------------------------------------------------
# gradient oscillation


def test_gradient_oscillation_coordinate_symbol():
    lhs, rhs, ratio = gradient_oscillation_check(
        lambda p: np.asarray(p)[..., 0], np.array([0.4, 0.7]), 3
    )
    assert lhs == pytest.approx(2.0**-4, rel=1e-9)
    assert rhs == pytest.approx(2.0**-3, rel=1e-9)
    assert ratio == pytest.approx(0.5, rel=1e-9)


def test_gradient_oscillation_ratio_is_scale_free_for_linear():
    def b(p):
        p = np.asarray(p)
        return 3.0 * p[..., 0] + 4.0 * p[..., 1]

    ratios = [
        gradient_oscillation_check(b, np.array([0.27, 0.81]), k)[2] for k in (2, 5)
    ]
    # |grad| = 5, mean gap = 7 * 2^-(k+1): the ratio is 0.7 at every scale
    assert ratios[0] == pytest.approx(0.7, rel=1e-9)
    assert ratios[1] == pytest.approx(0.7, rel=1e-9)


def test_gradient_oscillation_smooth_symbol_two_sided():
    def b(p):
        p = np.asarray(p)
        return np.sin(p[..., 0]) + np.cos(p[..., 1])

    x0 = np.array([math.pi / 4, 0.0])
    ratios = [gradient_oscillation_check(b, x0, k)[2] for k in range(4, 9)]
    assert max(ratios) / min(ratios) <= 2.0
    assert all(r > 0 for r in ratios)


def test_gradient_oscillation_minus_half_cube():
    lhs, rhs, ratio = gradient_oscillation_check(
        lambda p: np.asarray(p)[..., 1], np.array([0.3, -0.6]), 2
    )
    assert ratio == pytest.approx(0.5, rel=1e-9)


def test_gradient_oscillation_degenerate_gradient():
    with pytest.raises(ValueError, match="degenerate gradient"):
        gradient_oscillation_check(
            lambda p: np.zeros(np.asarray(p).shape[:-1]), np.array([0.5, 0.5]), 3
        )
