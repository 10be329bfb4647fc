from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msk_tap import rng
from msk_tap.errors import DimensionError, InvalidSpec, SpeciesTooSmall
from msk_tap.model import (
    DisorderSample,
    ModelSpec,
    build_layout,
    hamiltonian,
    local_field,
    local_fields,
    pair_index,
    sample_disorder,
)
from msk_tap.presets import PRESETS, preset


def spec2(lambdas, n, beta=0.4, h=0.2, delta2=None):
    m = len(lambdas)
    d2 = np.ones((m, m)) if delta2 is None else delta2
    return ModelSpec(np.array(lambdas), np.array(d2), beta, h, n)


@pytest.mark.parametrize(
    "lambdas, n, sizes",
    [([0.5, 0.5], 10, (5, 5)), ([1 / 3, 2 / 3], 10, (3, 7)), ([1 / 3, 1 / 3, 1 / 3], 10, (4, 3, 3)), ([1.0], 7, (7,))],
)
def test_layout_rounding(lambdas, n, sizes):
    assert build_layout(spec2(lambdas, n)).sizes == sizes


def test_species_too_small():
    with pytest.raises(SpeciesTooSmall):
        build_layout(spec2([0.1, 0.9], 3))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=1, max_size=5), st.integers(1, 400))
def test_layout_invariants(weights, n):
    lam = np.array(weights, dtype=float) / sum(weights)
    lam[-1] = 1.0 - lam[:-1].sum()
    if np.any(lam * n < 1):
        return
    layout = build_layout(spec2(list(lam), n))
    assert layout.n == n
    assert np.all(np.abs(np.array(layout.sizes) - lam * n) <= 1)
    covered = [i for r in layout.index_sets for i in r]
    assert covered == list(range(n))
    for s, r in enumerate(layout.index_sets):
        assert np.all(layout.species_of[list(r)] == s)


def test_species_relabelling_permutes_sizes():
    spec = spec2([0.2, 0.3, 0.5], 17)
    perm = [2, 0, 1]
    base = build_layout(spec).sizes
    assert build_layout(spec.permuted(perm)).sizes == tuple(base[k] for k in perm)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"lambdas": [0.6, 0.6]},
        {"lambdas": [1.0, 0.0]},
        {"delta2": [[1.0, 0.5], [0.4, 1.0]]},
        {"delta2": [[1.0, -0.5], [-0.5, 1.0]]},
        {"beta": -0.1},
        {"h": -1.0},
        {"n": 0},
        {"beta": math.nan},
    ],
)
def test_invalid_specs(kwargs):
    base = {"lambdas": [0.5, 0.5], "delta2": [[1.0, 0.5], [0.5, 1.0]], "beta": 0.3, "h": 0.1, "n": 4}
    base.update(kwargs)
    with pytest.raises(InvalidSpec):
        ModelSpec(np.array(base["lambdas"]), np.array(base["delta2"]), base["beta"], base["h"], base["n"])


def test_pair_index_is_row_major_upper_triangle():
    n = 9
    iu, ju = np.triu_indices(n, 1)
    assert [pair_index(int(i), int(j), n) for i, j in zip(iu, ju)] == list(range(iu.size))
    with pytest.raises(IndexError):
        pair_index(3, 3, n)


def test_disorder_determinism_and_zero_variance():
    spec = preset("convex", beta=0.3, h=0.1, n=20)
    layout = build_layout(spec)
    a, b = sample_disorder(spec, layout, 99), sample_disorder(spec, layout, 99)
    assert np.array_equal(a.couplings, b.couplings)
    assert not np.array_equal(a.couplings, sample_disorder(spec, layout, 100).couplings)
    zero = spec.replace(delta2=np.zeros((2, 2)))
    assert np.all(sample_disorder(zero, layout, 1).couplings == 0)


def test_disorder_shape_checks():
    with pytest.raises(DimensionError):
        DisorderSample(4, np.zeros(5), 0)
    with pytest.raises(ValueError):
        DisorderSample(3, np.array([0.0, np.nan, 1.0]), 0)


def test_bipartite_block_variances():
    spec = preset("bipartite", n=2000)
    layout = build_layout(spec)
    g = sample_disorder(spec, layout, 2024).matrix
    cross = g[:1000, 1000:]
    assert cross.var() == pytest.approx(1.0, rel=0.05)
    assert np.all(g[:1000, :1000] == 0) and np.all(g[1000:, 1000:] == 0)


def test_two_copies_block_variances():
    spec = preset("two-copies", n=1200)
    g = sample_disorder(spec, build_layout(spec), 5).matrix
    iu = np.triu_indices(600, 1)
    assert g[:600, :600][iu].var() == pytest.approx(1.0, rel=0.05)
    assert g[600:, 600:][iu].var() == pytest.approx(2.0, rel=0.05)
    assert np.all(g[:600, 600:] == 0)


def test_inverse_cdf_normals_match_scipy_reference():
    from scipy.stats import norm

    u = rng.open_uniforms(rng.stream(3, 0), 10_000)
    z = rng.standard_normals(rng.stream(3, 0), 10_000)
    assert np.max(np.abs(norm.cdf(z) - u)) < 1e-9
    assert np.all((u > 0) & (u < 1))


def test_two_spin_hamiltonian():
    spec = ModelSpec(np.array([1.0]), np.array([[1.0]]), 0.7, 0.3, 2)
    layout = build_layout(spec)
    g = 1.3
    dis = DisorderSample(2, np.array([g]), 0)
    for s1 in (-1, 1):
        for s2 in (-1, 1):
            expected = 0.7 / math.sqrt(2) * g * s1 * s2 + 0.3 * (s1 + s2)
            assert hamiltonian(spec, layout, dis, [s1, s2]) == pytest.approx(expected, abs=1e-15)
        assert local_field(spec, layout, dis, [1, s1], 0) == pytest.approx(0.7 / math.sqrt(2) * g * s1 + 0.3)


def test_field_only_and_flip_symmetry(gen):
    spec = preset("convex", beta=0.5, h=0.0, n=11)
    layout = build_layout(spec)
    dis = sample_disorder(spec, layout, 4)
    for _ in range(20):
        s = np.where(gen.random(11) < 0.5, -1, 1)
        assert hamiltonian(spec, layout, dis, s) == pytest.approx(hamiltonian(spec, layout, dis, -s), abs=1e-13)
    free = spec.replace(h=0.4)
    zero = DisorderSample(11, np.zeros(55), 0)
    s = np.where(gen.random(11) < 0.5, -1, 1)
    assert hamiltonian(free, layout, zero, s) == pytest.approx(0.4 * s.sum())
    assert local_field(free, layout, zero, s, 3) == pytest.approx(0.4)


def test_single_flip_energy_matches_local_field(gen):
    spec = preset("bipartite", beta=0.8, h=0.25, n=15)
    layout = build_layout(spec)
    dis = sample_disorder(spec, layout, 8)
    for _ in range(1000):
        s = np.where(gen.random(15) < 0.5, -1, 1)
        i = int(gen.integers(15))
        f = local_field(spec, layout, dis, s, i)
        flipped = s.copy()
        flipped[i] = -s[i]
        diff = hamiltonian(spec, layout, dis, s) - hamiltonian(spec, layout, dis, flipped)
        assert diff == pytest.approx(2 * s[i] * f, abs=1e-12)
        assert local_field(spec, layout, dis, flipped, i) == f
    np.testing.assert_allclose(
        local_fields(spec, dis, s), [local_field(spec, layout, dis, s, i) for i in range(15)], atol=1e-14
    )


def test_presets():
    assert set(PRESETS) == {"sk", "bipartite", "two-copies", "convex"}
    b = preset("bipartite")
    np.testing.assert_array_equal(b.delta2, [[0, 1], [1, 0]])
    np.testing.assert_array_equal(b.lambdas, [0.5, 0.5])
    t = preset("two-copies")
    assert t.delta2[0, 1] == 0 and t.delta2[1, 0] == 0
    with pytest.raises(KeyError):
        preset("nope")
