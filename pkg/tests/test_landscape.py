import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nkcs import oracle
from nkcs.landscape import (
    GeneContext,
    Landscape,
    LandscapeSpec,
    gene_context,
    gene_fitness,
    generate_linkage,
    species_fitness,
    system_fitness,
)


@st.composite
def specs(draw, max_n=6, max_species=4):
    s1 = draw(st.integers(2, max_species))
    ns = tuple(draw(st.integers(1, max_n)) for _ in range(s1))
    k = draw(st.integers(0, min(ns) - 1))
    c = draw(st.integers(0, min(min(ns), 2)))
    seed = draw(st.integers(0, 2**64 - 1))
    return LandscapeSpec(seed, ns, k, c)


def test_linkage_small_example():
    spec = LandscapeSpec(3, (3, 3), 1, 1)
    lk = generate_linkage(spec)
    for s in range(2):
        for i in range(3):
            assert len(lk.local[s][i]) == 1 and lk.local[s][i][0] != i
            assert len(lk.external[s][i]) == 1 and len(lk.external[s][i][0]) == 1
            assert 0 <= lk.external[s][i][0][0] < 3


def test_no_epistasis_means_own_bit_only():
    spec = LandscapeSpec(9, (4, 4, 4), 0, 0)
    lk = generate_linkage(spec)
    assert all(loc == () for genes in lk.local for loc in genes)
    assert all(ext == ((), ()) for genes in lk.external for ext in genes)
    land = Landscape.from_spec(spec)
    g = [np.zeros(4, dtype=np.uint8) for _ in range(3)]
    base = land.species_fitness(g, 0)
    g[1][:] = 1
    g[2][2] = 1
    assert land.species_fitness(g, 0) == base


def test_linkage_is_deterministic():
    spec = LandscapeSpec(42, (7, 5, 6), 3, 2)
    assert generate_linkage(spec) == generate_linkage(spec)
    assert generate_linkage(spec) != generate_linkage(LandscapeSpec(43, (7, 5, 6), 3, 2))


@given(specs())
@settings(max_examples=60, deadline=None)
def test_linkage_invariants(spec):
    lk = generate_linkage(spec)
    for s, n in enumerate(spec.n_per_species):
        partners = spec.partners(s)
        for i in range(n):
            loc = lk.local[s][i]
            assert len(loc) == spec.k and len(set(loc)) == spec.k and i not in loc
            assert all(0 <= j < n for j in loc)
            assert len(lk.external[s][i]) == spec.s
            for q, t in enumerate(partners):
                ext = lk.external[s][i][q]
                assert len(ext) == spec.c and len(set(ext)) == spec.c
                assert all(0 <= j < spec.n_per_species[t] for j in ext)


@pytest.mark.parametrize(
    "kwargs, fragment",
    [
        (dict(n_per_species=(3, 3), k=3, c=1), "k=3 exceeds N-1=2"),
        (dict(n_per_species=(5, 2), k=1, c=3), "c=3 exceeds N=2"),
        (dict(n_per_species=(5,), k=1, c=1), "species_count"),
        (dict(n_per_species=(5, 0), k=0, c=0), "must be >= 1"),
        (dict(n_per_species=(5, 5), k=-1, c=0), "k must be >= 0"),
    ],
)
def test_invalid_spec_names_bound(kwargs, fragment):
    with pytest.raises(ValueError, match=fragment.replace("(", r"\(")):
        LandscapeSpec(1, **kwargs)


def test_gene_fitness_is_pure_and_table_sized():
    spec = LandscapeSpec(5, (3, 3), 1, 1)
    assert spec.context_width == 3  # 2**3 = 8 table entries
    values = set()
    for bits in itertools.product((0, 1), repeat=3):
        ctx = GeneContext(bits[0], (bits[1],), (bits[2],))
        v = gene_fitness(spec, 0, 1, ctx)
        assert v == gene_fitness(spec, 0, 1, ctx)
        assert 0.0 <= v < 1.0
        values.add(v)
    assert len(values) == 8


def test_gene_fitness_rejects_wrong_width():
    spec = LandscapeSpec(5, (3, 3), 1, 1)
    with pytest.raises(ValueError, match="width"):
        gene_fitness(spec, 0, 0, GeneContext(1, (0,)))


def test_context_packing_is_injective():
    patterns = {
        GeneContext(b[0], b[1:3], b[3:]).pack() for b in itertools.product((0, 1), repeat=5)
    }
    assert patterns == set(range(32))


def test_gene_table_mean_is_uniform_like():
    # K=2, C=1, S=1: 16 patterns per gene; mean of a U(0,1) sample of 16 has sd sqrt(1/12/16)
    spec = LandscapeSpec(2024, (5, 5), 2, 1)
    sd16 = math.sqrt(1 / 12 / 16)
    all_values = []
    for s in range(2):
        for i in range(5):
            vals = [
                gene_fitness(spec, s, i, GeneContext(b[0], b[1:3], b[3:]))
                for b in itertools.product((0, 1), repeat=4)
            ]
            assert abs(np.mean(vals) - 0.5) < 3 * sd16
            all_values += vals
    assert abs(np.mean(all_values) - 0.5) < 3 * math.sqrt(1 / 12 / len(all_values))


def test_degenerate_species_equals_single_entry():
    spec = LandscapeSpec(77, (1, 1), 0, 0)
    lk = generate_linkage(spec)
    for bit in (0, 1):
        g = [np.array([bit], dtype=np.uint8), np.array([0], dtype=np.uint8)]
        assert species_fitness(spec, lk, g, 0) == gene_fitness(spec, 0, 0, GeneContext(bit))


def test_species_fitness_matches_hand_assembled_contexts():
    spec = LandscapeSpec(314, (4, 4), 1, 1)
    lk = generate_linkage(spec)
    rnd = np.random.default_rng(0)
    for _ in range(20):
        g = [rnd.integers(0, 2, 4).astype(np.uint8) for _ in range(2)]
        for s in range(2):
            other = 1 - s
            total = 0.0
            for i in range(4):
                ctx = GeneContext(int(g[s][i]), (int(g[s][lk.local[s][i][0]]),), (int(g[other][lk.external[s][i][0][0]]),))
                total += gene_fitness(spec, s, i, ctx)
            assert species_fitness(spec, lk, g, s) == total / 4


def test_system_fitness_is_species_mean():
    spec = LandscapeSpec(8, (5, 6, 4), 2, 1)
    land = Landscape.from_spec(spec)
    rnd = np.random.default_rng(1)
    for _ in range(10):
        g = [rnd.integers(0, 2, n).astype(np.uint8) for n in spec.n_per_species]
        a, b, c = (species_fitness(spec, land.linkage, g, s) for s in range(3))
        sys_f = system_fitness(spec, land.linkage, g)
        assert sys_f == (a + b + c) / 3
        assert sys_f == land.system_fitness(g)
        assert 0.0 <= sys_f < 1.0


def test_shape_mismatch_raises():
    spec = LandscapeSpec(8, (5, 6), 2, 1)
    lk = generate_linkage(spec)
    with pytest.raises(ValueError, match="length"):
        species_fitness(spec, lk, [np.zeros(5), np.zeros(5)], 0)


@given(specs(max_n=5, max_species=3), st.integers(0, 2**32))
@settings(max_examples=40, deadline=None)
def test_compiled_and_python_fitness_agree(spec, state_seed):
    land = Landscape.from_spec(spec)
    rnd = np.random.default_rng(state_seed)
    g = [rnd.integers(0, 2, n).astype(np.uint8) for n in spec.n_per_species]
    got = land.all_species_fitness(g)
    assert got == land.compiled_species_fitness(g)
    assert all(0.0 <= f < 1.0 for f in got)


def test_exhaustive_oracle_equality():
    assert oracle.check_oracle_equality(seeds=range(3)).passed


def test_flip_locality_exhaustive():
    assert oracle.check_flip_locality(seeds=range(3)).passed


def test_gene_context_layout():
    spec = LandscapeSpec(4, (3, 4, 5), 1, 2)
    land = Landscape.from_spec(spec)
    g = [np.array([1, 0, 1], dtype=np.uint8), np.array([0, 1, 1, 0], dtype=np.uint8), np.array([1, 1, 0, 0, 1], dtype=np.uint8)]
    ctx = gene_context(spec, land.linkage, g, 1, 2)
    lk = land.linkage
    assert ctx.own_bit == 1
    assert ctx.local_bits == (g[1][lk.local[1][2][0]],)
    expect_ext = tuple(int(g[0][j]) for j in lk.external[1][2][0]) + tuple(int(g[2][j]) for j in lk.external[1][2][1])
    assert ctx.external_bits == expect_ext


def test_linkage_json_export():
    spec = LandscapeSpec(4, (3, 4), 1, 2)
    land = Landscape.from_spec(spec)
    doc = json.loads(land.linkage.to_json(spec))
    assert doc["spec"]["n_per_species"] == [3, 4]
    gene = doc["species"][1]["genes"][2]
    assert gene["local"] == list(land.linkage.local[1][2])
    assert gene["external"] == {"0": list(land.linkage.external[1][2][0])}


def test_landscape_arrays_are_read_only(small_landscape):
    with pytest.raises(ValueError):
        small_landscape.arrays["keys"][0, 0] = 0
