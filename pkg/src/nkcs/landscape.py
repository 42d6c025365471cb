"""NKCS fitness landscapes.

A landscape is fully defined by a :class:`LandscapeSpec`. Nothing random is
stored: gene fitness tables are evaluated on demand by a counter-based mix of
``(landscape_seed, species, gene, pattern)`` and the linkage is resampled
deterministically from the same seed.

Context patterns pack the bits a gene reads into an integer, least
significant bit first::

    bit 0                      own allele
    bits 1 .. k                local inputs, in linkage order
    bits 1+k+q*c .. 1+k+q*c+c-1  inputs from the q-th partner species
                               (partners in ascending species index)

The table entry for pattern ``p`` of gene ``i`` in species ``s`` is::

    key   = derive_seed(landscape_seed, TAG_FITNESS, s, i)
    value = to_unit(mix64(key + (p + 1) * GOLDEN))

i.e. the gene's table is the first ``2**width`` outputs of a SplitMix64
stream seeded with ``key``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as _rng

__all__ = [
    "LandscapeSpec",
    "LinkageMap",
    "GeneContext",
    "Landscape",
    "generate_linkage",
    "gene_key",
    "gene_fitness",
    "gene_context",
    "species_fitness",
    "system_fitness",
]


@dataclass(frozen=True)
class LandscapeSpec:
    """Seed plus topology of an NKCS environment shared by S+1 species."""

    landscape_seed: int
    n_per_species: tuple[int, ...]
    k: int
    c: int

    def __post_init__(self):
        object.__setattr__(self, "n_per_species", tuple(int(n) for n in self.n_per_species))
        ns = self.n_per_species
        if len(ns) < 2:
            raise ValueError(f"species_count must be >= 2, got {len(ns)}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        if self.c < 0:
            raise ValueError(f"c must be >= 0, got {self.c}")
        for s, n in enumerate(ns):
            if n < 1:
                raise ValueError(f"N of species {s} must be >= 1, got {n}")
            if self.k > n - 1:
                raise ValueError(f"k={self.k} exceeds N-1={n - 1} for species {s}")
        if self.c > min(ns):
            s = ns.index(min(ns))
            raise ValueError(f"c={self.c} exceeds N={min(ns)} of partner species {s}")
        if not 0 <= self.landscape_seed < 2**64:
            raise ValueError("landscape_seed must be an unsigned 64-bit integer")

    @property
    def species_count(self) -> int:
        return len(self.n_per_species)

    @property
    def s(self) -> int:
        """Number of partner species each species is coupled to."""
        return len(self.n_per_species) - 1

    @property
    def context_width(self) -> int:
        return 1 + self.k + self.s * self.c

    def partners(self, species: int) -> list[int]:
        return [t for t in range(self.species_count) if t != species]


@dataclass(frozen=True)
class LinkageMap:
    """Epistatic inputs of every gene.

    ``local[s][i]`` holds the k gene indices of species ``s`` read by gene
    ``i``; ``external[s][i][q]`` holds the c gene indices read from the q-th
    partner of ``s`` (partners ascending, ``s`` skipped).
    """

    local: tuple[tuple[tuple[int, ...], ...], ...]
    external: tuple[tuple[tuple[tuple[int, ...], ...], ...], ...]

    def to_json(self, spec: LandscapeSpec | None = None) -> str:
        species = []
        for s, genes in enumerate(self.local):
            rows = []
            for i, loc in enumerate(genes):
                ext = self.external[s][i]
                partners = [t for t in range(len(self.local)) if t != s]
                rows.append(
                    {
                        "gene": i,
                        "local": list(loc),
                        "external": {str(t): list(ext[q]) for q, t in enumerate(partners)},
                    }
                )
            species.append({"species": s, "genes": rows})
        doc = {"species": species}
        if spec is not None:
            doc["spec"] = {
                "landscape_seed": spec.landscape_seed,
                "n_per_species": list(spec.n_per_species),
                "k": spec.k,
                "c": spec.c,
            }
        return json.dumps(doc, indent=1)


@dataclass(frozen=True)
class GeneContext:
    own_bit: int
    local_bits: tuple[int, ...] = ()
    external_bits: tuple[int, ...] = ()

    @property
    def width(self) -> int:
        return 1 + len(self.local_bits) + len(self.external_bits)

    def pack(self) -> int:
        pattern = self.own_bit & 1
        pos = 1
        for b in self.local_bits + self.external_bits:
            pattern |= (b & 1) << pos
            pos += 1
        return pattern


def _sample_distinct(stream: _rng.SplitMix64, pool: list[int], m: int) -> tuple[int, ...]:
    # partial Fisher-Yates
    pool = list(pool)
    for j in range(m):
        r = j + stream.below(len(pool) - j)
        pool[j], pool[r] = pool[r], pool[j]
    return tuple(pool[:m])


def generate_linkage(spec: LandscapeSpec) -> LinkageMap:
    """Sample every gene's inputs without replacement.

    Gene ``(s, i)`` draws from its own stream
    ``SplitMix64(derive_seed(seed, TAG_LINKAGE, s, i))``: first k local genes
    from ``[0, N_s) \\ {i}``, then c genes from each partner in ascending order.
    """
    local, external = [], []
    for s, n in enumerate(spec.n_per_species):
        loc_s, ext_s = [], []
        for i in range(n):
            stream = _rng.SplitMix64(_rng.derive_seed(spec.landscape_seed, _rng.TAG_LINKAGE, s, i))
            loc_s.append(_sample_distinct(stream, [j for j in range(n) if j != i], spec.k))
            ext_s.append(
                tuple(
                    _sample_distinct(stream, list(range(spec.n_per_species[t])), spec.c)
                    for t in spec.partners(s)
                )
            )
        local.append(tuple(loc_s))
        external.append(tuple(ext_s))
    return LinkageMap(tuple(local), tuple(external))


def gene_key(landscape_seed: int, species: int, gene: int) -> int:
    return _rng.derive_seed(landscape_seed, _rng.TAG_FITNESS, species, gene)


def _table_value(key: int, pattern: int) -> float:
    return _rng.to_unit(_rng.mix64(key + (pattern + 1) * _rng.GOLDEN))


def gene_fitness(spec: LandscapeSpec, species: int, gene: int, ctx: GeneContext) -> float:
    """Table entry of gene ``gene`` of ``species`` for context ``ctx``, in [0, 1)."""
    if ctx.width != spec.context_width:
        raise ValueError(f"context width {ctx.width} does not match landscape width {spec.context_width}")
    if not 0 <= species < spec.species_count:
        raise IndexError(f"species {species} out of range")
    if not 0 <= gene < spec.n_per_species[species]:
        raise IndexError(f"gene {gene} out of range for species {species}")
    return _table_value(gene_key(spec.landscape_seed, species, gene), ctx.pack())


def _genomes(state) -> Sequence[Sequence[int]]:
    return getattr(state, "genomes", state)


def _check_shape(spec: LandscapeSpec, genomes) -> None:
    if len(genomes) != spec.species_count:
        raise ValueError(f"expected {spec.species_count} genomes, got {len(genomes)}")
    for s, (g, n) in enumerate(zip(genomes, spec.n_per_species)):
        if len(g) != n:
            raise ValueError(f"genome of species {s} has length {len(g)}, expected {n}")


def gene_context(spec: LandscapeSpec, linkage: LinkageMap, state, species: int, gene: int) -> GeneContext:
    genomes = _genomes(state)
    ext = []
    for q, t in enumerate(spec.partners(species)):
        ext.extend(int(genomes[t][j]) for j in linkage.external[species][gene][q])
    return GeneContext(
        int(genomes[species][gene]),
        tuple(int(genomes[species][j]) for j in linkage.local[species][gene]),
        tuple(ext),
    )


def _species_fitness(spec, linkage, keys, genomes, species) -> float:
    total = 0.0
    for i in range(spec.n_per_species[species]):
        pattern = gene_context(spec, linkage, genomes, species, i).pack()
        total += _table_value(keys[species][i], pattern)
    return total / spec.n_per_species[species]


def _all_keys(spec: LandscapeSpec) -> list[list[int]]:
    return [[gene_key(spec.landscape_seed, s, i) for i in range(n)] for s, n in enumerate(spec.n_per_species)]


def species_fitness(spec: LandscapeSpec, linkage: LinkageMap, state, species: int) -> float:
    """Mean gene fitness of one species; genes summed in index order."""
    genomes = _genomes(state)
    _check_shape(spec, genomes)
    return _species_fitness(spec, linkage, _all_keys(spec), genomes, species)


def system_fitness(spec: LandscapeSpec, linkage: LinkageMap, state) -> float:
    """Sum of species fitnesses divided by S+1."""
    genomes = _genomes(state)
    _check_shape(spec, genomes)
    keys = _all_keys(spec)
    total = 0.0
    for s in range(spec.species_count):
        total += _species_fitness(spec, linkage, keys, genomes, s)
    return total / spec.species_count


@dataclass(frozen=True, eq=False)
class Landscape:
    """A spec with its linkage and the flat arrays the simulation kernel reads.

    Built once and shared read-only between runs.
    """

    spec: LandscapeSpec
    linkage: LinkageMap
    keys: list = field(repr=False)
    arrays: dict = field(repr=False)

    @classmethod
    def from_spec(cls, spec: LandscapeSpec) -> "Landscape":
        linkage = generate_linkage(spec)
        keys = _all_keys(spec)
        return cls(spec, linkage, keys, _build_arrays(spec, linkage, keys))

    def gene_fitness(self, species: int, gene: int, ctx: GeneContext) -> float:
        if ctx.width != self.spec.context_width:
            raise ValueError(f"context width {ctx.width} does not match landscape width {self.spec.context_width}")
        return _table_value(self.keys[species][gene], ctx.pack())

    def species_fitness(self, state, species: int) -> float:
        genomes = _genomes(state)
        _check_shape(self.spec, genomes)
        return _species_fitness(self.spec, self.linkage, self.keys, genomes, species)

    def all_species_fitness(self, state) -> tuple[float, ...]:
        genomes = _genomes(state)
        _check_shape(self.spec, genomes)
        return tuple(
            _species_fitness(self.spec, self.linkage, self.keys, genomes, s)
            for s in range(self.spec.species_count)
        )

    def compiled_species_fitness(self, state) -> tuple[float, ...]:
        """Same values as :meth:`all_species_fitness`, via the compiled evaluator."""
        from . import _kernel

        genomes = _genomes(state)
        _check_shape(self.spec, genomes)
        a = self.arrays
        g = np.zeros(a["keys"].shape, dtype=np.uint8)
        for s, genome in enumerate(genomes):
            g[s, : len(genome)] = genome
        contrib = np.zeros(a["keys"].shape)
        fit = np.zeros(self.spec.species_count)
        _kernel.full_contributions(g, a["n"], a["local"], a["ext"], a["partners"], a["keys"], contrib, fit)
        return tuple(float(f) for f in fit)

    def system_fitness(self, state) -> float:
        total = 0.0
        for f in self.all_species_fitness(state):
            total += f
        return total / self.spec.species_count


def _build_arrays(spec: LandscapeSpec, linkage: LinkageMap, keys) -> dict:
    s1, nmax, k, c = spec.species_count, max(spec.n_per_species), spec.k, spec.c
    n = np.array(spec.n_per_species, dtype=np.int64)
    local = np.zeros((s1, nmax, k), dtype=np.int64)
    ext = np.zeros((s1, nmax, s1 - 1, c), dtype=np.int64)
    partners = np.array([spec.partners(s) for s in range(s1)], dtype=np.int64)
    key_arr = np.zeros((s1, nmax), dtype=np.uint64)

    dependents: list[list[list[tuple[int, int]]]] = [[[] for _ in range(nmax)] for _ in range(s1)]
    for s in range(s1):
        for i in range(spec.n_per_species[s]):
            key_arr[s, i] = keys[s][i]
            dependents[s][i].append((s, i))
            for j, src in enumerate(linkage.local[s][i]):
                local[s, i, j] = src
                dependents[s][src].append((s, i))
            for q, t in enumerate(partners[s]):
                for j, src in enumerate(linkage.external[s][i][q]):
                    ext[s, i, q, j] = src
                    dependents[t][src].append((s, i))

    ptr = np.zeros(s1 * nmax + 1, dtype=np.int64)
    dep_s, dep_g = [], []
    for t in range(s1):
        for j in range(nmax):
            for s, i in sorted(dependents[t][j]):
                dep_s.append(s)
                dep_g.append(i)
            ptr[t * nmax + j + 1] = len(dep_s)
    arrays = {
        "n": n,
        "local": local,
        "ext": ext,
        "partners": partners,
        "keys": key_arr,
        "dep_ptr": ptr,
        "dep_species": np.array(dep_s, dtype=np.int64),
        "dep_gene": np.array(dep_g, dtype=np.int64),
    }
    for a in arrays.values():
        a.setflags(write=False)
    return arrays
