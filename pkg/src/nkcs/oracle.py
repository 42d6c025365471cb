"""Brute-force oracles and the self-check suite.

The evaluator here shares no code with :mod:`nkcs.landscape` beyond the
linkage map: it materialises each gene's full table from its own copy of
the mixer and indexes it by a hand-assembled bit string. Corrupting the
package mixer therefore makes the equality check fail.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dynamics import Policy, Proposal, decide, propose, random_state, run, tally_votes, _play_turn
from .landscape import Landscape, LandscapeSpec, gene_context
from .rng import SplitMix64
from .stats import welch_t_test

_M64 = 2**64


def _mix(z: int) -> int:
    z %= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % _M64
    return z ^ (z >> 31)


def _gene_key(seed: int, species: int, gene: int) -> int:
    z = _mix(seed)
    for key in (1, species, gene):  # fitness tag, then the gene address
        z = _mix(z + (key + 1) * 0x9E3779B97F4A7C15)
    return z


@lru_cache(maxsize=4096)
def gene_table(seed: int, species: int, gene: int, width: int) -> tuple[float, ...]:
    """All ``2**width`` entries of one gene's table, in pattern order."""
    state = _gene_key(seed, species, gene)
    out = []
    for _ in range(2**width):
        state = (state + 0x9E3779B97F4A7C15) % _M64
        out.append((_mix(state) >> 11) / 2.0**53)
    return tuple(out)


def brute_species_fitness(spec: LandscapeSpec, linkage, genomes, species: int) -> float:
    n = spec.n_per_species[species]
    partners = [t for t in range(spec.species_count) if t != species]
    width = 1 + spec.k + len(partners) * spec.c
    total = 0.0
    for i in range(n):
        bits = [genomes[species][i]]
        bits += [genomes[species][j] for j in linkage.local[species][i]]
        for q, t in enumerate(partners):
            bits += [genomes[t][j] for j in linkage.external[species][i][q]]
        index = int("".join(str(int(b)) for b in reversed(bits)), 2)
        total += gene_table(spec.landscape_seed, species, i, width)[index]
    return total / n


def all_joint_states(spec: LandscapeSpec):
    ns = spec.n_per_species
    for bits in itertools.product((0, 1), repeat=sum(ns)):
        genomes, pos = [], 0
        for n in ns:
            genomes.append(np.array(bits[pos:pos + n], dtype=np.uint8))
            pos += n
        yield genomes


def dependents_from_linkage(spec: LandscapeSpec, linkage, species: int, gene: int) -> set[tuple[int, int]]:
    """Genes whose context contains bit ``(species, gene)``."""
    deps = {(species, gene)}
    for i, loc in enumerate(linkage.local[species]):
        if gene in loc:
            deps.add((species, i))
    for s in range(spec.species_count):
        if s == species:
            continue
        q = [t for t in range(spec.species_count) if t != s].index(species)
        for i in range(spec.n_per_species[s]):
            if gene in linkage.external[s][i][q]:
                deps.add((s, i))
    return deps


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# (n_per_species, k, c) shapes with N <= 4, K <= 2, C <= 1, S = 1
SMALL_SHAPES = [
    ((1, 1), 0, 0),
    ((1, 1), 0, 1),
    ((2, 3), 1, 1),
    ((3, 3), 1, 1),
    ((4, 2), 1, 1),
    ((3, 4), 2, 1),
    ((4, 4), 2, 1),
    ((4, 4), 0, 0),
]


def check_oracle_equality(seeds=range(5), shapes=SMALL_SHAPES) -> CheckResult:
    """Python and compiled species fitness equal the brute force on every joint state."""
    compared = 0
    for seed in seeds:
        for ns, k, c in shapes:
            spec = LandscapeSpec(seed, ns, k, c)
            land = Landscape.from_spec(spec)
            for genomes in all_joint_states(spec):
                expect = tuple(brute_species_fitness(spec, land.linkage, genomes, s) for s in range(spec.species_count))
                got = land.all_species_fitness(genomes)
                fast = land.compiled_species_fitness(genomes)
                if got != expect or fast != expect:
                    return CheckResult(
                        "oracle_equality", False,
                        f"seed={seed} shape={ns},K={k},C={c} state={[g.tolist() for g in genomes]}: "
                        f"oracle {expect} python {got} compiled {fast}",
                    )
                compared += 1
    return CheckResult("oracle_equality", True, f"{compared} joint states matched exactly")


def check_flip_locality(seeds=range(5), shapes=(((4, 4), 2, 1), ((3, 4, 2), 1, 2), ((5, 3), 2, 3))) -> CheckResult:
    """Flipping a bit changes exactly the gene contributions wired to it."""
    flips = 0
    for seed in seeds:
        for ns, k, c in shapes:
            spec = LandscapeSpec(seed, ns, k, c)
            land = Landscape.from_spec(spec)
            a = land.arrays
            nmax = max(ns)
            stream = SplitMix64(seed + 1000)
            for _ in range(4):
                genomes = random_state(land, stream).genomes

                def contributions(gs):
                    return {
                        (s, i): land.gene_fitness(s, i, gene_context(spec, land.linkage, gs, s, i))
                        for s in range(spec.species_count) for i in range(ns[s])
                    }

                before = contributions(genomes)
                for t in range(spec.species_count):
                    for j in range(ns[t]):
                        flipped = [g.copy() for g in genomes]
                        flipped[t][j] ^= 1
                        after = contributions(flipped)
                        changed = {key for key in before if before[key] != after[key]}
                        deps = dependents_from_linkage(spec, land.linkage, t, j)
                        lo, hi = a["dep_ptr"][t * nmax + j], a["dep_ptr"][t * nmax + j + 1]
                        csr = set(zip(a["dep_species"][lo:hi].tolist(), a["dep_gene"][lo:hi].tolist()))
                        if not changed <= deps or csr != deps:
                            return CheckResult(
                                "flip_locality", False,
                                f"seed={seed} shape={ns},K={k},C={c} flip=({t},{j}): changed {sorted(changed - deps)} "
                                f"outside wiring, csr {sorted(csr)} vs linkage {sorted(deps)}",
                            )
                        flips += 1
    return CheckResult("flip_locality", True, f"{flips} single-bit flips confined to their wired genes")


def random_proposal(rnd: random.Random) -> Proposal:
    """Synthetic proposal with ties likely: fitness values from a small grid."""
    s1 = rnd.randint(2, 6)
    prior = tuple(rnd.choice((0.25, 0.5, 0.75)) for _ in range(s1))
    post = tuple(rnd.choice((0.25, 0.5, 0.75)) for _ in range(s1))
    return Proposal(rnd.randrange(s1), 0, prior, post)


def check_policy_nesting(n_proposals: int = 10_000, seed: int = 0) -> CheckResult:
    """Global ⊆ communalism ⊆ coevolution; soundness, majority bound, unilateralism."""
    rnd = random.Random(seed)
    coev, com, glob = Policy.coevolution(), Policy.communalism(), Policy.global_control()
    counts = [0, 0, 0]
    for n in range(n_proposals):
        p = random_proposal(rnd)
        a_glob, a_com, a_coev = decide(glob, p), decide(com, p), decide(coev, p)
        counts[0] += a_glob
        counts[1] += a_com
        counts[2] += a_coev
        s = p.species
        others = len(p.prior) - 1
        problem = None
        if (a_glob and not a_com) or (a_com and not a_coev):
            problem = "acceptance sets not nested"
        elif (a_glob or a_com or a_coev) and p.posterior[s] < p.prior[s]:
            problem = "accepted a change that harms the proposer"
        elif a_com and 2 * tally_votes(p).approvals < others:
            problem = "communalism accepted without majority"
        else:
            # mirror the other assemblies' changes; coevolution must not notice
            mirrored = Proposal(s, 0, p.prior, tuple(
                p.posterior[t] if t == s else 2 * p.prior[t] - p.posterior[t] for t in range(len(p.prior))))
            if decide(coev, mirrored) != a_coev:
                problem = "coevolution decision depends on other assemblies"
        if problem:
            return CheckResult("policy_nesting", False, f"proposal #{n} {p}: {problem}")
    return CheckResult(
        "policy_nesting", True,
        f"{n_proposals} proposals nested (accepted glob/com/coev = {counts[0]}/{counts[1]}/{counts[2]})",
    )


def check_policy_nesting_on_landscapes(n_proposals: int = 500, seed: int = 0) -> CheckResult:
    """Same nesting property on proposals drawn from real landscapes."""
    stream = SplitMix64(seed)
    coev, com, glob = Policy.coevolution(), Policy.communalism(), Policy.global_control()
    lands = [Landscape.from_spec(LandscapeSpec(seed + i, (6, 5, 7), 2, 2)) for i in range(5)]
    for n in range(n_proposals):
        land = lands[n % len(lands)]
        state = random_state(land, stream)
        p = propose(land, state, stream.below(3), stream)
        a_glob, a_com, a_coev = decide(glob, p), decide(com, p), decide(coev, p)
        if (a_glob and not a_com) or (a_com and not a_coev):
            return CheckResult("policy_nesting_landscapes", False, f"proposal {p}")
    return CheckResult("policy_nesting_landscapes", True, f"{n_proposals} landscape proposals nested")


def check_global_monotonicity(min_events: int = 20_000, seed: int = 0) -> CheckResult:
    """Every accepted change under global control leaves no species worse off.

    Audited runs recompute all species from scratch after each accepted
    change and compare with both the previous values (no decrease) and the
    incremental values (exact equality).
    """
    glob = Policy.global_control()
    events = runs = 0
    mismatches = decreases = 0
    li = 0
    while events < min_events:
        land = Landscape.from_spec(LandscapeSpec(seed * 1_000_003 + li, (20, 20, 20), 2, 1))
        for j in range(50):
            r = run(land, glob, seed * 7_919 + li * 101 + j, 200, trace_every=0, audit=True)
            events += r.accepted
            mismatches += r.audit_mismatches
            decreases += r.audit_decreases
            runs += 1
        li += 1
    ok = mismatches == 0 and decreases == 0
    return CheckResult(
        "global_monotonicity", ok,
        f"{events} accepted events over {runs} runs, {decreases} species decreases, {mismatches} incremental mismatches",
    )


def check_incremental_equality(seed: int = 0) -> CheckResult:
    """Compiled incremental runs equal the pure-Python full-recomputation runs."""
    policies = [
        Policy.coevolution(), Policy.communalism(), Policy.global_control(),
        Policy.communalism(0.25), Policy.communalism(0.25, "per_voter"),
    ]
    shapes = [((6, 5, 7), 2, 1), ((8, 8), 3, 2), ((4, 6, 5, 3), 1, 1)]
    for pi, policy in enumerate(policies):
        for si, (ns, k, c) in enumerate(shapes):
            land = Landscape.from_spec(LandscapeSpec(seed + 31 * si + pi, ns, k, c))
            ref = run(land, policy, seed + 17 * pi + si, 40, 3, engine="reference")
            fast = run(land, policy, seed + 17 * pi + si, 40, 3, audit=True)
            if (
                not np.array_equal(ref.trajectory, fast.trajectory)
                or ref.final_state != fast.final_state
                or ref.accepted != fast.accepted
                or fast.audit_mismatches
            ):
                return CheckResult("incremental_equality", False, f"policy={policy.label} shape={ns},K={k},C={c}")
    return CheckResult("incremental_equality", True, f"{len(policies) * len(shapes)} reference/compiled run pairs identical")


def check_rejected_identity(n_turns: int = 2_000, seed: int = 0) -> CheckResult:
    """A rejected proposal leaves every genome bit-identical."""
    stream = SplitMix64(seed)
    land = Landscape.from_spec(LandscapeSpec(seed, (6, 6, 6), 2, 2))
    policies = [Policy.coevolution(), Policy.communalism(), Policy.global_control()]
    state = random_state(land, stream)
    rejected = 0
    for n in range(n_turns):
        before = state.copy()
        if not _play_turn(land, state, n % 3, policies[n % 3], stream):
            rejected += 1
            if state != before:
                return CheckResult("rejected_identity", False, f"turn {n} changed state after rejection")
        if n % 50 == 49:
            state = random_state(land, stream)
    return CheckResult("rejected_identity", True, f"{rejected} rejected proposals left state unchanged")


# Reference values: t from scipy.stats.ttest_ind(equal_var=False); p cross-checked
# with a 40-digit mpmath evaluation of the regularized incomplete beta function.
TTEST_VECTORS = [
    ([1, 2, 3, 4, 5], [2, 3, 4, 5, 6], -1.0, 8.0, 0.34659350708733416),
    (
        [19.1, 21.3, 20.4, 18.7, 22.0, 20.9],
        [23.5, 25.1, 19.8, 27.4, 24.2, 22.9, 26.3, 21.7],
        -3.41272586708318, 10.969141900192417, 0.005819869301575132,
    ),
    ([0.1 * i for i in range(30)], [0.1 * i + 1.5 for i in range(30)], -6.5991201759609, 58.0, 1.3769767144047742e-08),
    ([1, 1, 1, 1], [2, 3, 4, 5, 6], -4.242640687119285, 4.0, 0.013235599563682695),
]


def check_ttest_vectors() -> CheckResult:
    for a, b, t, df, p in TTEST_VECTORS:
        r = welch_t_test(a, b)
        if abs(r.t - t) > 1e-9 or abs(r.df - df) > 1e-9 or abs(r.p - p) > 1e-6:
            return CheckResult("ttest_vectors", False, f"a={a} b={b}: got t={r.t} df={r.df} p={r.p}, want t={t} df={df} p={p}")
    same = welch_t_test([0.3, 0.5, 0.9], [0.3, 0.5, 0.9])
    if same.p != 1.0 or same.t != 0.0:
        return CheckResult("ttest_vectors", False, f"identical samples gave t={same.t} p={same.p}")
    return CheckResult("ttest_vectors", True, f"{len(TTEST_VECTORS)} reference vectors and identical-sample case match")


def selfcheck(quick: bool = True) -> list[CheckResult]:
    scale = 1 if quick else 10
    return [
        check_oracle_equality(seeds=range(2 * scale)),
        check_flip_locality(seeds=range(scale + 1)),
        check_policy_nesting(10_000 * scale),
        check_policy_nesting_on_landscapes(300 * scale),
        check_global_monotonicity(20_000 * scale),
        check_incremental_equality(),
        check_rejected_identity(),
        check_ttest_vectors(),
    ]
