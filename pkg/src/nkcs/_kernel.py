"""Compiled hill-climbing loop.

Mirrors :mod:`nkcs.dynamics` exactly: same random-draw order, same
summation order, same acceptance rules. Only the genes wired to the flipped
bit are re-evaluated; species fitness is then re-summed over the cached
per-gene contributions in index order, so values are bit-identical to a
full recomputation.
"""

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
M1 = np.uint64(0xBF58476D1CE4E5B9)
M2 = np.uint64(0x94D049BB133111EB)
UNIT = 2.0**-53

COEVOLUTION = 0
COMMUNALISM = 1
GLOBAL_CONTROL = 2


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * M1
    z = (z ^ (z >> np.uint64(27))) * M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def next_u64(st):
    st[0] += GOLDEN
    return mix64(st[0])


@njit(cache=True, inline="always")
def next_unit(st):
    return np.float64(next_u64(st) >> np.uint64(11)) * UNIT


@njit(cache=True)
def mix64_array(z):
    out = np.empty_like(z)
    for i in range(z.shape[0]):
        out[i] = mix64(z[i])
    return out


@njit(cache=True, inline="always")
def eval_gene(g, s, i, local, ext, partners, keys):
    k = local.shape[2]
    nq = ext.shape[2]
    c = ext.shape[3]
    p = np.uint64(g[s, i])
    pos = 1
    for j in range(k):
        p |= np.uint64(g[s, local[s, i, j]]) << np.uint64(pos)
        pos += 1
    for q in range(nq):
        t = partners[s, q]
        for j in range(c):
            p |= np.uint64(g[t, ext[s, i, q, j]]) << np.uint64(pos)
            pos += 1
    u = mix64(keys[s, i] + (p + np.uint64(1)) * GOLDEN)
    return np.float64(u >> np.uint64(11)) * UNIT


@njit(cache=True, inline="always")
def row_mean(row, n):
    total = 0.0
    for j in range(n):
        total += row[j]
    return total / n


@njit(cache=True)
def full_contributions(g, n, local, ext, partners, keys, contrib, fit):
    for s in range(n.shape[0]):
        for i in range(n[s]):
            contrib[s, i] = eval_gene(g, s, i, local, ext, partners, keys)
        fit[s] = row_mean(contrib[s], n[s])


@njit(cache=True)
def decide(kind, error_rate, per_voter, proposer, prior, post, st):
    """Acceptance rule; draws from ``st`` only when an error can fire."""
    s1 = prior.shape[0]
    if post[proposer] < prior[proposer]:
        return False
    if kind == COEVOLUTION:
        return True
    if kind == GLOBAL_CONTROL:
        for t in range(s1):
            if post[t] < prior[t]:
                return False
        return True
    approvals = 0
    for t in range(s1):
        if t == proposer:
            continue
        if post[t] >= prior[t]:
            approvals += 1
        elif per_voter and error_rate > 0.0:
            if next_unit(st) < error_rate:
                approvals += 1
    if 2 * approvals >= s1 - 1:
        return True
    if not per_voter and error_rate > 0.0:
        return next_unit(st) < error_rate
    return False


@njit(cache=True)
def simulate(n, local, ext, partners, keys, dep_ptr, dep_species, dep_gene,
             kind, error_rate, per_voter, seed, generations, trace_every, trace, audit):
    """Run one hill-climbing trajectory.

    ``trace`` is pre-allocated with one row per recorded generation:
    ``[generation, fitness_0 .. fitness_S, system_fitness]``.

    Returns ``(genomes, last_accept_generation, accepted, audit_mismatch,
    audit_decrease)``. With ``audit`` set, every accepted change is followed by
    a full recomputation compared for exact equality with the incremental
    state (mismatch count) and for per-species decreases (decrease count).
    """
    s1 = n.shape[0]
    nmax = keys.shape[1]
    st = np.empty(1, dtype=np.uint64)
    st[0] = seed
    g = np.zeros((s1, nmax), dtype=np.uint8)
    for s in range(s1):
        for i in range(n[s]):
            g[s, i] = np.uint8(next_u64(st) >> np.uint64(63))

    contrib = np.zeros((s1, nmax))
    fit = np.zeros(s1)
    full_contributions(g, n, local, ext, partners, keys, contrib, fit)
    scratch = np.zeros((s1, nmax))
    post = np.zeros(s1)
    affected = np.zeros(s1, dtype=np.bool_)
    chk_contrib = np.zeros((s1, nmax))
    chk_fit = np.zeros(s1)

    row = 0
    trace[row, 0] = 0.0
    tot = 0.0
    for s in range(s1):
        trace[row, 1 + s] = fit[s]
        tot += fit[s]
    trace[row, 1 + s1] = tot / s1
    row += 1

    last_accept = 0
    accepted = 0
    mismatch = 0
    decrease = 0
    for gen in range(1, generations + 1):
        for s in range(s1):
            i = np.int64(next_unit(st) * n[s])
            g[s, i] ^= np.uint8(1)
            lo = dep_ptr[s * nmax + i]
            hi = dep_ptr[s * nmax + i + 1]
            for t in range(s1):
                affected[t] = False
            for d in range(lo, hi):
                affected[dep_species[d]] = True

            # proposer first: every policy rejects a change that harms it
            for j in range(n[s]):
                scratch[s, j] = contrib[s, j]
            for d in range(lo, hi):
                if dep_species[d] == s:
                    scratch[s, dep_gene[d]] = eval_gene(g, s, dep_gene[d], local, ext, partners, keys)
            post[s] = row_mean(scratch[s], n[s])
            if post[s] < fit[s]:
                g[s, i] ^= np.uint8(1)
                continue

            for t in range(s1):
                if t == s:
                    continue
                if not affected[t]:
                    post[t] = fit[t]
                    continue
                for j in range(n[t]):
                    scratch[t, j] = contrib[t, j]
                for d in range(lo, hi):
                    if dep_species[d] == t:
                        scratch[t, dep_gene[d]] = eval_gene(g, t, dep_gene[d], local, ext, partners, keys)
                post[t] = row_mean(scratch[t], n[t])

            if decide(kind, error_rate, per_voter, s, fit, post, st):
                for t in range(s1):
                    if affected[t]:
                        for j in range(n[t]):
                            contrib[t, j] = scratch[t, j]
                if audit:
                    full_contributions(g, n, local, ext, partners, keys, chk_contrib, chk_fit)
                    for t in range(s1):
                        if chk_fit[t] < fit[t]:
                            decrease += 1
                        if chk_fit[t] != post[t]:
                            mismatch += 1
                for t in range(s1):
                    fit[t] = post[t]
                last_accept = gen
                accepted += 1
            else:
                g[s, i] ^= np.uint8(1)
                if audit:
                    full_contributions(g, n, local, ext, partners, keys, chk_contrib, chk_fit)
                    for t in range(s1):
                        if chk_fit[t] != fit[t]:
                            mismatch += 1

        if trace_every > 0 and gen % trace_every == 0 and gen != generations:
            trace[row, 0] = gen
            tot = 0.0
            for t in range(s1):
                trace[row, 1 + t] = fit[t]
                tot += fit[t]
            trace[row, 1 + s1] = tot / s1
            row += 1

    if generations > 0:
        trace[row, 0] = generations
        tot = 0.0
        for t in range(s1):
            trace[row, 1 + t] = fit[t]
            tot += fit[t]
        trace[row, 1 + s1] = tot / s1
    return g, last_accept, accepted, mismatch, decrease
