"""Ecosystem state and the governed hill-climbing loop.

Each generation every species, in ascending order, proposes flipping one
uniformly chosen gene of its own genome. The proposal is adopted or
reverted according to a :class:`Policy`, and an adopted change is visible
to the next proposer.

The pure-Python functions here (:func:`propose`, :func:`decide`,
:func:`step_generation`) are the reference semantics. :func:`run` uses the
compiled kernel by default and can be switched to the reference loop with
``engine="reference"``; both consume the random stream identically and
produce bit-identical trajectories.

Random draws per run, from one ``SplitMix64(start_seed)`` stream:

1. one ``bit()`` per gene, species ascending, to initialise genomes;
2. per turn, one ``below(N_s)`` for the gene to flip;
3. during :func:`decide`, error draws only when an error could change the
   outcome (communalism with ``error_rate > 0``): per-voter mode draws once
   per harmed voter in ascending species order, collective mode draws once
   if the tally rejects.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .landscape import Landscape
from .rng import SplitMix64

__all__ = [
    "PolicyKind",
    "ErrorMode",
    "Policy",
    "EcosystemState",
    "Proposal",
    "VoteTally",
    "RunResult",
    "propose",
    "tally_votes",
    "decide",
    "step_generation",
    "random_state",
    "run",
    "trace_rows",
    "write_trajectory_csv",
]


class PolicyKind(str, enum.Enum):
    COEVOLUTION = "coevolution"
    COMMUNALISM = "communalism"
    GLOBAL_CONTROL = "global"

    @classmethod
    def parse(cls, text: str) -> "PolicyKind":
        aliases = {
            "coev": cls.COEVOLUTION,
            "coevolution": cls.COEVOLUTION,
            "com": cls.COMMUNALISM,
            "communalism": cls.COMMUNALISM,
            "glob": cls.GLOBAL_CONTROL,
            "global": cls.GLOBAL_CONTROL,
            "global_control": cls.GLOBAL_CONTROL,
        }
        try:
            return aliases[str(text).strip().lower()]
        except KeyError:
            raise ValueError(f"unknown policy {text!r}; expected one of coev, com, glob") from None


class ErrorMode(str, enum.Enum):
    COLLECTIVE = "collective"
    PER_VOTER = "per_voter"


_KIND_CODE = {
    PolicyKind.COEVOLUTION: _kernel.COEVOLUTION,
    PolicyKind.COMMUNALISM: _kernel.COMMUNALISM,
    PolicyKind.GLOBAL_CONTROL: _kernel.GLOBAL_CONTROL,
}


@dataclass(frozen=True)
class Policy:
    """Acceptance rule for proposed mutations.

    ``error_rate`` and ``error_mode`` only matter for communalism. In
    collective mode a rejecting tally is overturned with probability
    ``error_rate``; in per-voter mode each harmed voter independently
    approves with that probability.
    """

    kind: PolicyKind = PolicyKind.COEVOLUTION
    error_rate: float = 0.0
    error_mode: ErrorMode = ErrorMode.COLLECTIVE

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind.parse(self.kind) if not isinstance(self.kind, PolicyKind) else self.kind)
        object.__setattr__(self, "error_mode", ErrorMode(self.error_mode))
        if not 0.0 <= self.error_rate <= 1.0:
            raise ValueError(f"error_rate must lie in [0, 1], got {self.error_rate}")
        if self.kind is not PolicyKind.COMMUNALISM and self.error_rate != 0.0:
            raise ValueError("error_rate applies to communalism only")

    @classmethod
    def coevolution(cls) -> "Policy":
        return cls(PolicyKind.COEVOLUTION)

    @classmethod
    def communalism(cls, error_rate: float = 0.0, error_mode: str = "collective") -> "Policy":
        return cls(PolicyKind.COMMUNALISM, error_rate, ErrorMode(error_mode))

    @classmethod
    def global_control(cls) -> "Policy":
        return cls(PolicyKind.GLOBAL_CONTROL)

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.COMMUNALISM and self.error_rate > 0:
            return f"communalism[{self.error_mode.value}:{self.error_rate:g}]"
        return self.kind.value


@dataclass
class EcosystemState:
    genomes: list[np.ndarray]
    generation: int = 0

    def copy(self) -> "EcosystemState":
        return EcosystemState([g.copy() for g in self.genomes], self.generation)

    def __eq__(self, other):
        if not isinstance(other, EcosystemState):
            return NotImplemented
        return self.generation == other.generation and len(self.genomes) == len(other.genomes) and all(
            np.array_equal(a, b) for a, b in zip(self.genomes, other.genomes)
        )


@dataclass(frozen=True)
class Proposal:
    species: int
    gene: int
    prior: tuple[float, ...]
    posterior: tuple[float, ...]


@dataclass(frozen=True)
class VoteTally:
    """Votes of the S non-proposing assemblies; approve means not harmed."""

    approvals: int
    rejections: int


def random_state(landscape: Landscape, stream: SplitMix64) -> EcosystemState:
    genomes = [
        np.array([stream.bit() for _ in range(n)], dtype=np.uint8)
        for n in landscape.spec.n_per_species
    ]
    return EcosystemState(genomes, 0)


def propose(landscape: Landscape, state: EcosystemState, species: int, stream: SplitMix64) -> Proposal:
    """Pick a gene of ``species`` uniformly, evaluate every species with it flipped.

    ``state`` is left untouched.
    """
    gene = stream.below(landscape.spec.n_per_species[species])
    prior = landscape.all_species_fitness(state)
    flipped = [g.copy() if s == species else g for s, g in enumerate(state.genomes)]
    flipped[species][gene] ^= 1
    posterior = landscape.all_species_fitness(flipped)
    return Proposal(species, gene, prior, posterior)


def tally_votes(proposal: Proposal) -> VoteTally:
    others = [t for t in range(len(proposal.prior)) if t != proposal.species]
    approvals = sum(proposal.posterior[t] >= proposal.prior[t] for t in others)
    return VoteTally(approvals, len(others) - approvals)


def decide(policy: Policy, proposal: Proposal, stream: SplitMix64 | None = None) -> bool:
    prior, post, s = proposal.prior, proposal.posterior, proposal.species
    if post[s] < prior[s]:
        return False
    if policy.kind is PolicyKind.COEVOLUTION:
        return True
    if policy.kind is PolicyKind.GLOBAL_CONTROL:
        return all(b >= a for a, b in zip(prior, post))

    n_others = len(prior) - 1
    erring = policy.error_rate > 0.0
    if erring and stream is None:
        raise ValueError("an error-prone policy needs a random stream")
    if policy.error_mode is ErrorMode.PER_VOTER:
        approvals = 0
        for t in range(len(prior)):
            if t == s:
                continue
            if post[t] >= prior[t]:
                approvals += 1
            elif erring and stream.uniform() < policy.error_rate:
                approvals += 1
        return 2 * approvals >= n_others
    approvals = tally_votes(proposal).approvals
    if 2 * approvals >= n_others:
        return True
    if erring:
        return stream.uniform() < policy.error_rate
    return False


def _play_turn(landscape, state, species, policy, stream) -> bool:
    proposal = propose(landscape, state, species, stream)
    if decide(policy, proposal, stream):
        state.genomes[species][proposal.gene] ^= 1
        return True
    return False


def step_generation(landscape: Landscape, state: EcosystemState, policy: Policy, stream: SplitMix64) -> EcosystemState:
    """One proposal per species in ascending order; returns the new state."""
    new = state.copy()
    for s in range(landscape.spec.species_count):
        _play_turn(landscape, new, s, policy, stream)
    new.generation += 1
    return new


@dataclass
class RunResult:
    """Trajectory rows are ``[generation, fitness_0 .. fitness_S, system]``."""

    trajectory: np.ndarray
    final_state: EcosystemState
    last_accept_generation: int
    accepted: int
    audit_mismatches: int = field(default=0, repr=False)
    audit_decreases: int = field(default=0, repr=False)

    @property
    def final_species_fitness(self) -> tuple[float, ...]:
        return tuple(float(x) for x in self.trajectory[-1, 1:-1])

    @property
    def final_system_fitness(self) -> float:
        return float(self.trajectory[-1, -1])


def trace_rows(generations: int, trace_every: int) -> int:
    """Rows recorded: the start, each multiple of ``trace_every``, and the end."""
    if generations <= 0:
        return 1
    if trace_every <= 0:
        return 2
    return 1 + math.ceil(generations / trace_every)


def _record(landscape, state, generation) -> list[float]:
    fits = landscape.all_species_fitness(state)
    total = 0.0
    for f in fits:
        total += f
    return [float(generation), *fits, total / len(fits)]


def _run_reference(landscape, policy, start_seed, generations, trace_every) -> RunResult:
    stream = SplitMix64(start_seed)
    state = random_state(landscape, stream)
    rows = [_record(landscape, state, 0)]
    last, accepted = 0, 0
    for gen in range(1, generations + 1):
        for s in range(landscape.spec.species_count):
            if _play_turn(landscape, state, s, policy, stream):
                last, accepted = gen, accepted + 1
        state.generation = gen
        if gen == generations or (trace_every > 0 and gen % trace_every == 0):
            rows.append(_record(landscape, state, gen))
    return RunResult(np.array(rows), state, last, accepted)


def run(
    landscape: Landscape,
    policy: Policy,
    start_seed: int,
    generations: int,
    trace_every: int = 100,
    *,
    engine: str = "fast",
    audit: bool = False,
) -> RunResult:
    """Random start from ``start_seed`` then ``generations`` rounds of hill climbing."""
    if generations < 0:
        raise ValueError("generations must be >= 0")
    if engine == "reference":
        return _run_reference(landscape, policy, start_seed, generations, trace_every)
    if engine != "fast":
        raise ValueError(f"unknown engine {engine!r}")

    a = landscape.arrays
    s1 = landscape.spec.species_count
    trace = np.zeros((trace_rows(generations, trace_every), s1 + 2))
    g, last, accepted, mismatch, decrease = _kernel.simulate(
        a["n"], a["local"], a["ext"], a["partners"], a["keys"],
        a["dep_ptr"], a["dep_species"], a["dep_gene"],
        _KIND_CODE[policy.kind], float(policy.error_rate),
        policy.error_mode is ErrorMode.PER_VOTER,
        np.uint64(start_seed), int(generations), int(trace_every), trace, bool(audit),
    )
    genomes = [g[s, :n].copy() for s, n in enumerate(landscape.spec.n_per_species)]
    return RunResult(trace, EcosystemState(genomes, generations), int(last), int(accepted), int(mismatch), int(decrease))


def write_trajectory_csv(path, trajectory: np.ndarray) -> None:
    """Columns: generation, fitness_species_0..S, system_fitness."""
    n_species = trajectory.shape[1] - 2
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["generation", *(f"fitness_species_{s}" for s in range(n_species)), "system_fitness"])
        for row in trajectory:
            w.writerow([int(row[0]), *(repr(float(x)) for x in row[1:])])
