"""Monte Carlo populations of researchers under a publication rule.

Random streams use the Philox4x64 counter-based generator.  Records are
generated in fixed blocks of ``BLOCK`` indices; block ``b`` of stream ``k``
draws from ``Philox(SeedSequence(seed, spawn_key=(k, b)))``.  Output is
therefore bit-identical for a given seed whatever the number of worker
threads.  Stream 0 carries ``(theta, eps)``, stream 1 the publication
uniforms.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._errors import DomainError
from .manipulation_rules import (
    MANIPULATION_EPS,
    ManipulationEnv,
    Policy,
    Rule,
    respond,
)

BLOCK = 1 << 16
THREADS_ENV = "PUBRULES_THREADS"
RNG_ALGORITHM = "Philox4x64-10"


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(stream, block))
    return np.random.Generator(np.random.Philox(ss))


def _blocked(n: int, seed: int, stream: int, draw) -> np.ndarray:
    n_blocks = math.ceil(n / BLOCK)

    def one(b):
        size = min(BLOCK, n - b * BLOCK)
        return draw(_block_generator(seed, stream, b), size)

    workers = _threads()
    if workers == 1 or n_blocks == 1:
        parts = [one(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(one, range(n_blocks)))
    return np.concatenate(parts, axis=-1)


@dataclass(frozen=True)
class Population:
    theta: np.ndarray
    eps: np.ndarray
    seed: int

    @property
    def y(self) -> np.ndarray:
        return self.theta + self.eps

    def __len__(self) -> int:
        return self.theta.size


def sample_population(env: ManipulationEnv, n: int, seed: int) -> Population:
    if n < 1:
        raise DomainError("population size must be at least 1")
    eta, s = math.sqrt(env.eta2), math.sqrt(env.s2)

    def draw(gen, size):
        z = gen.standard_normal((2, size))
        return np.stack([eta * z[0], s * z[1]])

    out = _blocked(n, seed, 0, draw)
    return Population(theta=out[0], eps=out[1], seed=seed)


@dataclass(frozen=True)
class EquilibriumRecord:
    theta: float
    eps: float
    y: float
    bias: float
    reported_x: float
    pub_prob: float
    published: bool


@dataclass(frozen=True)
class Records:
    """Column store of :class:`EquilibriumRecord` rows."""

    theta: np.ndarray
    eps: np.ndarray
    bias: np.ndarray
    pub_prob: np.ndarray
    published: np.ndarray

    @property
    def y(self) -> np.ndarray:
        return self.theta + self.eps

    @property
    def reported_x(self) -> np.ndarray:
        y = self.y
        return np.where(y < 0, -1.0, 1.0) * (np.abs(y) + self.bias)

    def __len__(self) -> int:
        return self.theta.size

    def __getitem__(self, i: int) -> EquilibriumRecord:
        y = float(self.theta[i] + self.eps[i])
        b = float(self.bias[i])
        return EquilibriumRecord(
            theta=float(self.theta[i]), eps=float(self.eps[i]), y=y, bias=b,
            reported_x=math.copysign(abs(y) + b, y), pub_prob=float(self.pub_prob[i]),
            published=bool(self.published[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_records(cls, rows) -> "Records":
        rows = list(rows)
        return cls(
            theta=np.array([r.theta for r in rows], dtype=float),
            eps=np.array([r.eps for r in rows], dtype=float),
            bias=np.array([r.bias for r in rows], dtype=float),
            pub_prob=np.array([r.pub_prob for r in rows], dtype=float),
            published=np.array([r.published for r in rows], dtype=bool),
        )


def simulate_equilibrium(env: ManipulationEnv, rule: Rule, policy: Policy,
                         population: Population, seed: int) -> Records:
    """Apply researcher responses to ``rule`` and realize publication decisions."""
    r = respond(env, rule, population.y, policy)
    u = _blocked(len(population), seed, 1, lambda gen, size: gen.random(size))
    return Records(
        theta=population.theta,
        eps=population.eps,
        bias=r.bias,
        pub_prob=r.pub_prob,
        published=u < r.pub_prob,
    )


@dataclass(frozen=True)
class SummaryStats:
    """Shares within published findings are NaN when nothing was published."""

    n: int
    n_published: int
    pct_published: float
    expected_published: float
    se_published: float
    pct_manipulated_within_published: float
    avg_abs_bias_within_published: float


def summarize(records: Records) -> SummaryStats:
    n = len(records)
    if n == 0:
        raise DomainError("cannot summarize an empty record set")
    pub = np.asarray(records.published, dtype=bool)
    k = int(pub.sum())
    share = k / n
    if k:
        manip = float(np.count_nonzero(records.bias[pub] > MANIPULATION_EPS)) / k
        avg_bias = float(np.abs(records.bias[pub]).sum()) / k
    else:
        manip = avg_bias = math.nan
    return SummaryStats(
        n=n,
        n_published=k,
        pct_published=share,
        expected_published=float(np.mean(records.pub_prob)),
        se_published=math.sqrt(share * (1.0 - share) / n),
        pct_manipulated_within_published=manip,
        avg_abs_bias_within_published=avg_bias,
    )


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    # (location, mass) pairs; masses are shares of all records.
    atoms: list[tuple[float, float]]


def histogram_export(records: Records, edges, field: str = "reported_x_abs",
                     atom_locations=(), published_only: bool = True,
                     atom_ratio: float = 20.0, atom_atol: float = 1e-9) -> Histogram:
    """Density histogram with point masses at known cutoffs split out.

    A location in ``atom_locations`` becomes an atom when the bin containing
    it holds more than ``atom_ratio`` times the average mass of its two
    neighbours; the records sitting at that location (within ``atom_atol``)
    are then removed from the bins and reported as a point mass.  Densities
    are normalized by the total record count so bins and atoms together sum
    to the share of records included.
    """
    edges = np.asarray(edges, dtype=float)
    if np.any(np.diff(edges) <= 0):
        raise DomainError("bin edges must be strictly increasing")
    if field == "reported_x_abs":
        vals = np.abs(records.reported_x)
    elif field == "y_abs":
        vals = np.abs(records.y)
    else:
        raise ValueError(f"unknown field {field!r}")
    n = len(records)
    if published_only:
        vals = vals[np.asarray(records.published, dtype=bool)]
    counts, _ = np.histogram(vals, bins=edges)
    counts = counts.astype(float)
    atoms = []
    for loc in atom_locations:
        i = int(np.searchsorted(edges, loc, side="right")) - 1
        if not 0 <= i < counts.size:
            continue
        neighbours = [counts[j] for j in (i - 1, i + 1) if 0 <= j < counts.size]
        ref = float(np.mean(neighbours)) if neighbours else 0.0
        if counts[i] <= atom_ratio * ref:
            continue
        at = int(np.count_nonzero(np.abs(vals - loc) <= atom_atol))
        if at == 0:
            continue
        counts[i] -= at
        atoms.append((float(loc), at / n))
    density = counts / (n * np.diff(edges))
    return Histogram(edges=edges, density=density, atoms=atoms)


def default_atom_locations(rule: Rule) -> list[float]:
    return [rule.cutoff]

