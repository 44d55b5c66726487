"""Explicit joint distributions with known neighborhoods, samplers and reference code.

Everything random draws from ``numpy.random.Generator(PCG64(seed))`` so that
runs reproduce bit for bit across platforms; child streams come from
``numpy.random.SeedSequence.spawn``.

The reference implementations here (``naive_pml``, ``naive_argmax``,
``true_neighborhood``) deliberately avoid the estimator's packed-integer
machinery: contexts are plain strings and conditionals come straight from
the enumerated table.
"""

from __future__ import annotations

import csv
import math
import multiprocessing as mp
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .estimator import NeighborhoodParams, estimate_neighborhood
from .ingest import MISSING, GenotypeMatrix

MAX_CELLS = {2: 2 ** 16, 3: 3 ** 10}
FLOOR = 1e-3
EQ_TOL = 1e-12


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; ``seed`` may be an int or a SeedSequence."""
    return np.random.Generator(np.random.PCG64(seed))


def _max_cells(alphabet_size: int) -> int:
    return MAX_CELLS.get(alphabet_size, 2 ** 16)


@dataclass(frozen=True, eq=False)
class JointTable:
    """Distribution over ``A**n_sites`` configurations, one array axis per site."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim == 0 or len(set(p.shape)) != 1:
            raise ValueError("probabilities need one equal-length axis per site")
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        if p.size > _max_cells(p.shape[0]):
            raise ValueError("joint table exceeds the enumeration budget")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    @property
    def n_sites(self) -> int:
        return self.probabilities.ndim

    @property
    def alphabet_size(self) -> int:
        return self.probabilities.shape[0]

    @property
    def full_support(self) -> bool:
        return bool((self.probabilities > 0).all())

    def marginal(self, sites: Sequence[int]) -> np.ndarray:
        """Marginal over ``sites`` (increasing), axes in that order."""
        drop = tuple(k for k in range(self.n_sites) if k not in set(sites))
        return self.probabilities.sum(axis=drop)


def parse_blocks(text: str) -> list[tuple[int, int]]:
    """``"0-3,4-6,7-8"`` -> ``[(0, 3), (4, 6), (7, 8)]``."""
    blocks = []
    for part in text.split(","):
        part = part.strip()
        lo, _, hi = part.partition("-")
        blocks.append((int(lo), int(hi or lo)))
    return blocks


def _check_partition(n_sites: int, blocks: Sequence[tuple[int, int]]) -> None:
    expect = 0
    for lo, hi in blocks:
        if lo != expect or hi < lo:
            raise ValueError("blocks must partition 0..S-1 into contiguous ranges")
        expect = hi + 1
    if expect != n_sites:
        raise ValueError("blocks must cover every site")


def block_distribution(rng: np.random.Generator, size: int, alphabet_size: int,
                       concentration: float, floor: float = FLOOR) -> np.ndarray:
    """Symmetric Dirichlet draw over ``A**size`` cells, floored then renormalized."""
    cells = alphabet_size ** size
    if math.isinf(concentration):
        q = np.full(cells, 1.0 / cells)
    else:
        q = rng.dirichlet(np.full(cells, float(concentration)))
        q = np.maximum(q, floor)
        q /= q.sum()
    return q.reshape((alphabet_size,) * size)


def random_block_model(seed, n_sites: int, block_partition: Sequence[tuple[int, int]],
                       alphabet_size: int = 2, concentration: float = 1.0,
                       floor: float = FLOOR) -> JointTable:
    """Product of independent full-support block distributions.

    ``block_partition`` lists inclusive ``(first, last)`` site ranges.
    ``concentration=inf`` gives uniform blocks.
    """
    _check_partition(n_sites, block_partition)
    if alphabet_size ** n_sites > _max_cells(alphabet_size):
        raise ValueError("block model too large for the table budget")
    rng = make_rng(seed)
    joint = np.ones(())
    for lo, hi in block_partition:
        q = block_distribution(rng, hi - lo + 1, alphabet_size, concentration, floor)
        joint = np.multiply.outer(joint, q)
    joint = joint / joint.sum()
    return JointTable(joint)


def product_model(marginals: Sequence[Sequence[float]]) -> JointTable:
    joint = np.ones(())
    for m in marginals:
        joint = np.multiply.outer(joint, np.asarray(m, dtype=float))
    return JointTable(joint / joint.sum())


def markov_chain_model(n_sites: int, transition, initial=None) -> JointTable:
    """First-order chain; stationary initial law when ``initial`` is None."""
    t = np.asarray(transition, dtype=float)
    if initial is None:
        vals, vecs = np.linalg.eig(t.T)
        pi = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
        initial = pi / pi.sum()
    joint = np.asarray(initial, dtype=float)
    for _ in range(n_sites - 1):
        joint = joint[..., None] * t.reshape((1,) * (joint.ndim - 1) + t.shape)
    return JointTable(joint / joint.sum())


def conditional_table(joint: JointTable, site: int, l: int, r: int) -> np.ndarray:
    """``P(X_site | X_{site-l..site-1}, X_{site+1..site+r})``, axes in site order."""
    window = list(range(site - l, site + r + 1))
    marg = joint.marginal(window)
    return marg / marg.sum(axis=l, keepdims=True)


def satisfies_markov(joint: JointTable, site: int, l: int, r: int) -> bool:
    """Whether conditioning on any larger window leaves the ``(l, r)`` conditional unchanged."""
    base = conditional_table(joint, site, l, r)
    for big_l in range(l, site + 1):
        for big_r in range(r, joint.n_sites - site):
            wide = conditional_table(joint, site, big_l, big_r)
            narrow = base.reshape((1,) * (big_l - l) + base.shape + (1,) * (big_r - r))
            if not np.allclose(wide, narrow, rtol=0.0, atol=EQ_TOL):
                return False
    return True


def true_neighborhood(joint: JointTable, site: int) -> tuple[int, int]:
    """Minimal ``(l0, r0)`` satisfying the variable-range Markov property at ``site``."""
    if not joint.full_support:
        raise ValueError("true_neighborhood requires a full-support joint")
    if not 0 <= site < joint.n_sites:
        raise IndexError(site)
    max_l, max_r = site, joint.n_sites - 1 - site
    feasible = [(l, r) for l in range(max_l + 1) for r in range(max_r + 1)
                if satisfies_markov(joint, site, l, r)]
    l0, r0 = min(feasible, key=lambda lr: (lr[0] + lr[1], lr[0]))
    # positivity makes the feasible set a lattice with a single minimum
    assert all(l >= l0 and r >= r0 for l, r in feasible), feasible
    assert l0 == 0 or (l0 - 1, r0) not in feasible
    assert r0 == 0 or (l0, r0 - 1) not in feasible
    return l0, r0


def true_neighborhoods(joint: JointTable) -> list[tuple[int, int]]:
    return [true_neighborhood(joint, s) for s in range(joint.n_sites)]


def decode_configurations(flat_index: np.ndarray, n_sites: int, alphabet_size: int) -> np.ndarray:
    """Flat table indices to an ``(n_sites, n)`` uint8 array (first site most significant)."""
    cells = np.empty((n_sites, flat_index.size), dtype=np.uint8)
    rest = flat_index.astype(np.int64)
    for k in range(n_sites - 1, -1, -1):
        rest, cells[k] = np.divmod(rest, alphabet_size)
    return cells


def sample_cells(joint: JointTable, n: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(joint.probabilities.ravel())
    u = rng.random(n)
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    return decode_configurations(idx, joint.n_sites, joint.alphabet_size)


def sample(joint: JointTable, n: int, seed) -> GenotypeMatrix:
    """``n`` i.i.d. configurations by inverse CDF over the flattened table."""
    cells = sample_cells(joint, n, make_rng(seed))
    return GenotypeMatrix.from_array(cells, alphabet_size=joint.alphabet_size)


def _context_strings(matrix: GenotypeMatrix, site: int, l: int, r: int):
    rows = matrix.cells[site - l:site + r + 1].T
    for row in rows:
        if (row == MISSING).any():
            continue
        text = "".join(str(int(x)) for x in row)
        yield text[:l], text[l], text[l + 1:]


def naive_pml(matrix: GenotypeMatrix, site: int, l: int, r: int, c: float) -> float:
    """Penalized likelihood by explicit string contexts (reference only)."""
    a = matrix.alphabet_size
    n_wav: Counter = Counter()
    n_wv: Counter = Counter()
    for w, x, v in _context_strings(matrix, site, l, r):
        n_wav[(w, x, v)] += 1
        n_wv[(w, v)] += 1
    ll = 0.0
    for (w, x, v), count in n_wav.items():
        ll += count * math.log(count / n_wv[(w, v)], a)
    return ll - c * a ** (l + r) * math.log(matrix.n_individuals, a)


def naive_argmax(matrix: GenotypeMatrix, site: int, max_left: int, max_right: int,
                 c: float, rtol: float = 1e-10) -> tuple[int, int, float]:
    """Brute-force argmax of :func:`naive_pml`; ties to smaller ``l + r``, then ``l``."""
    chrom = matrix.chromosomes
    room_l = 0
    while room_l < max_left and site - room_l - 1 >= 0 and chrom[site - room_l - 1] == chrom[site]:
        room_l += 1
    room_r = 0
    while (room_r < max_right and site + room_r + 1 < matrix.n_sites
           and chrom[site + room_r + 1] == chrom[site]):
        room_r += 1
    best = None
    for total in range(room_l + room_r + 1):
        for l in range(0, total + 1):
            r = total - l
            if l > room_l or r > room_r:
                continue
            score = naive_pml(matrix, site, l, r, c)
            if best is None or score > best[2] + rtol * max(1.0, abs(best[2])):
                best = (l, r, score)
    return best


def kl_divergence(p, q, base: float | None = None) -> float:
    """``sum P(a) log(P(a)/Q(a))`` in base ``|A|`` by default; ``inf`` if P is not dominated by Q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("P and Q must share an alphabet")
    base = p.size if base is None else base
    total = 0.0
    for pa, qa in zip(p, q):
        if pa == 0:
            continue
        if qa == 0:
            return math.inf
        total += pa * math.log(pa / qa)
    return total / math.log(base)


@dataclass(frozen=True)
class ExperimentRow:
    model_id: str
    n: int
    replicate: int
    site: int
    l_true: int
    r_true: int
    l_hat: int
    r_hat: int

    @property
    def recovered(self) -> bool:
        return (self.l_hat, self.r_hat) == (self.l_true, self.r_true)


def _replicate(args):
    joint, site, n, replicate, params, seed_seq, model_id, truth = args
    matrix = sample(joint, n, seed_seq)
    nb = estimate_neighborhood(matrix, site, params)
    return ExperimentRow(model_id, n, replicate, site, truth[0], truth[1], nb.l_hat, nb.r_hat)


def consistency_experiment(joint: JointTable, site: int, n_grid: Sequence[int],
                           replicates: int, params: NeighborhoodParams, seed=0,
                           model_id: str = "model", workers: int = 1
                           ) -> tuple[list[ExperimentRow], dict[int, float]]:
    """Recovery rate of the true neighborhood of ``site`` for each sample size.

    Replicate ``(i, j)`` (``i``-th sample size, ``j``-th replicate) samples
    with the ``(i, j)`` child of ``SeedSequence(seed)``, so results do not
    depend on ``workers``.
    """
    if replicates <= 0:
        return [], {}
    truth = true_neighborhood(joint, site)
    root = np.random.SeedSequence(seed)
    per_n = root.spawn(len(n_grid))
    tasks = []
    for i, n in enumerate(n_grid):
        for j, child in enumerate(per_n[i].spawn(replicates)):
            tasks.append((joint, site, int(n), j, params, child, model_id, truth))
    if workers > 1:
        with ProcessPoolExecutor(workers, mp_context=mp.get_context("fork")) as pool:
            rows = list(pool.map(_replicate, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        rows = [_replicate(t) for t in tasks]
    rates = {}
    for n in n_grid:
        hits = [row.recovered for row in rows if row.n == n]
        rates[int(n)] = sum(hits) / len(hits)
    return rows, rates


EXPERIMENT_COLUMNS = ("model_id", "n", "replicate", "site", "l_true", "r_true", "l_hat",
                      "r_hat", "recovered")


def write_experiment_csv(rows: Sequence[ExperimentRow], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(EXPERIMENT_COLUMNS)
    for row in rows:
        writer.writerow([row.model_id, row.n, row.replicate, row.site, row.l_true, row.r_true,
                         row.l_hat, row.r_hat, int(row.recovered)])


def simulate_genome(n_sites: int, n: int, seed, alphabet_size: int = 3,
                    max_block: int = 4, concentration: float = 0.5,
                    n_chromosomes: int = 1, with_truth: bool = True
                    ) -> tuple[GenotypeMatrix, list[tuple[int, int]] | None]:
    """Long synthetic matrix built from independent random blocks.

    Block lengths are uniform on ``1..max_block``; each block is an
    independent :func:`random_block_model` sample, so every site's true
    neighborhood is the one computed inside its own block. Sites are split
    evenly over ``n_chromosomes`` and blocks never span a chromosome break.
    """
    rng = make_rng(seed)
    bounds = np.linspace(0, n_sites, n_chromosomes + 1).astype(int)
    cells = np.empty((n_sites, n), dtype=np.uint8)
    truth: list[tuple[int, int]] | None = [] if with_truth else None
    for c in range(n_chromosomes):
        s = bounds[c]
        while s < bounds[c + 1]:
            size = int(min(rng.integers(1, max_block + 1), bounds[c + 1] - s))
            q = block_distribution(rng, size, alphabet_size, concentration)
            joint = JointTable(q)
            cells[s:s + size] = sample_cells(joint, n, rng)
            if truth is not None:
                truth.extend(true_neighborhoods(joint))
            s += size
    chrom = np.repeat(np.arange(1, n_chromosomes + 1), np.diff(bounds))
    positions = np.empty(n_sites, dtype=np.int64)
    for c in range(n_chromosomes):
        k = bounds[c + 1] - bounds[c]
        positions[bounds[c]:bounds[c + 1]] = 1000 * np.arange(1, k + 1)
    matrix = GenotypeMatrix.from_array(cells, alphabet_size, chromosomes=chrom,
                                       positions=positions)
    return matrix, truth


def simulate_phenotype(n: int, seed, case_fraction: float = 0.5) -> np.ndarray:
    """Labels independent of any genotype, exactly ``round(case_fraction * n)`` cases."""
    rng = make_rng(seed)
    labels = np.zeros(n, dtype=np.int8)
    labels[: int(round(case_fraction * n))] = 1
    rng.shuffle(labels)
    return labels


def planted_phenotype(matrix: GenotypeMatrix, start: int, end: int, seed,
                      accuracy: float = 0.9) -> np.ndarray:
    """Labels determined by the configuration of sites ``start..end``.

    An individual is a case when the sum of its window scores is odd; each
    label is then flipped with probability ``1 - accuracy``.
    """
    rng = make_rng(seed)
    block = matrix.cells[start:end + 1].astype(np.int64)
    labels = (block.sum(axis=0) % 2).astype(np.int8)
    flip = rng.random(labels.size) > accuracy
    labels[flip] = 1 - labels[flip]
    return labels
