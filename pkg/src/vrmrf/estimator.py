"""Penalized maximum conditional likelihood selection of per-site neighborhoods.

For a site ``s`` and arm lengths ``(l, r)`` every individual contributes the
window ``x[s-l .. s+r]``. The window is packed into one integer in base
``|A|`` (leftmost site most significant), so the left context ``w``, the
centre symbol ``a`` and the right context ``v`` are digit groups of that
integer. Candidate scores are

    LL(l, r) - c * |A|**(l + r) * log_|A|(n)

with ``LL`` the base-``|A|`` log conditional likelihood of the centre given
its context and ``n`` the total number of individuals.
"""

from __future__ import annotations

import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence, TextIO

import numpy as np

from .ingest import MISSING, GenotypeMatrix

DENSE_LIMIT = 2 ** 20
# bins per bincount call on the dense path
BIN_BUDGET = 2 ** 22
# bytes of packed keys per block of sites
KEY_BUDGET = 2 ** 26
CHUNK_SITES = 4096
# relative slack under which two candidate scores count as tied
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class NeighborhoodParams:
    penalty_c: float = 1.0
    max_left: int = 5
    max_right: int = 5
    alphabet_size: int | None = None
    dense_limit: int = DENSE_LIMIT

    def __post_init__(self):
        if not self.penalty_c > 0:
            raise ValueError("penalty_c must be positive")
        if self.max_left < 0 or self.max_right < 0:
            raise ValueError("max_left and max_right must be non-negative")
        if self.alphabet_size is not None and self.alphabet_size < 2:
            raise ValueError("alphabet_size must be >= 2")

    def alphabet_for(self, matrix: GenotypeMatrix) -> int:
        if self.alphabet_size is None:
            return matrix.alphabet_size
        if self.alphabet_size != matrix.alphabet_size:
            raise ValueError("params.alphabet_size does not match the matrix")
        return self.alphabet_size


@dataclass(frozen=True, eq=False)
class ContextCounts:
    """Counts ``N(w, a, v)`` for one site and one ``(l, r)``.

    Only observed contexts are stored. ``contexts`` holds the packed
    ``(w, v)`` codes (``w * |A|**r + v``) in increasing order and
    ``counts[k, a]`` is the count of centre symbol ``a`` after context
    ``contexts[k]``.
    """

    site: int
    l: int
    r: int
    alphabet_size: int
    contexts: np.ndarray
    counts: np.ndarray
    effective_n: int

    def __getitem__(self, key: tuple[Sequence[int], Sequence[int]]) -> np.ndarray:
        w, v = key
        if len(w) != self.l or len(v) != self.r:
            raise KeyError(key)
        code = _pack(list(w) + list(v), self.alphabet_size)
        k = np.searchsorted(self.contexts, code)
        if k < self.contexts.size and self.contexts[k] == code:
            return self.counts[k].copy()
        return np.zeros(self.alphabet_size, dtype=np.int64)

    def items(self) -> Iterator[tuple[tuple[tuple[int, ...], tuple[int, ...]], np.ndarray]]:
        for code, row in zip(self.contexts, self.counts):
            digits = _unpack(int(code), self.l + self.r, self.alphabet_size)
            yield (tuple(digits[:self.l]), tuple(digits[self.l:])), row

    def as_dict(self) -> dict:
        return {k: v for k, v in self.items()}


@dataclass(frozen=True)
class SiteNeighborhood:
    site: int
    l_hat: int
    r_hat: int
    pml_score: float
    effective_n_at_opt: int

    @property
    def size(self) -> int:
        return self.l_hat + self.r_hat


def _pack(digits: Sequence[int], base: int) -> int:
    code = 0
    for d in digits:
        code = code * base + int(d)
    return code


def _unpack(code: int, length: int, base: int) -> list[int]:
    digits = [0] * length
    for k in range(length - 1, -1, -1):
        code, digits[k] = divmod(code, base)
    return digits


def penalty(l: int, r: int, alphabet_size: int, n: int, c: float) -> float:
    """``c * |A|**(l + r) * log_|A|(n)``."""
    return c * alphabet_size ** (l + r) * (math.log(n) / math.log(alphabet_size))


def _check_window(matrix: GenotypeMatrix, site: int, l: int, r: int) -> None:
    if not 0 <= site < matrix.n_sites:
        raise IndexError(f"site {site} out of range")
    if l < 0 or r < 0:
        raise ValueError("arm lengths must be non-negative")
    chrom = matrix.chromosomes
    lo, hi = site - l, site + r
    if lo < 0 or hi >= matrix.n_sites or chrom[lo] != chrom[site] or chrom[hi] != chrom[site]:
        raise ValueError(f"window [{lo}, {hi}] around site {site} crosses a chromosome boundary")


def _window_keys(matrix: GenotypeMatrix, site: int, l: int, r: int) -> np.ndarray:
    """Packed window codes of the individuals with complete data in the window."""
    block = matrix.cells[site - l:site + r + 1]
    complete = ~(block == MISSING).any(axis=0)
    block = block[:, complete].astype(np.int64)
    weights = matrix.alphabet_size ** np.arange(l + r, -1, -1, dtype=np.int64)
    return weights @ block if block.shape[0] else np.zeros(block.shape[1], dtype=np.int64)


def count_contexts(matrix: GenotypeMatrix, site: int, l: int, r: int) -> ContextCounts:
    """Tabulate ``N(w, a, v)`` at ``site`` for arm lengths ``(l, r)``.

    Individuals with a missing call anywhere in ``[site - l, site + r]`` are
    skipped. Raises ``ValueError`` if the window leaves the site's chromosome.
    """
    _check_window(matrix, site, l, r)
    a = matrix.alphabet_size
    if (l + r + 1) * math.log2(a) >= 62:
        raise ValueError("window too long to pack into a 64-bit code")
    keys = _window_keys(matrix, site, l, r)
    right = a ** r
    ctx = (keys // (right * a)) * right + keys % right
    centre = (keys // right) % a
    contexts, inverse = np.unique(ctx, return_inverse=True)
    counts = np.zeros((contexts.size, a), dtype=np.int64)
    np.add.at(counts, (inverse.reshape(-1), centre), 1)
    return ContextCounts(site, l, r, a, contexts, counts, int(keys.size))


def conditional_mle(counts) -> np.ndarray:
    """``N(w, a, v) / N(w, v)``; uniform ``1/|A|`` when the context is unseen."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total == 0:
        return np.full(counts.size, 1.0 / counts.size)
    return counts / total


def log_conditional_likelihood(counts: ContextCounts) -> float:
    """Base-``|A|`` log likelihood of the centre symbols given their contexts."""
    total = 0.0
    for row in counts.counts:
        p = conditional_mle(row)
        nz = row > 0
        total += float(np.sum(row[nz] * np.log(p[nz])))
    return total / math.log(counts.alphabet_size)


def pml_score(matrix: GenotypeMatrix, site: int, l: int, r: int,
              params: NeighborhoodParams) -> float:
    """Penalized log conditional likelihood of ``(l, r)`` at ``site``."""
    a = params.alphabet_for(matrix)
    ll = log_conditional_likelihood(count_contexts(matrix, site, l, r))
    return ll - penalty(l, r, a, matrix.n_individuals, params.penalty_c)


def grid(max_left: int, max_right: int) -> list[tuple[int, int]]:
    """Candidate ``(l, r)`` pairs in tie-break order: smaller ``l + r``, then smaller ``l``."""
    pairs = [(l, r) for l in range(max_left + 1) for r in range(max_right + 1)]
    return sorted(pairs, key=lambda lr: (lr[0] + lr[1], lr[0]))


def better(score: float, best: float) -> bool:
    """True when ``score`` beats ``best`` by more than the tie tolerance."""
    if best == -math.inf:
        return score > -math.inf
    return score > best + TIE_RTOL * max(1.0, abs(best))


class _Scorer:
    """Vectorized log-likelihoods for a contiguous block of sites."""

    def __init__(self, matrix: GenotypeMatrix, params: NeighborhoodParams):
        self.matrix = matrix
        self.params = params
        self.a = params.alphabet_for(matrix)
        self.n = matrix.n_individuals
        self.first, self.last = matrix.chromosome_bounds()
        counts = np.arange(self.n + 1, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.xlogx = np.where(counts > 0, counts * np.log(counts), 0.0)
        self.log_a = math.log(self.a)
        wmax = params.max_left + params.max_right + 1
        if wmax * math.log2(self.a) >= 62:
            raise ValueError("max_left + max_right too large to pack window codes")

    def block_size(self) -> int:
        p = self.params
        bins = self.a ** (p.max_left + p.max_right + 1)
        by_bins = BIN_BUDGET // bins if bins <= p.dense_limit else CHUNK_SITES
        by_keys = KEY_BUDGET // (8 * max(self.n, 1))
        return int(max(1, min(CHUNK_SITES, by_bins, by_keys)))

    def _rows(self, sites: np.ndarray, offset: int) -> np.ndarray:
        idx = np.clip(sites + offset, 0, self.matrix.n_sites - 1)
        return self.matrix.cells[idx]

    def _ll_dense(self, sites, keys, missing, l, r):
        a, b = self.a, sites.size
        size = a ** (l + r + 1)
        flat = keys + (np.arange(b, dtype=keys.dtype) * size)[:, None]
        flat = np.where(missing, b * size, flat)
        counts = np.bincount(flat.ravel(), minlength=b * size + 1)[:b * size]
        counts = counts.reshape(b, a ** l, a, a ** r)
        ctx = counts.sum(axis=2)
        ll = (self.xlogx[counts].reshape(b, -1).sum(axis=1)
              - self.xlogx[ctx].reshape(b, -1).sum(axis=1))
        eff = ctx.reshape(b, -1).sum(axis=1)
        return ll / self.log_a, eff

    def _ll_sparse(self, sites, keys, missing, l, r):
        a = self.a
        right = a ** r
        ll = np.empty(sites.size)
        eff = np.empty(sites.size, dtype=np.int64)
        for k in range(sites.size):
            kk = keys[k][~missing[k]].astype(np.int64)
            _, n_wav = np.unique(kk, return_counts=True)
            ctx = (kk // (right * a)) * right + kk % right
            _, n_wv = np.unique(ctx, return_counts=True)
            ll[k] = (self.xlogx[n_wav].sum() - self.xlogx[n_wv].sum()) / self.log_a
            eff[k] = kk.size
        return ll, eff

    def best(self, lo: int, hi: int):
        """Argmax over the grid for sites ``lo..hi-1``."""
        p = self.params
        sites = np.arange(lo, hi)
        b = sites.size
        best_score = np.full(b, -math.inf)
        best_l = np.zeros(b, dtype=np.int64)
        best_r = np.zeros(b, dtype=np.int64)
        best_eff = np.zeros(b, dtype=np.int64)
        room_left = sites - self.first[sites]
        room_right = self.last[sites] - sites
        wide = self.a ** (p.max_left + p.max_right + 1) >= 2 ** 31
        dtype = np.int64 if wide else np.int32
        scores = {}
        for l in range(p.max_left + 1):
            keys = np.zeros((b, self.n), dtype=dtype)
            missing = np.zeros((b, self.n), dtype=bool)
            for k in range(-l, 1):
                x = self._rows(sites, k)
                missing |= x == MISSING
                keys = keys * self.a + np.where(x == MISSING, 0, x).astype(dtype)
            for r in range(p.max_right + 1):
                if r > 0:
                    x = self._rows(sites, r)
                    missing |= x == MISSING
                    keys = keys * self.a + np.where(x == MISSING, 0, x).astype(dtype)
                valid = (room_left >= l) & (room_right >= r)
                if not valid.any():
                    continue
                if self.a ** (l + r + 1) <= p.dense_limit:
                    ll, eff = self._ll_dense(sites, keys, missing, l, r)
                else:
                    ll, eff = self._ll_sparse(sites, keys, missing, l, r)
                score = ll - penalty(l, r, self.a, self.n, p.penalty_c)
                scores[(l, r)] = (np.where(valid, score, -math.inf), eff)
        for l, r in grid(p.max_left, p.max_right):
            if (l, r) not in scores:
                continue
            score, eff = scores[(l, r)]
            unset = np.isinf(best_score)
            finite = np.where(unset, 0.0, best_score)
            floor = finite + TIE_RTOL * np.maximum(1.0, np.abs(finite))
            win = np.where(unset, score > -math.inf, score > floor)
            best_score = np.where(win, score, best_score)
            best_l = np.where(win, l, best_l)
            best_r = np.where(win, r, best_r)
            best_eff = np.where(win, eff, best_eff)
        return best_l, best_r, best_score, best_eff

    def neighborhoods(self, lo: int, hi: int) -> list[SiteNeighborhood]:
        out = []
        step = self.block_size()
        for s in range(lo, hi, step):
            e = min(hi, s + step)
            bl, br, bs, be = self.best(s, e)
            out.extend(SiteNeighborhood(int(i), int(li), int(ri), float(si), int(ei))
                       for i, li, ri, si, ei in zip(range(s, e), bl, br, bs, be))
        return out


def estimate_neighborhood(matrix: GenotypeMatrix, site: int,
                          params: NeighborhoodParams) -> SiteNeighborhood:
    """Empirical basic neighborhood of one site.

    Arms are capped by ``params`` and by the room left in the chromosome;
    ties go to the smaller ``l + r`` and then the smaller ``l``.
    """
    if not 0 <= site < matrix.n_sites:
        raise IndexError(f"site {site} out of range")
    return _Scorer(matrix, params).neighborhoods(site, site + 1)[0]


_WORKER: dict = {}


def _worker_init(matrix, params):
    _WORKER["scorer"] = _Scorer(matrix, params)


def _worker_run(span):
    return _WORKER["scorer"].neighborhoods(*span)


def estimate_all(matrix: GenotypeMatrix, params: NeighborhoodParams,
                 workers: int = 1) -> list[SiteNeighborhood]:
    """One :class:`SiteNeighborhood` per site, in site order.

    Sites are processed in fixed spans, so the output does not depend on
    ``workers``.
    """
    scorer = _Scorer(matrix, params)
    step = scorer.block_size()
    spans = [(s, min(matrix.n_sites, s + step)) for s in range(0, matrix.n_sites, step)]
    if workers <= 1 or len(spans) <= 1:
        return [nb for span in spans for nb in scorer.neighborhoods(*span)]
    with ProcessPoolExecutor(workers, mp_context=mp.get_context("fork"),
                             initializer=_worker_init, initargs=(matrix, params)) as pool:
        parts = pool.map(_worker_run, spans)
        return [nb for part in parts for nb in part]


def score_grid(matrix: GenotypeMatrix, site: int,
               params: NeighborhoodParams) -> dict[tuple[int, int], float]:
    """Every admissible candidate's score at ``site`` through :func:`pml_score`."""
    first, last = matrix.chromosome_bounds()
    out = {}
    for l, r in grid(params.max_left, params.max_right):
        if site - l >= first[site] and site + r <= last[site]:
            out[(l, r)] = pml_score(matrix, site, l, r, params)
    return out


def neighborhood_summary(neighborhoods: Sequence[SiteNeighborhood]) -> dict:
    left = np.array([nb.l_hat for nb in neighborhoods], dtype=float)
    right = np.array([nb.r_hat for nb in neighborhoods], dtype=float)
    if left.size == 0:
        raise ValueError("no neighborhoods")
    size = left + right
    return {"n_sites": int(size.size), "mean_size": float(size.mean()),
            "std_size": float(size.std()), "mean_left": float(left.mean()),
            "mean_right": float(right.mean())}


NEIGHBORHOOD_COLUMNS = ("site_index", "snp_id", "chromosome", "l_hat", "r_hat", "pml_score",
                        "effective_n")


def write_neighborhoods_tsv(neighborhoods: Sequence[SiteNeighborhood], matrix: GenotypeMatrix,
                            stream: TextIO) -> None:
    stream.write("\t".join(NEIGHBORHOOD_COLUMNS) + "\n")
    for nb in neighborhoods:
        stream.write(f"{nb.site}\t{matrix.snp_ids[nb.site]}\t{matrix.chromosomes[nb.site]}\t"
                     f"{nb.l_hat}\t{nb.r_hat}\t{nb.pml_score:.12g}\t{nb.effective_n_at_opt}\n")


def read_neighborhoods_tsv(stream: TextIO) -> tuple[list[SiteNeighborhood], list[str], list[int]]:
    """Neighborhoods plus the snp_id and chromosome columns."""
    out, ids, chroms = [], [], []
    for line in stream:
        if not line.strip() or line.startswith("#") or line.startswith("site_index"):
            continue
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) != len(NEIGHBORHOOD_COLUMNS):
            raise ValueError(f"malformed neighborhood line: {line!r}")
        out.append(SiteNeighborhood(int(parts[0]), int(parts[3]), int(parts[4]),
                                    float(parts[5]), int(parts[6])))
        ids.append(parts[1])
        chroms.append(int(parts[2]))
    if [nb.site for nb in out] != list(range(len(out))):
        raise ValueError("neighborhood site_index values must be 0..m-1 in order")
    return out, ids, chroms
