"""Window-level chi-square tests of independence against a binary phenotype."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .ingest import MISSING, GenotypeMatrix, Phenotype
from .segmentation import InfluenceWindow

SCORE_CAP = 300.0
P_FLOOR = 10.0 ** -SCORE_CAP

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_continued_fraction(a: float, x: float) -> float:
    # modified Lentz
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma function ``Q(a, x)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_p_series(a, x))
    return _gamma_q_continued_fraction(a, x)


def chi_square_sf(x: float, df: int) -> float:
    """Upper tail probability of a chi-square variable with ``df`` degrees of freedom."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if x < 0:
        raise ValueError("x must be non-negative")
    return regularized_gamma_q(df / 2.0, x / 2.0)


def neglog10(p: float) -> float:
    if p < P_FLOOR:
        return SCORE_CAP
    return -math.log10(p)


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    """Counts of each observed genotype configuration by phenotype class.

    ``configurations`` has one row per distinct configuration (one column per
    window site); ``counts[:, 0]`` are controls and ``counts[:, 1]`` cases.
    """

    configurations: np.ndarray
    counts: np.ndarray
    n_used: int

    @property
    def n_rows(self) -> int:
        return self.counts.shape[0]

    def expected(self) -> np.ndarray:
        total = self.counts.sum()
        return np.outer(self.counts.sum(axis=1), self.counts.sum(axis=0)) / total


@dataclass(frozen=True)
class AssociationResult:
    window_id: int
    chi2: float
    df: int
    p_value: float
    score: float
    n_used: int
    min_expected: float
    degenerate: bool = False


class DegenerateWindow(ValueError):
    pass


def _window_codes(block: np.ndarray, phenotype: np.ndarray):
    usable = ~(block == MISSING).any(axis=0)
    block = block[:, usable].astype(np.int64)
    labels = phenotype[usable]
    return block, labels, int(usable.sum())


def window_contingency(matrix: GenotypeMatrix, window: InfluenceWindow,
                       phenotype: Phenotype) -> ContingencyTable:
    """Tabulate configurations in ``window`` against phenotype classes.

    Individuals with any missing call inside the window are left out.
    """
    if len(phenotype) != matrix.n_individuals:
        raise ValueError("phenotype length does not match the matrix")
    block, labels, n_used = _window_codes(matrix.cells[window.start_site:window.end_site + 1],
                                          phenotype.labels)
    if n_used == 0:
        raise DegenerateWindow(f"window {window.window_id}: no individual with complete data")
    if labels.min() == labels.max():
        raise DegenerateWindow(f"window {window.window_id}: only one phenotype class present")
    configs, inverse = np.unique(block.T, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    counts = np.zeros((configs.shape[0], 2), dtype=np.int64)
    np.add.at(counts, (inverse, labels), 1)
    return ContingencyTable(configs, counts, n_used)


def chi_square_independence(table) -> tuple[float, int, float]:
    """Pearson chi-square test of independence on an ``r x c`` table.

    Accepts a :class:`ContingencyTable` or a plain 2-d array of counts.
    Degenerate tables (fewer than two rows or columns with positive margin)
    give ``(0.0, 0, 1.0)``.
    """
    counts = table.counts if isinstance(table, ContingencyTable) else np.asarray(table)
    counts = np.asarray(counts, dtype=float)
    counts = counts[counts.sum(axis=1) > 0]
    counts = counts[:, counts.sum(axis=0) > 0] if counts.size else counts
    if counts.ndim != 2 or counts.shape[0] < 2 or counts.shape[1] < 2:
        return 0.0, 0, 1.0
    total = counts.sum()
    expected = np.outer(counts.sum(axis=1), counts.sum(axis=0)) / total
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    df = (counts.shape[0] - 1) * (counts.shape[1] - 1)
    return chi2, df, chi_square_sf(chi2, df)


def window_association(matrix: GenotypeMatrix, window: InfluenceWindow,
                       phenotype: Phenotype) -> AssociationResult:
    try:
        table = window_contingency(matrix, window, phenotype)
    except DegenerateWindow:
        _, _, n_used = _window_codes(matrix.cells[window.start_site:window.end_site + 1],
                                         phenotype.labels)
        return AssociationResult(window.window_id, 0.0, 0, 1.0, 0.0, n_used, math.nan, True)
    chi2, df, p = chi_square_independence(table)
    degenerate = df == 0
    min_exp = float(table.expected().min()) if not degenerate else math.nan
    return AssociationResult(window.window_id, chi2, df, p, neglog10(p), table.n_used,
                             min_exp, degenerate)


_POOL_STATE: dict = {}


def _pool_init(matrix, phenotype):
    _POOL_STATE["matrix"] = matrix
    _POOL_STATE["phenotype"] = phenotype


def _pool_task(windows):
    m, ph = _POOL_STATE["matrix"], _POOL_STATE["phenotype"]
    return [window_association(m, w, ph) for w in windows]


def associate_all(matrix: GenotypeMatrix, windows: Sequence[InfluenceWindow],
                  phenotype: Phenotype, report_threshold: float = 1e-4, workers: int = 1
                  ) -> tuple[list[AssociationResult], list[AssociationResult]]:
    """Test every window; return all results and the ``p < report_threshold`` list.

    The significant list excludes degenerate windows and is sorted by p-value
    (ties by window id).
    """
    if len(phenotype) != matrix.n_individuals:
        raise ValueError("phenotype length does not match the matrix")
    windows = list(windows)
    if workers > 1 and len(windows) > 1:
        import multiprocessing as mp
        chunks = [windows[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers, mp_context=mp.get_context("fork"),
                                 initializer=_pool_init,
                                 initargs=(matrix, phenotype)) as pool:
            parts = list(pool.map(_pool_task, chunks))
        by_id = {r.window_id: r for part in parts for r in part}
        results = [by_id[w.window_id] for w in windows]
    else:
        results = [window_association(matrix, w, phenotype) for w in windows]
    significant = sorted((r for r in results if not r.degenerate and r.p_value < report_threshold),
                         key=lambda r: (r.p_value, -r.chi2, r.window_id))
    return results, significant


def write_association_tsv(results: Sequence[AssociationResult],
                          windows: Sequence[InfluenceWindow], matrix: GenotypeMatrix,
                          stream: TextIO) -> None:
    by_id = {w.window_id: w for w in windows}
    stream.write("window_id\tchromosome\tstart_bp\tend_bp\tn_sites\tn_used\tchi2\tdf\t"
                 "p_value\tneglog10_p\tmin_expected_count\n")
    for r in results:
        w = by_id[r.window_id]
        stream.write(f"{r.window_id}\t{w.chromosome}\t{matrix.positions[w.start_site]}\t"
                     f"{matrix.positions[w.end_site]}\t{w.n_sites}\t{r.n_used}\t{r.chi2:.10g}\t"
                     f"{r.df}\t{r.p_value:.10g}\t{r.score:.6f}\t{r.min_expected:.6g}\n")


def write_plot_data(results: Sequence[AssociationResult], windows: Sequence[InfluenceWindow],
                    matrix: GenotypeMatrix, stream: TextIO) -> None:
    by_id = {w.window_id: w for w in windows}
    stream.write("chromosome\tmidpoint_bp\tneglog10_p\n")
    for r in results:
        w = by_id[r.window_id]
        mid = (int(matrix.positions[w.start_site]) + int(matrix.positions[w.end_site])) // 2
        stream.write(f"{w.chromosome}\t{mid}\t{r.score:.6f}\n")
