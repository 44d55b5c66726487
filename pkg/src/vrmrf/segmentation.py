"""Cut the site sequence into influence windows crossed by no neighborhood arm."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np


@dataclass(frozen=True)
class InfluenceWindow:
    window_id: int
    chromosome: int
    start_site: int
    end_site: int

    @property
    def n_sites(self) -> int:
        return self.end_site - self.start_site + 1


def arms(neighborhoods) -> tuple[np.ndarray, np.ndarray]:
    """Left and right arm arrays from SiteNeighborhood objects or ``(l, r)`` pairs."""
    neighborhoods = list(neighborhoods)
    if neighborhoods and hasattr(neighborhoods[0], "l_hat"):
        left = [nb.l_hat for nb in neighborhoods]
        right = [nb.r_hat for nb in neighborhoods]
    else:
        left = [int(lr[0]) for lr in neighborhoods]
        right = [int(lr[1]) for lr in neighborhoods]
    return np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64)


def _spans(chromosomes) -> list[tuple[int, int, int]]:
    if hasattr(chromosomes, "chromosome_spans"):
        return chromosomes.chromosome_spans()
    chrom = np.asarray(chromosomes)
    if chrom.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(chrom)) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [chrom.size]])
    return [(int(chrom[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def find_cut_points(neighborhoods, chromosomes) -> list[int]:
    """Sites ``k`` such that the gap between ``k`` and ``k + 1`` is a cut.

    A gap inside a chromosome is a cut when no site on its left reaches past
    it with its right arm and no site on its right reaches back over it with
    its left arm. The gap at each chromosome boundary is always a cut.
    ``chromosomes`` is the per-site chromosome vector or a GenotypeMatrix.
    """
    left, right = arms(neighborhoods)
    spans = _spans(chromosomes)
    if spans and spans[-1][2] != left.size:
        raise ValueError("one neighborhood per site is required")
    cuts: list[int] = []
    for _, s, e in spans:
        idx = np.arange(s, e)
        reach_right = np.maximum.accumulate(idx + right[s:e])
        reach_left = np.minimum.accumulate((idx - left[s:e])[::-1])[::-1]
        # gap after site k (k in s..e-2) uses prefix up to k and suffix from k+1
        k = idx[:-1]
        ok = (reach_right[:-1] <= k) & (reach_left[1:] >= k + 1)
        cuts.extend(int(c) for c in k[ok])
        if e < left.size:
            cuts.append(e - 1)
    return cuts


def influence_windows(neighborhoods, chromosomes) -> list[InfluenceWindow]:
    """Windows between consecutive cut points, numbered in genome order."""
    left, _ = arms(neighborhoods)
    m = left.size
    if m == 0:
        return []
    chrom = (np.asarray(chromosomes.chromosomes) if hasattr(chromosomes, "chromosomes")
             else np.asarray(chromosomes))
    cuts = find_cut_points(neighborhoods, chrom)
    starts = [0] + [c + 1 for c in cuts]
    ends = cuts + [m - 1]
    return [InfluenceWindow(i, int(chrom[s]), s, e)
            for i, (s, e) in enumerate(zip(starts, ends))]


def window_summary(windows: Sequence[InfluenceWindow]) -> dict:
    """Count, mean, min, max and population standard deviation of window sizes."""
    sizes = np.array([w.n_sites for w in windows], dtype=float)
    if sizes.size == 0:
        raise ValueError("no windows")
    return {"count": int(sizes.size), "mean": float(sizes.mean()), "min": int(sizes.min()),
            "max": int(sizes.max()), "std": float(sizes.std())}


def write_windows_tsv(windows: Sequence[InfluenceWindow], snp_ids: Sequence[str],
                      positions: Sequence[int], stream: TextIO) -> None:
    stream.write("window_id\tchromosome\tstart_snp_id\tend_snp_id\tstart_bp\tend_bp\tn_sites\n")
    for w in windows:
        stream.write(f"{w.window_id}\t{w.chromosome}\t{snp_ids[w.start_site]}\t"
                     f"{snp_ids[w.end_site]}\t{positions[w.start_site]}\t"
                     f"{positions[w.end_site]}\t{w.n_sites}\n")


def read_windows_tsv(stream: TextIO, site_of) -> list[InfluenceWindow]:
    """Parse a windows TSV; ``site_of`` maps a snp_id to its site index."""
    windows = []
    for line in stream:
        if not line.strip() or line.startswith("#") or line.startswith("window_id"):
            continue
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) != 7:
            raise ValueError(f"malformed windows line: {line!r}")
        wid, chrom, start_snp, end_snp = int(parts[0]), int(parts[1]), parts[2], parts[3]
        w = InfluenceWindow(wid, chrom, site_of(start_snp), site_of(end_snp))
        if w.n_sites != int(parts[6]):
            raise ValueError(f"window {wid}: n_sites does not match its snp span")
        windows.append(w)
    return windows
