import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vrmrf.segmentation import (
    InfluenceWindow,
    find_cut_points,
    influence_windows,
    read_windows_tsv,
    window_summary,
    write_windows_tsv,
)


def brute_force_cuts(arms, chromosomes):
    """Gap after k is a cut iff no arrow of any same-chromosome site spans it."""
    m = len(arms)
    cuts = []
    for k in range(m - 1):
        if chromosomes[k] != chromosomes[k + 1]:
            cuts.append(k)
            continue
        crossed = False
        for i, (l, r) in enumerate(arms):
            if chromosomes[i] != chromosomes[k]:
                continue
            if i <= k < i + r or i - l <= k < i:
                crossed = True
                break
        if not crossed:
            cuts.append(k)
    return cuts


def test_worked_example():
    arms = [(0, 1), (1, 0), (0, 0), (0, 1), (1, 0)]
    chrom = [1] * 5
    assert find_cut_points(arms, chrom) == [1, 2]
    windows = influence_windows(arms, chrom)
    assert [(w.start_site, w.end_site) for w in windows] == [(0, 1), (2, 2), (3, 4)]
    s = window_summary(windows)
    assert s["count"] == 3 and s["mean"] == pytest.approx(5 / 3)
    assert (s["min"], s["max"]) == (1, 2)


def test_no_arrows_gives_singletons():
    windows = influence_windows([(0, 0)] * 6, [1] * 6)
    assert [w.n_sites for w in windows] == [1] * 6


def test_all_crossed_gives_one_window():
    arms = [(0, 1)] + [(1, 1)] * 4 + [(1, 0)]
    assert find_cut_points(arms, [1] * 6) == []
    assert len(influence_windows(arms, [1] * 6)) == 1


def test_single_site():
    windows = influence_windows([(0, 0)], [3])
    assert windows == [InfluenceWindow(0, 3, 0, 0)]


def test_chromosome_boundary_always_cut():
    arms = [(0, 1), (1, 1), (1, 1), (1, 0)]
    windows = influence_windows(arms, [1, 1, 2, 2])
    assert [(w.chromosome, w.start_site, w.end_site) for w in windows] == [(1, 0, 1), (2, 2, 3)]


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=40),
       st.lists(st.integers(0, 39), max_size=3))
def test_linear_scan_matches_brute_force(arms, breaks):
    m = len(arms)
    chrom = np.ones(m, dtype=int)
    for b in sorted(set(breaks)):
        if 0 < b < m:
            chrom[b:] += 1
    assert find_cut_points(arms, chrom) == brute_force_cuts(arms, chrom)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=50))
def test_exact_cover_and_no_crossing(arms):
    m = len(arms)
    windows = influence_windows(arms, [1] * m)
    assert sum(w.n_sites for w in windows) == m
    assert windows[0].start_site == 0 and windows[-1].end_site == m - 1
    for a, b in zip(windows, windows[1:]):
        assert b.start_site == a.end_site + 1
    for w in windows:
        for i in range(w.start_site, w.end_site + 1):
            l, r = arms[i]
            assert i - l >= w.start_site or i - l < 0
            assert i + r <= w.end_site or i + r >= m


def test_windows_tsv_round_trip():
    arms = [(0, 1), (1, 0), (0, 0), (0, 1), (1, 0)]
    windows = influence_windows(arms, [1] * 5)
    ids = [f"rs{i}" for i in range(5)]
    buf = io.StringIO()
    write_windows_tsv(windows, ids, [10, 20, 30, 40, 50], buf)
    buf.seek(0)
    assert read_windows_tsv(buf, ids.index) == windows
