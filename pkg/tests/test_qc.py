import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vrmrf.ingest import MISSING, GenotypeMatrix, Phenotype
from vrmrf.qc import QcError, apply_qc, hwe_chi_square, minor_allele_frequency


def column(n0, n1, n2, n_missing=0):
    return np.array([0] * n0 + [1] * n1 + [2] * n2 + [MISSING] * n_missing, dtype=np.uint8)


def test_maf_worked_examples():
    assert minor_allele_frequency(column(90, 9, 1)) == pytest.approx(0.055, abs=1e-12)
    assert minor_allele_frequency(column(10, 0, 0)) == 0.0
    assert minor_allele_frequency(column(99, 1, 0)) == pytest.approx(0.005, abs=1e-12)


def test_maf_ignores_missing():
    assert minor_allele_frequency(column(90, 9, 1, n_missing=50)) == pytest.approx(0.055)


def test_all_missing_raises():
    with pytest.raises(QcError):
        minor_allele_frequency(column(0, 0, 0, 5))
    with pytest.raises(QcError):
        hwe_chi_square(column(0, 0, 0, 5))


@pytest.mark.parametrize("counts, chi2", [((81, 18, 1), 0.0), ((25, 50, 25), 0.0),
                                          ((50, 0, 50), 100.0)])
def test_hwe_worked_examples(counts, chi2):
    stat, p = hwe_chi_square(column(*counts))
    assert stat == pytest.approx(chi2, abs=1e-12)
    if chi2 == 0:
        assert p == pytest.approx(1.0, abs=1e-12)


def test_monomorphic_hwe_is_zero():
    assert hwe_chi_square(column(20, 0, 0)) == (0.0, 1.0)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 60), st.integers(0, 60), st.integers(0, 60))
def test_hwe_nonnegative_and_maf_bounded(n0, n1, n2):
    if n0 + n1 + n2 == 0:
        return
    if n2 > n0:
        n0, n2 = n2, n0
    chi2, p = hwe_chi_square(column(n0, n1, n2))
    assert chi2 >= 0 and 0 < p <= 1
    assert 0.0 <= minor_allele_frequency(column(n0, n1, n2)) <= 0.5


def _matrix(cols):
    return GenotypeMatrix.from_array(np.vstack(cols))


def test_monomorphic_site_removed_for_maf():
    rng = np.random.default_rng(1)
    ok = [rng.permutation(column(64, 32, 4)) for _ in range(2)]
    m = _matrix([ok[0], column(100, 0, 0), ok[1]])
    out, report = apply_qc(m)
    assert out.n_sites == 2
    assert [s.reason for s in report.sites] == ["-", "MAF", "-"]
    assert out.snp_ids == ("s0", "s2")


def test_hwe_threshold():
    # (40, 20, 40): p_hat = 0.5, chi2 = 36, p ~ 2e-9
    m = _matrix([column(40, 20, 40)])
    _, report = apply_qc(m)
    assert report.sites[0].removed_hwe and report.sites[0].reason == "HWE"


def test_hwe_p_5e5_removed():
    # counts found by search: chi2 = 16.448, p = 4.99992e-5
    chi2, p = hwe_chi_square(column(81, 30, 16))
    assert p == pytest.approx(5e-5, rel=1e-4)
    _, report = apply_qc(_matrix([column(81, 30, 16)]))
    assert report.sites[0].removed_hwe and not report.sites[0].removed_maf


def test_all_passing_returns_input():
    rng = np.random.default_rng(2)
    m = _matrix([rng.permutation(column(49, 42, 9)) for _ in range(3)])
    out, report = apply_qc(m)
    assert out == m and report.n_removed == 0


def test_inverted_encoding_is_swapped():
    m = _matrix([column(9, 42, 49)])
    out, report = apply_qc(m)
    assert (out.cells[0] == 0).sum() == 49
    assert report.sites[0].maf == pytest.approx(0.3)


def test_maf_min_zero_keeps_monomorphic():
    out, report = apply_qc(_matrix([column(100, 0, 0)]), maf_min=0.0)
    assert out.n_sites == 1


def test_controls_only_hwe():
    cases = column(0, 50, 0)
    controls = column(25, 50, 25)
    m = _matrix([np.concatenate([cases, controls])])
    ph = Phenotype(np.array([1] * 50 + [0] * 100))
    _, pooled = apply_qc(m)
    _, ctrl = apply_qc(m, phenotype=ph, hwe_controls_only=True)
    assert pooled.sites[0].hwe_chi2 > 0
    assert ctrl.sites[0].hwe_chi2 == pytest.approx(0.0)


def test_idempotent():
    rng = np.random.default_rng(5)
    cols = []
    for _ in range(50):
        p = rng.uniform(0.0, 0.6)
        col = rng.choice(3, size=200, p=[(1 - p) ** 2, 2 * p * (1 - p), p * p]).astype(np.uint8)
        cols.append(col)
    once, _ = apply_qc(_matrix(cols))
    twice, _ = apply_qc(once)
    assert once == twice
