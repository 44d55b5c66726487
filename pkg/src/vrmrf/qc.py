"""Minor allele frequency and Hardy-Weinberg filters on 0/1/2 score columns."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .association import chi_square_sf
from .ingest import MISSING, GenotypeMatrix, Phenotype


class QcError(ValueError):
    pass


@dataclass(frozen=True)
class SiteQc:
    snp_id: str
    maf: float
    hwe_chi2: float
    hwe_p: float
    removed_maf: bool
    removed_hwe: bool

    @property
    def removed(self) -> bool:
        return self.removed_maf or self.removed_hwe

    @property
    def status(self) -> str:
        return "removed" if self.removed else "kept"

    @property
    def reason(self) -> str:
        reasons = [name for name, hit in (("MAF", self.removed_maf), ("HWE", self.removed_hwe))
                   if hit]
        return ";".join(reasons) if reasons else "-"


@dataclass(frozen=True)
class QcReport:
    sites: list[SiteQc]
    maf_min: float
    hwe_alpha: float

    @property
    def kept(self) -> np.ndarray:
        return np.array([not s.removed for s in self.sites], dtype=bool)

    @property
    def n_removed(self) -> int:
        return sum(s.removed for s in self.sites)

    def write_tsv(self, stream: TextIO) -> None:
        stream.write("snp_id\tmaf\thwe_chi2\thwe_p\tstatus\treason\n")
        for s in self.sites:
            stream.write(f"{s.snp_id}\t{s.maf:.10g}\t{s.hwe_chi2:.10g}\t{s.hwe_p:.10g}\t"
                         f"{s.status}\t{s.reason}\n")


def genotype_counts(column) -> tuple[int, int, int]:
    column = np.asarray(column)
    observed = column[column != MISSING]
    if observed.size == 0:
        raise QcError("all cells missing")
    if observed.max() > 2:
        raise QcError("QC requires 0/1/2 score coding")
    n0, n1, n2 = np.bincount(observed, minlength=3)[:3]
    return int(n0), int(n1), int(n2)


def minor_allele_frequency(column) -> float:
    """``(2*n2 + n1) / (2*n)`` over non-missing cells."""
    n0, n1, n2 = genotype_counts(column)
    return (2 * n2 + n1) / (2 * (n0 + n1 + n2))


def hwe_chi_square(column) -> tuple[float, float]:
    """Pearson 3-class Hardy-Weinberg chi-square with 1 degree of freedom.

    Returns ``(chi2, p)``. No continuity correction.
    """
    obs = genotype_counts(column)
    return hwe_from_counts(*obs)


def hwe_from_counts(n0: int, n1: int, n2: int) -> tuple[float, float]:
    n = n0 + n1 + n2
    if n == 0:
        raise QcError("all cells missing")
    p = (2 * n0 + n1) / (2 * n)
    q = 1.0 - p
    expected = (n * p * p, 2 * n * p * q, n * q * q)
    chi2 = 0.0
    for o, e in zip((n0, n1, n2), expected):
        if e > 0:
            chi2 += (o - e) ** 2 / e
    return chi2, chi_square_sf(chi2, 1)


def normalize_orientation(matrix: GenotypeMatrix) -> GenotypeMatrix:
    """Swap 0 and 2 on sites where the score-2 homozygote is the more common one."""
    cells = matrix.cells
    n0 = (cells == 0).sum(axis=1)
    n2 = (cells == 2).sum(axis=1)
    flip = n2 > n0
    if not flip.any():
        return matrix
    fixed = cells.copy()
    rows = fixed[flip]
    swapped = rows.copy()
    swapped[rows == 0] = 2
    swapped[rows == 2] = 0
    fixed[flip] = swapped
    return matrix.with_cells(fixed)


def apply_qc(matrix: GenotypeMatrix, maf_min: float = 0.01, hwe_alpha: float = 1e-4,
             phenotype: Phenotype | None = None, hwe_controls_only: bool = False
             ) -> tuple[GenotypeMatrix, QcReport]:
    """Drop sites with MAF below ``maf_min`` or HWE p-value below ``hwe_alpha``.

    With ``hwe_controls_only`` the HWE test uses control individuals only;
    MAF is always computed on everyone.
    """
    if matrix.alphabet_size != 3:
        raise QcError("QC requires alphabet_size 3 (0/1/2 scores)")
    if not 0.0 <= maf_min <= 0.5:
        raise QcError("maf_min must be in [0, 0.5]")
    if not 0.0 <= hwe_alpha <= 1.0:
        raise QcError("hwe_alpha must be in [0, 1]")
    matrix = normalize_orientation(matrix)
    hwe_cols = slice(None)
    if hwe_controls_only:
        if phenotype is None:
            raise QcError("hwe_controls_only requires a phenotype")
        hwe_cols = np.flatnonzero(phenotype.labels == 0)
    sites = []
    for i in range(matrix.n_sites):
        col = matrix.cells[i]
        maf = minor_allele_frequency(col)
        chi2, p = hwe_chi_square(col[hwe_cols])
        sites.append(SiteQc(matrix.snp_ids[i], maf, chi2, p, maf < maf_min, p < hwe_alpha))
    report = QcReport(sites, maf_min, hwe_alpha)
    keep = np.flatnonzero(report.kept)
    if keep.size == matrix.n_sites:
        return matrix, report
    return matrix.subset_sites(keep), report
