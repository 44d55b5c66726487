"""Genotype matrix parsing, genotype score encoding and phenotype alignment.

File formats
------------
matrix      one line per site, one character per individual: ``'0'..'9'``
            up to ``alphabet_size - 1``, ``'.'`` for a missing call.
meta        TSV ``snp_id<TAB>chromosome<TAB>position_bp``, same line order
            as the matrix file.
individuals one individual id per line; defines the column order.
phenotype   TSV ``individual_id<TAB>label`` with label 0 (control) or 1 (case).
raw         TSV ``snp_id<TAB>g1<TAB>g2...`` with genotypes such as ``A_G``
            or ``NA``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

MISSING = 255
MISSING_CHAR = "."
MISSING_RAW = frozenset({"NA", ".", "0_0", "-_-"})
MAX_ALPHABET = 10
N_AUTOSOMES = 22


class ParseError(ValueError):
    """Raised for malformed or inconsistent input files."""


@dataclass(frozen=True)
class SiteMeta:
    site_index: int
    snp_id: str
    chromosome: int
    position_bp: int


@dataclass(frozen=True, eq=False)
class GenotypeMatrix:
    """Immutable sample of ``n_individuals`` sequences over ``n_sites``.

    ``cells`` is stored site-major, shape ``(n_sites, n_individuals)``, dtype
    uint8, with :data:`MISSING` marking missing calls.
    """

    cells: np.ndarray
    snp_ids: tuple[str, ...]
    chromosomes: np.ndarray
    positions: np.ndarray
    alphabet_size: int = 3
    individual_ids: tuple[str, ...] | None = None
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        if cells.ndim != 2:
            raise ParseError("cells must be a 2-d array (sites x individuals)")
        if not 2 <= self.alphabet_size <= MAX_ALPHABET:
            raise ParseError(f"alphabet_size must be in [2, {MAX_ALPHABET}]")
        observed = cells[cells != MISSING]
        if observed.size and int(observed.max()) >= self.alphabet_size:
            raise ParseError("cell value outside the alphabet")
        m = cells.shape[0]
        chrom = np.asarray(self.chromosomes, dtype=np.int64)
        pos = np.asarray(self.positions, dtype=np.int64)
        if len(self.snp_ids) != m or chrom.shape != (m,) or pos.shape != (m,):
            raise ParseError("site metadata length does not match the matrix")
        if self.individual_ids is not None and len(self.individual_ids) != cells.shape[1]:
            raise ParseError("individual id count does not match the matrix width")
        _validate_order(self.snp_ids, chrom, pos)
        cells.setflags(write=False)
        chrom.setflags(write=False)
        pos.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "chromosomes", chrom)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "snp_ids", tuple(self.snp_ids))
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.snp_ids)})

    @classmethod
    def from_array(cls, cells, alphabet_size: int = 3, chromosomes=None, positions=None,
                   snp_ids=None, individual_ids=None) -> GenotypeMatrix:
        """Build a matrix from a ``(n_sites, n_individuals)`` array.

        Metadata defaults to a single chromosome 1 with positions 1..m.
        """
        cells = np.asarray(cells)
        m = cells.shape[0]
        if chromosomes is None:
            chromosomes = np.ones(m, dtype=np.int64)
        if positions is None:
            positions = np.arange(1, m + 1, dtype=np.int64)
        if snp_ids is None:
            snp_ids = tuple(f"s{i}" for i in range(m))
        return cls(cells, tuple(snp_ids), np.asarray(chromosomes), np.asarray(positions),
                   alphabet_size, None if individual_ids is None else tuple(individual_ids))

    @property
    def n_sites(self) -> int:
        return self.cells.shape[0]

    @property
    def n_individuals(self) -> int:
        return self.cells.shape[1]

    def column(self, site: int) -> np.ndarray:
        """Genotypes of every individual at ``site``."""
        return self.cells[site]

    def site_meta(self, site: int) -> SiteMeta:
        return SiteMeta(site, self.snp_ids[site], int(self.chromosomes[site]),
                        int(self.positions[site]))

    @property
    def meta(self) -> list[SiteMeta]:
        return [self.site_meta(i) for i in range(self.n_sites)]

    def site_of(self, snp_id: str) -> int:
        return self._index[snp_id]

    def chromosome_spans(self) -> list[tuple[int, int, int]]:
        """``(chromosome, first_site, last_site_exclusive)`` in genome order."""
        chrom = self.chromosomes
        if chrom.size == 0:
            return []
        breaks = np.flatnonzero(np.diff(chrom)) + 1
        starts = np.concatenate([[0], breaks])
        ends = np.concatenate([breaks, [chrom.size]])
        return [(int(chrom[s]), int(s), int(e)) for s, e in zip(starts, ends)]

    def chromosome_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-site first and last (inclusive) site index of its chromosome."""
        first = np.empty(self.n_sites, dtype=np.int64)
        last = np.empty(self.n_sites, dtype=np.int64)
        for _, s, e in self.chromosome_spans():
            first[s:e] = s
            last[s:e] = e - 1
        return first, last

    def subset_sites(self, keep: Sequence[int] | np.ndarray) -> GenotypeMatrix:
        keep = np.asarray(keep, dtype=np.int64)
        return GenotypeMatrix(self.cells[keep], tuple(self.snp_ids[i] for i in keep),
                              self.chromosomes[keep], self.positions[keep],
                              self.alphabet_size, self.individual_ids)

    def subset_individuals(self, keep: Sequence[int] | np.ndarray) -> GenotypeMatrix:
        keep = np.asarray(keep, dtype=np.int64)
        ids = None if self.individual_ids is None else tuple(self.individual_ids[i] for i in keep)
        return GenotypeMatrix(self.cells[:, keep], self.snp_ids, self.chromosomes,
                              self.positions, self.alphabet_size, ids)

    def with_cells(self, cells: np.ndarray) -> GenotypeMatrix:
        return GenotypeMatrix(cells, self.snp_ids, self.chromosomes, self.positions,
                              self.alphabet_size, self.individual_ids)

    def __eq__(self, other):
        if not isinstance(other, GenotypeMatrix):
            return NotImplemented
        return (self.alphabet_size == other.alphabet_size
                and self.snp_ids == other.snp_ids
                and self.individual_ids == other.individual_ids
                and np.array_equal(self.chromosomes, other.chromosomes)
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.cells, other.cells))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Phenotype:
    """Binary labels aligned with the matrix columns: 0 control, 1 case."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        if labels.ndim != 1 or not np.isin(labels, (0, 1)).all():
            raise ParseError("phenotype labels must be a 1-d vector of 0/1")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.labels.size


@dataclass(frozen=True)
class AlleleReport:
    major: str | None
    minor: str | None
    genotype_counts: dict[str, int]
    n_missing: int


def _validate_order(snp_ids, chrom: np.ndarray, pos: np.ndarray) -> None:
    if len(set(snp_ids)) != len(snp_ids):
        dup = next(s for s, c in Counter(snp_ids).items() if c > 1)
        raise ParseError(f"duplicate snp_id {dup!r}")
    if chrom.size == 0:
        return
    if chrom.min() < 1 or chrom.max() > N_AUTOSOMES:
        raise ParseError("chromosome outside 1-22")
    if (pos < 0).any():
        raise ParseError("negative position_bp")
    if (np.diff(chrom) < 0).any():
        raise ParseError("unsorted chromosomes")
    same = np.diff(chrom) == 0
    if (np.diff(pos)[same] <= 0).any():
        raise ParseError("unsorted positions within a chromosome")


def _data_lines(stream: TextIO) -> Iterable[tuple[int, str]]:
    for lineno, line in enumerate(stream, 1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        yield lineno, line


def _decode_table(alphabet_size: int) -> np.ndarray:
    table = np.full(256, 254, dtype=np.uint8)
    for k in range(alphabet_size):
        table[ord(str(k))] = k
    table[ord(MISSING_CHAR)] = MISSING
    return table


def parse_meta(meta_stream: TextIO) -> tuple[list[str], list[int], list[int]]:
    ids, chroms, positions = [], [], []
    for lineno, line in _data_lines(meta_stream):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"meta line {lineno}: expected 3 tab-separated columns")
        if parts[0] == "snp_id":
            continue
        try:
            chroms.append(int(parts[1]))
            positions.append(int(parts[2]))
        except ValueError as exc:
            raise ParseError(f"meta line {lineno}: {exc}") from None
        ids.append(parts[0])
    return ids, chroms, positions


def parse_genotype_files(matrix_stream: TextIO, meta_stream: TextIO, alphabet_size: int = 3,
                         individual_ids: Sequence[str] | None = None) -> GenotypeMatrix:
    """Parse a matrix file and its site metadata into a :class:`GenotypeMatrix`."""
    if not 2 <= alphabet_size <= MAX_ALPHABET:
        raise ParseError(f"alphabet_size must be in [2, {MAX_ALPHABET}]")
    table = _decode_table(alphabet_size)
    rows = []
    width = None
    for lineno, line in _data_lines(matrix_stream):
        line = line.strip()
        if width is None:
            width = len(line)
        elif len(line) != width:
            raise ParseError(f"matrix line {lineno}: malformed row length "
                             f"{len(line)} (expected {width})")
        try:
            raw = np.frombuffer(line.encode("ascii"), dtype=np.uint8)
        except UnicodeEncodeError:
            raise ParseError(f"matrix line {lineno}: unknown symbol") from None
        row = table[raw]
        if (row == 254).any():
            bad = line[int(np.flatnonzero(row == 254)[0])]
            raise ParseError(f"matrix line {lineno}: unknown symbol {bad!r}")
        rows.append(row)
    if not rows:
        raise ParseError("no sites")
    ids, chroms, positions = parse_meta(meta_stream)
    if len(ids) != len(rows):
        raise ParseError(f"meta has {len(ids)} sites but the matrix has {len(rows)}")
    return GenotypeMatrix(np.vstack(rows), tuple(ids), np.array(chroms), np.array(positions),
                          alphabet_size,
                          None if individual_ids is None else tuple(individual_ids))


def parse_individuals(stream: TextIO) -> list[str]:
    ids = [line.strip() for _, line in _data_lines(stream)]
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate individual id")
    return ids


def parse_phenotype(stream: TextIO, matrix: GenotypeMatrix) -> Phenotype:
    """Read ``individual_id label`` records and align them with the matrix columns.

    When the matrix carries no individual ids the records are taken in file
    order and must number exactly ``n_individuals``.
    """
    records: dict[str, int] = {}
    order: list[str] = []
    for lineno, line in _data_lines(stream):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"phenotype line {lineno}: expected 'id label'")
        ind, label = parts
        if label not in ("0", "1"):
            raise ParseError(f"phenotype line {lineno}: label {label!r} not in {{0,1}}")
        if ind in records:
            raise ParseError(f"phenotype line {lineno}: duplicate individual {ind!r}")
        records[ind] = int(label)
        order.append(ind)
    if matrix.individual_ids is None:
        if len(order) != matrix.n_individuals:
            raise ParseError(f"phenotype has {len(order)} records for "
                             f"{matrix.n_individuals} individuals")
        return Phenotype(np.array([records[i] for i in order]))
    missing = [i for i in matrix.individual_ids if i not in records]
    if missing:
        raise ParseError(f"missing phenotype for individual {missing[0]!r}")
    return Phenotype(np.array([records[i] for i in matrix.individual_ids]))


def _split_genotype(g: str) -> tuple[str, str]:
    parts = g.split("_")
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise ParseError(f"malformed genotype {g!r}")
    a, b = sorted(parts)
    return a, b


def encode_scores(raw_genotypes: Sequence[str]) -> tuple[np.ndarray, AlleleReport]:
    """Encode one site's ``X_Y`` genotype strings to scores 0/1/2.

    The more frequent homozygote scores 0, heterozygotes 1 and the rarer
    homozygote 2. On a homozygote-count tie the lexicographically smaller
    allele is taken as minor. Missing calls become :data:`MISSING`.
    """
    pairs: list[tuple[str, str] | None] = []
    for g in raw_genotypes:
        g = g.strip()
        pairs.append(None if g in MISSING_RAW else _split_genotype(g))
    alleles = sorted({a for p in pairs if p is not None for a in p})
    if len(alleles) > 2:
        raise ParseError(f"{len(alleles)} distinct alleles at one site: {alleles}")
    counts = Counter("_".join(p) for p in pairs if p is not None)
    n_missing = sum(p is None for p in pairs)
    out = np.full(len(pairs), MISSING, dtype=np.uint8)
    if not alleles:
        return out, AlleleReport(None, None, dict(counts), n_missing)
    if len(alleles) == 1:
        out[[p is not None for p in pairs]] = 0
        return out, AlleleReport(alleles[0], None, dict(counts), n_missing)
    small, large = alleles
    n_small = counts.get(f"{small}_{small}", 0)
    n_large = counts.get(f"{large}_{large}", 0)
    # ties resolve to the smaller allele being minor
    major, minor = (small, large) if n_small > n_large else (large, small)
    for i, p in enumerate(pairs):
        if p is None:
            continue
        if p[0] != p[1]:
            out[i] = 1
        else:
            out[i] = 0 if p[0] == major else 2
    return out, AlleleReport(major, minor, dict(counts), n_missing)


def parse_raw_genotypes(raw_stream: TextIO, meta_stream: TextIO,
                        individual_ids: Sequence[str] | None = None
                        ) -> tuple[GenotypeMatrix, list[AlleleReport]]:
    """Parse raw ``X_Y`` genotype rows, encode each site and attach metadata.

    Metadata rows are matched to raw rows by ``snp_id``; the result follows
    the metadata order.
    """
    columns: dict[str, np.ndarray] = {}
    reports: dict[str, AlleleReport] = {}
    width = None
    for lineno, line in _data_lines(raw_stream):
        parts = line.split("\t")
        snp, genotypes = parts[0], parts[1:]
        if width is None:
            width = len(genotypes)
        elif len(genotypes) != width:
            raise ParseError(f"raw line {lineno}: malformed row length")
        if snp in columns:
            raise ParseError(f"duplicate snp_id {snp!r}")
        try:
            columns[snp], reports[snp] = encode_scores(genotypes)
        except ParseError as exc:
            raise ParseError(f"raw line {lineno}: {exc}") from None
    if not columns:
        raise ParseError("no sites")
    ids, chroms, positions = parse_meta(meta_stream)
    unknown = [s for s in ids if s not in columns]
    if unknown or len(ids) != len(columns):
        raise ParseError("raw genotype ids do not match the metadata")
    cells = np.vstack([columns[s] for s in ids])
    matrix = GenotypeMatrix(cells, tuple(ids), np.array(chroms), np.array(positions), 3,
                            None if individual_ids is None else tuple(individual_ids))
    return matrix, [reports[s] for s in ids]


def write_matrix(matrix: GenotypeMatrix, stream: TextIO) -> None:
    chars = np.frombuffer(b"0123456789", dtype=np.uint8)
    lut = np.full(256, ord(MISSING_CHAR), dtype=np.uint8)
    lut[:MAX_ALPHABET] = chars
    for row in matrix.cells:
        stream.write(lut[row].tobytes().decode("ascii"))
        stream.write("\n")


def write_meta(matrix: GenotypeMatrix, stream: TextIO) -> None:
    for snp, chrom, pos in zip(matrix.snp_ids, matrix.chromosomes, matrix.positions):
        stream.write(f"{snp}\t{chrom}\t{pos}\n")


def write_individuals(ids: Iterable[str], stream: TextIO) -> None:
    for i in ids:
        stream.write(f"{i}\n")


def write_phenotype(ids: Sequence[str], phenotype: Phenotype, stream: TextIO) -> None:
    for i, label in zip(ids, phenotype.labels):
        stream.write(f"{i}\t{label}\n")
