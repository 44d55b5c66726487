"""Variable-range Markov random field neighborhoods for SNP genotype data.

The package estimates, site by site, the minimal left/right conditional
dependence neighborhood by penalized maximum likelihood, cuts the site
sequence into independent influence windows and tests each window for
association with a binary phenotype.
"""

__version__ = "0.1.0"

from .ingest import (
    MISSING,
    GenotypeMatrix,
    Phenotype,
    SiteMeta,
    encode_scores,
    parse_genotype_files,
    parse_individuals,
    parse_phenotype,
    parse_raw_genotypes,
)
from .qc import QcReport, apply_qc, hwe_chi_square, minor_allele_frequency
from .estimator import (
    ContextCounts,
    NeighborhoodParams,
    SiteNeighborhood,
    conditional_mle,
    count_contexts,
    estimate_all,
    estimate_neighborhood,
    log_conditional_likelihood,
    pml_score,
)
from .segmentation import InfluenceWindow, find_cut_points, influence_windows
from .association import (
    AssociationResult,
    ContingencyTable,
    associate_all,
    chi_square_independence,
    chi_square_sf,
    window_contingency,
)

__all__ = [
    "MISSING",
    "GenotypeMatrix",
    "Phenotype",
    "SiteMeta",
    "encode_scores",
    "parse_genotype_files",
    "parse_individuals",
    "parse_phenotype",
    "parse_raw_genotypes",
    "QcReport",
    "apply_qc",
    "hwe_chi_square",
    "minor_allele_frequency",
    "ContextCounts",
    "NeighborhoodParams",
    "SiteNeighborhood",
    "conditional_mle",
    "count_contexts",
    "estimate_all",
    "estimate_neighborhood",
    "log_conditional_likelihood",
    "pml_score",
    "InfluenceWindow",
    "find_cut_points",
    "influence_windows",
    "AssociationResult",
    "ContingencyTable",
    "associate_all",
    "chi_square_independence",
    "chi_square_sf",
    "window_contingency",
]
