"""Accounting networks: similarity graphs built from bank financial statements.

Banks become nodes; each year, their total-assets-normalized statement
vectors are compared by cosine similarity, links are kept when a
permutation test finds them significant, and the resulting graphs are
analysed with weighted-modularity communities, node statistics and PCA.
"""

from .community import Partition, eval_modularity, louvain, threshold_sweep
from .features import FeatureMatrix, build_feature_matrix, popular_variables
from .ingest import (
    BankPanel,
    FilterConfig,
    StatementRecord,
    assign_fiscal_year,
    build_panels,
    compute_quality_ratio,
    drop_redundant_variables,
    filter_banks,
    qr_sweep,
    read_statements,
)
from .netmetrics import clustering_coefficient, node_strength, pearson_with_test, yearly_correlation_series
from .pca import fit_scaled_pca, measure_contributions, period_rankings
from .pipeline import PipelineConfig, run_pipeline
from .simgraph import SimilarityGraph, build_graph, cosine_similarity, metric_weight, prune, significance_test
from .synthgen import SyntheticSpec, generate

__version__ = "0.1.0"
