"""Per-voxel texture features: intensity, windowed histograms and three-plane LBP."""
from .histogram import (ALLOWED_BINS, Histogram, HistogramSpec, bin_array, bin_of,
                        neighbourhood_histogram_naive, slab_histograms_incremental,
                        sparse_histograms, volume_histograms_naive)
from .lbp import (CODE_TABLE, N_CODES, PLANE_ORDER, LbpSpec, lbp_code, lbp_plane_histogram,
                  lbp_top_feature, pattern_code, plane_codes, ring_pattern)
from .vector import (FeatureSpec, assemble_feature_vector, dump_features_csv,
                     extract_features_at, extract_features_slab, feature_matrix_bytes,
                     feature_names, required_margin)

__all__ = [
    "ALLOWED_BINS", "CODE_TABLE", "FeatureSpec", "Histogram", "HistogramSpec", "LbpSpec",
    "N_CODES", "PLANE_ORDER", "assemble_feature_vector", "bin_array", "bin_of",
    "dump_features_csv", "extract_features_at", "extract_features_slab",
    "feature_matrix_bytes", "feature_names", "lbp_code", "lbp_plane_histogram",
    "lbp_top_feature", "neighbourhood_histogram_naive", "pattern_code", "plane_codes",
    "required_margin", "ring_pattern", "slab_histograms_incremental", "sparse_histograms",
    "volume_histograms_naive",
]
