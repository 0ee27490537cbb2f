"""Compositional hierarchical tensor factorization."""
from .decomposition import (LossTrace, PCAModel, Rank1Factors, TuckerModel, m_mode_svd,
                            pca_baseline, rank_one_approx, reconstruct, truncate, tucker_als)
from .filters import (SegmentFilterBank, grid_bank, identity_bank, make_pyramid_bank,
                      make_segmentation_bank, segment_tensor)
from .hierarchy import (HierarchicalModel, chtf_als, chtf_independent, chtf_init, chtf_loss,
                        chtf_overlapping, chtf_reconstruct, chtf_truncate, mode_gradient)
from .tensor import (frobenius_norm, khatri_rao_block, kronecker, matrixize, mode_product,
                     outer, unmatrixize, vectorize)

__version__ = "0.1.0"
