"""Multi-view CCA/MCCA feature fusion, linear L2-SVM classification and evaluation."""

from .cca import (
    CanonicalVariates,
    CcaTransform,
    CovarianceBlocks,
    FusedFeatures,
    covariance_blocks,
    fit_cca,
    fuse_concat,
    fuse_sum,
    project,
)
from .matrixio import (
    FeatureSet,
    LabeledDataset,
    center_samples,
    load_matrix,
    numerical_rank,
    save_matrix,
)
from .mcca import MccaPlan, MccaStage, apply_mcca, fit_mcca, plan_fusion
from .metrics import confusion_matrix, overall_metrics, per_class_metrics, report
from .svm import SvmConfig, SvmModel, predict, train_binary, train_multiclass

__version__ = "0.1.0"
