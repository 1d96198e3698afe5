"""Phytoplankton species identification from flow-cytometry pulse shapes.

Pipeline: synthesize or load multichannel pulse datasets, extract feature
representations (derived statistics, pulse-shape statistics, DTW
dissimilarities), and benchmark classifiers under stratified repeated
k-fold cross-validation.
"""

from .dtw import (
    DissimilarityMatrix,
    DtwConfig,
    dissimilarity_columns,
    dissimilarity_matrix,
    dtw_dissimilarity,
    local_dissimilarity,
)
from .evaluation import (
    CvCell,
    CvReport,
    EvalConfig,
    FoldPlan,
    contingency,
    cross_validate,
    five_fold_validated,
    render_report,
    run_grid,
    stratified_folds,
)
from .features import (
    FAMILY_DERIVED,
    FAMILY_DISSIMILARITY,
    FAMILY_PROPOSED,
    FeatureMatrix,
    count_peaks,
    derived_features,
    extract_features,
    percentile,
    proposed_features,
    shannon_entropy,
    third_central_moment,
    with_scaled_feature,
)
from .forest import (
    ForestConfig,
    ForestModel,
    best_split,
    feature_importance,
    forest_predict,
    forest_predict_many,
    gini_impurity,
    train_forest,
)
from .neighbors import KnnModel, knn_predict, knn_predict_many, knn_train
from .signals import CHANNELS, Dataset, DatasetFormatError, PulseProfile, load_dataset, save_dataset
from .svm import (
    KernelSpec,
    SvmModel,
    kernel_eval,
    svm_predict,
    svm_predict_many,
    svm_train,
    svm_train_binary,
)
from .synth import (
    ChannelPulseSpec,
    SpeciesTemplate,
    SynthSpec,
    generate_dataset,
    generate_profile,
    load_synth_spec,
)

__version__ = "0.1.0"
