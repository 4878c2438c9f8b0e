"""mintprune: compression-via-pruning with graph-based conditional
geometric mutual information scores."""

from .characterize import AttackConfig, ReliabilityProfile, attack_curve, ece, iterative_attack
from .gmi import (
    BlockSpec,
    DependencyScore,
    EdgeList,
    conditional_gmi,
    euclidean_mst,
    fr_statistic,
    gaussian_gmi_oracle,
    gmi,
    nn_bootstrap,
    permute_product,
    standardize,
)
from .io import (
    make_blobs,
    make_digits,
    make_rings,
    read_activations,
    read_masks,
    read_mnist_idx,
    read_model,
    write_activations,
    write_masks,
    write_model,
)
from .network import (
    ActivationDump,
    Dataset,
    MlpClassifier,
    MlpModel,
    TrainConfig,
    apply_mask,
    capture_activations,
    csr_footprint,
    evaluate,
    forward,
    init_mlp,
    retrain_masked,
    train,
)
from .pruning import (
    DependencyTable,
    MintPruner,
    apply_threshold,
    compute_dependency_table,
    gamma_cap,
    group_filters,
    masks_from_retained,
    solve_delta_for_sparsity,
    sparsity_report,
)

__version__ = "0.1.0"
