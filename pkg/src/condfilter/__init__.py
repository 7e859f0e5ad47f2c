"""Target-conditioned filtering of large pre-training pools."""

from .cluster_filter import ClusterFilter, ClusterFilterSpec, filter_cluster, score_cluster
from .cost_model import CostProfile, calibrate, estimate_cost
from .data import (
    EmbeddingSet,
    RunReport,
    ScoredSelection,
    load_embeddings,
    load_labels,
    save_embeddings,
    save_labels,
    select_indices,
    write_selection,
)
from .domain_filter import (
    DomainClassifierFilter,
    DomainTrainConfig,
    LinearClassifier,
    build_domain_dataset,
    filter_domain,
    score_domain,
    train_domain_classifier,
)
from .entropy_filter import EntropyFilter, SoftmaxClassifier, filter_entropy, score_entropy, train_target_classifier
from .kmeans import ClusterModel, KMeans, assign, fit_kmeans
from .sequential import (
    MockTrainer,
    PrototypeTrainer,
    TaskDescriptor,
    TrainerState,
    compare_independent,
    run_sequential,
)

__version__ = "0.1.0"
