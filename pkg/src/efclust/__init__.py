"""Clustering of functional observations with an enriched Dirichlet
multinomial mixture over basis-expanded curves, fitted by coordinate-ascent
variational inference."""

from .basis import (
    BasisSpec,
    BSplineBlock,
    Constant,
    Cosine,
    DesignMatrix,
    Power,
    Sine,
    build_design,
    evaluate_basis,
    preset_p1,
    preset_p2,
)
from .cavi import (
    FitDiagnostics,
    FitOptions,
    VariationalState,
    compute_elbo,
    elbo_terms,
    expected_sq_residual,
    fit,
    initial_state,
    update_atoms,
    update_class_weights,
    update_noise,
    update_responsibilities,
    update_within_weights,
)
from .config import (
    ClassConfig,
    ModelConfig,
    builtin_config,
    config_from_dict,
    config_to_dict,
    load_config,
    save_config,
    validate_config,
)
from .dataset import (
    FunctionalDataset,
    Unit,
    load_dataset_csv,
    standardize,
    write_dataset_csv,
)
from .estimates import (
    ClusterReport,
    build_report,
    contingency,
    estimate_curve,
    map_assignments,
    permutation_accuracy,
    volume_report,
)
from .prior import (
    PriorDraw,
    UrnState,
    attach_coefficients,
    class_predictive,
    cocluster_probability,
    cocluster_probability_limit,
    empty_urn,
    new_cluster_probability,
    sample_partition,
    sample_prior_curves,
    within_class_predictive,
)
from .synth import (
    SimulationSpec,
    benchmark_model_config,
    benchmark_spec,
    benchmark_truths,
    generate,
)

__version__ = "0.1.0"
