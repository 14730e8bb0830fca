"""Two-step optimal subsampling for weighted linear SVM."""

from .svm import (
    ConvergenceError,
    Dataset,
    Hyperplane,
    Instances,
    Sample,
    SolverConfig,
    SolverResult,
    WeightedInstance,
    decision_value,
    empirical_gradient,
    fit_weighted,
    hinge,
    objective,
    predict,
    reference_solve,
    subgradient_certificate,
    weighted_svm_fit,
)

__version__ = "0.1.0"
