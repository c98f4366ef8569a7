"""pairdml: causal effect estimation when the treatment lives inside the image.

The package trains a treatment-invariant encoder from counterfactual feature
pairs (adversarial difference-vector learning plus per-pair orthogonal
projection), feeds the cleaned embeddings to cross-fitted double machine
learning, and ships a ground-truth simulation harness and a skin-tone
measurement / counterfactual-pair toolkit.
"""

from pairdml.numerics import (
    DataError,
    DegenerateInputError,
    NumericalError,
    SeededRng,
    as_features,
    load_features,
    normal_interval,
    r2_score,
    save_features,
    standardize_columns,
)

__all__ = [
    "DataError",
    "DegenerateInputError",
    "NumericalError",
    "SeededRng",
    "as_features",
    "load_features",
    "normal_interval",
    "r2_score",
    "save_features",
    "standardize_columns",
]

__version__ = "0.1.0"
