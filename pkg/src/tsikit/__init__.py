"""tsikit: task-specific information analysis for labeled text datasets.

The core quantity is TSI, the difference between the dev cross-entropy of a
control classifier that sees only declared shortcut features (punctuation
rate, stopword rate, lexical overlap) and that of a classifier trained on the
full input. Both losses are measured in nats. The package also ships the
verification harnesses used to trust that number: synthetic datasets with
exact conditional entropies, and kNN entropy estimators for cross-checks.
"""

__version__ = "0.1.0"

from . import corpus, features, knn_entropy, model, shortcuts, synthetic, tsi

__all__ = [
    "__version__",
    "corpus",
    "shortcuts",
    "features",
    "model",
    "tsi",
    "synthetic",
    "knn_entropy",
]
