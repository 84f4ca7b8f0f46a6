"""Benchmark of local feature-attribution methods on tree ensembles."""
__version__ = "0.1.0"

from ._kernels import BACKEND  # noqa: E402
from .data import Dataset  # noqa: E402
from .explainers import Attribution, explain  # noqa: E402
from .trees import fit_forest, fit_tree  # noqa: E402

__all__ = ["BACKEND", "Attribution", "Dataset", "__version__", "explain", "fit_forest", "fit_tree"]
