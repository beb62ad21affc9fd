"""cobordcsl: executable true-concurrency semantics for concurrent separation logic.

Programs and CSL proofs are interpreted as cobordisms of asynchronous graphs
over three machine-model templates (stateful, stateless, separated states);
safety and data-race freedom are checked as fibration properties of the
comparison maps between the three interpretations.
"""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
