"""Label alignment by iterative offset denoising.

Corrects misplaced building polygons against imagery evidence: a pluggable
offset predictor proposes a per-instance correction at every step, an
exponential weight schedule scales it, and the accumulated corrections drag
each label onto its footprint; a final one-step prediction lifts footprints
to roofs. Ships with a synthetic benchmark generator, two predictor
realizations (ground-truth oracle and correlation matcher), the full
evaluation-metric suite, and a CLI (``labelalign``) tying them together.
"""
from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
