"""Desk-scale generative retrieval with hierarchical semantic IDs.

Pipeline: quantize an item corpus into multi-level semantic IDs with
residual k-means, train a small decoder with dual long/short-term history
routing, bucket-constrained fine-level contexts and an exposure-aware
loss, then retrieve with trie-constrained beam search. A seeded behavior
simulator and a CLI harness make the whole loop reproducible on one
machine.
"""

from ._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
