"""Zonotope and InterZono certification of recurrent sequence classifiers."""

from .cells import AbstractState, CellWeights, OutputLayer, RNNModel, cell_abstract, cell_concrete, forward_abstract, forward_concrete
from .certifier import (
    CertificationResult,
    MarginBounds,
    PerturbationSpec,
    build_input_domain,
    certified_accuracy,
    certify,
    certify_batch,
    certify_dataset,
    clean_accuracy,
    compare_domains,
    margin_lower_bounds,
    max_certified_radius,
)
from .domains import InterZono, IntervalBounds, InvertedBounds, NoisePool, Zonotope

__version__ = "0.1.0"
