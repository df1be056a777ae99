"""Renewal population dynamics, the D/GI/infinity queue and its eternal family tree."""
from .analytic import (
    geometric_moments,
    geometric_pgf,
    intensities,
    markov_row,
    population_mgf,
    renewal_sequence,
)
from .estimators import FamilyTreeLabeler, IntensityEstimator, PopulationProcess
from .marks import MarkDistribution, SeedSpec, make_distribution, sample_marks, tail_mass
from .population import (
    MarkWindow,
    burn_in,
    original_ancestors,
    population_process,
    regeneration_cycles,
    simulate_marks,
)
from .tree import build_forest, component_count, descendants, direct_ephemeral_tree, foil

__version__ = "0.1.0"

__all__ = [
    "FamilyTreeLabeler",
    "IntensityEstimator",
    "MarkDistribution",
    "MarkWindow",
    "PopulationProcess",
    "SeedSpec",
    "build_forest",
    "burn_in",
    "component_count",
    "descendants",
    "direct_ephemeral_tree",
    "foil",
    "geometric_moments",
    "geometric_pgf",
    "intensities",
    "make_distribution",
    "markov_row",
    "original_ancestors",
    "population_mgf",
    "population_process",
    "regeneration_cycles",
    "renewal_sequence",
    "sample_marks",
    "simulate_marks",
    "tail_mass",
]
