"""Rotation-shared convolutional dictionaries for CT metal artifact reduction."""
from .estimators import ArtifactRemover, DictionaryLearner
from .filters import BasisVariant, CoefficientSet, assemble_bank, assemble_filter
from .model import FreeDictionary, OSCDictionary, load_dictionary, save_dictionary
from .solver import SolverConfig, solve

__all__ = [
    "ArtifactRemover",
    "DictionaryLearner",
    "BasisVariant",
    "CoefficientSet",
    "assemble_bank",
    "assemble_filter",
    "FreeDictionary",
    "OSCDictionary",
    "load_dictionary",
    "save_dictionary",
    "SolverConfig",
    "solve",
]

__version__ = "0.1.0"
