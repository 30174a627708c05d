"""Multimodal sparse coding.

Unimodal, joint and cross-modal sparse coding with OMP and LASSO encoders,
K-SVD and online dictionary learning, deep stacks of coding and pooling
layers, and the evaluation tools to compare the resulting features.
"""
from .dictionary import Dictionary, ModalityBlock, load_dictionary, save_dictionary
from .errors import (ArgumentError, ConfigError, ConvergenceError, DataError, FormatError,
                     MSCError, NumericalError, ShapeError)
from .kernels import BACKEND
from .learning import Method, TrainConfig, train_dictionary
from .multimodal import JointModel, cross_encode, joint_encode, train_joint
from .solvers import L0, L1, SolverConfig, SparseCode, batch_encode, encode, lasso, omp_config

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Dictionary", "ModalityBlock", "load_dictionary", "save_dictionary",
    "ArgumentError", "ConfigError", "ConvergenceError", "DataError", "FormatError",
    "MSCError", "NumericalError", "ShapeError", "Method", "TrainConfig", "train_dictionary",
    "JointModel", "cross_encode", "joint_encode", "train_joint", "L0", "L1", "SolverConfig",
    "SparseCode", "batch_encode", "encode", "lasso", "omp_config",
]
