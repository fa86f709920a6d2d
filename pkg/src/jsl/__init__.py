"""Jump-soliton laboratory.

Closed forms, Monte Carlo and mean-field integrators for right-jump Markov
processes with barycenter-modulated mutual interaction.
"""

__version__ = "0.1.0"

from jsl.params import ModelParams
from jsl.kernels import BACKEND

__all__ = ["ModelParams", "BACKEND", "__version__"]
