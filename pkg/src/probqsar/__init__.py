"""Activity prediction from SMILES with a probabilistic conditional GAN.

Pipeline: SMILES -> Morgan fingerprint + skip-gram token embedding (812-d)
-> autoencoder code (203-d) -> noise-injection generator giving a predictive
distribution per molecule.
"""

from .chem_parse import Molecule, SmilesError, parse_smiles
from .config import RunConfig
from .featurize import Featurizer, morgan_fingerprint
from .probcgan import ProbCGANRegressor

__all__ = ["Molecule", "SmilesError", "parse_smiles", "RunConfig", "Featurizer", "morgan_fingerprint",
           "ProbCGANRegressor"]
__version__ = "0.1.0"
