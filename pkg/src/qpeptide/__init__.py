"""Sequential quantum and recurrent peptide-binding classifiers on a statevector simulator."""

__version__ = "0.1.0"
