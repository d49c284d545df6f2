"""seqrep: self-supervised transaction-sequence representations and benchmark."""

__version__ = "0.1.0"
