"""Protograph LDPC code design and simulation for asynchronous random access with SIC."""
from .protograph import BaseMatrix, builtin, design_rate, is_edge_symmetric, lift, permute_columns
from .codec import CodeInstance, bp_decode, encode, syndrome

__version__ = "0.1.0"

__all__ = ["BaseMatrix", "builtin", "design_rate", "is_edge_symmetric", "lift", "permute_columns",
           "CodeInstance", "bp_decode", "encode", "syndrome", "__version__"]
