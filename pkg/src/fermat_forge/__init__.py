"""fermat-forge: computational experiments on Fermat numbers and the heuristics for their primality."""
__version__ = "0.1.0"
