"""Graph-attention error mitigation toolkit for Trotterized Ising circuits."""
__version__ = "0.1.0"
