"""HPDM - Hierarchical patch diffusion for video at desk scale"""

__version__ = "0.1.0"
