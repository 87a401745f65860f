"""Eigenvalue statistics of symmetric random matrices under isotropic
Gaussian noise, with the DTI experiment-design machinery (spherical
t-designs, Rician Fisher information, simulation and tensor fitting)
needed to study them at desk scale."""

__version__ = "0.1.0"

from . import asymptotics, design, eigen_laws, rician, sphericity, stats, symmat

__all__ = [
    "asymptotics",
    "design",
    "eigen_laws",
    "rician",
    "sphericity",
    "stats",
    "symmat",
]
