# MesoClosure Engine
# Regularized deconvolution closure for 1D particle chains

__version__ = "1.0.0"
__author__ = "MesoClosure Team"
