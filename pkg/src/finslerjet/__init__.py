"""Numerical Finsler geometry on jets: curvature, R-Einstein residuals and
conformal/warped-product checks at sampled points."""

__version__ = "0.1.0"
