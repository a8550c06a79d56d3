"""Numerical machinery for bi-parameter square functions on random dyadic
grids: shifted grids and goodness, product Haar calculus, kernel estimate
verification, Whitney-region quadrature of the square function, and the
rectangle combinatorics behind Carleson-type bounds."""

__version__ = "0.1.0"
