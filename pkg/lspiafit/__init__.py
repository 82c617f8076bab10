"""lspiafit - least-squares B-spline fitting by progressive iterative approximation."""

__version__ = "0.1.0"
