"""P1 finite elements for the Dirichlet eigenproblem of the integral fractional Laplacian."""

__version__ = "0.1.0"
