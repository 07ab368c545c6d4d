"""Critical points and level-set curvature of semilinear Dirichlet problems in the plane."""

__version__ = "0.1.0"
