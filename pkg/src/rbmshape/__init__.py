"""RBM face-shape priors (frontal DBN and pose 3-way RBM), fusion and tracking."""

__version__ = "0.1.0"
