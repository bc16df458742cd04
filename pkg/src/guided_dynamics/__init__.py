"""Spring-mass particle simulation guided by an action-conditioned equivariant graph network."""

__version__ = "0.1.0"
