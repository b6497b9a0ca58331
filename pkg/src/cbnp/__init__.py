"""Branch-and-price for resource allocation over segments with ODE dynamics."""
__version__ = "0.1.0"
