"""A priori bounds for variable exponent elliptic problems with nonlinear boundary flux."""

__version__ = "0.1.0"
