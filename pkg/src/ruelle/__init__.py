"""Transfer operators, pressure and equilibrium states on sequence spaces."""

__version__ = "0.1.0"
