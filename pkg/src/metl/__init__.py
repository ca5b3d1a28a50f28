"""Type checker, elaborator, and interpreter for a language with modal effect
types and scoped effect handlers."""

__version__ = "0.1.0"
