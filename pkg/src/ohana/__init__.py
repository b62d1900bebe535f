"""Workbench for the λI-calculus: evaluation trees with memory, a resource
calculus, Taylor expansion, and a non-idempotent multi-type system."""

__version__ = "0.1.0"
