"""Unrolled CNN + conjugate-gradient reconstruction for dynamic multi-coil radial MRI."""
__version__ = "0.1.0"
