"""qplab: quasipotentials, minimum action paths and metastability diagnostics
for small-noise SDEs."""

from .models import SystemSpec, EquivalenceClassSpec, LyapunovCertificate, build_system

__all__ = ["SystemSpec", "EquivalenceClassSpec", "LyapunovCertificate", "build_system"]
__version__ = "0.1.0"
