"""Riemannian geometry on dimension-truncated Hilbert manifolds."""
