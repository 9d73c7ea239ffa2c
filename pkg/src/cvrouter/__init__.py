"""Entanglement routing in CV Gaussian graph-state networks."""
