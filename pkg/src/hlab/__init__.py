"""Steady states, unstable manifolds and heteroclinic spectra of u_t = u_xx - u^2 + phi(x)."""
__version__ = "0.1.0"
