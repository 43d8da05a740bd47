"""Desk-scale laboratory for symmetric-key source encryption under
side-channel leakage: exact finite-field cryptosystems, universal source
coding, worst-case mutual-information leakage, and the helper rate region
with its secrecy exponents."""

__version__ = "0.1.0"
