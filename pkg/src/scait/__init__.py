"""Task-oriented semantic communication over a simulated digital link.

A CNN classifier is split at a feature-map layer. A gradient-derived
knowledge base ranks the maps by task importance, the top maps are quantized
and sent over a BPSK/AWGN channel (or UDP), and a fully-connected decoder
classifies them at the receiver.
"""

__version__ = "0.1.0"
