"""Federated learning simulation over LEO satellite constellations.

A discrete-event simulator and library adapting synchronous and buffered
asynchronous federated learning algorithms to orbital contact constraints,
with contact-window planning, scheduling and intra-cluster relay
augmentations, and a sweep/report toolchain.
"""

__version__ = "0.1.0"
