"""Population-based modal decomposition and identification toolkit.

Synthesizes truss populations with known modal ground truth, reconstructs
full-field vibration measurements from sparse sensors, trains an
unsupervised graph/attention decomposition model, and extracts modal
parameters with classical baselines for comparison.
"""

__version__ = "0.1.0"
