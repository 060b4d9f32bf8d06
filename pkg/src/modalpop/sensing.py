"""Sparse-sensing emulation and full-field reconstruction.

Pipeline order is fixed: low-pass filter -> sensor mask -> feature
propagation -> max-normalization.
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from . import kernels
from .population import TrussSpec

FP_ITERATIONS = 40
DEFAULT_KEEP_FRACTION = 0.18
DEFAULT_CUTOFF_HZ = 20.0
FILTER_ORDER = 8


@dataclass
class SignalSet:
    """Normalized multi-channel accelerations with a sensor mask."""

    signals: np.ndarray  # (N, T)
    mask: np.ndarray  # (N,) bool, True = measured
    fs_Hz: float
    normalization_scale: float = 1.0


@dataclass
class NormalizedAdjacency:
    A: np.ndarray
    A_tilde: np.ndarray
    degree: np.ndarray


def lowpass(
    signals: np.ndarray, fc_Hz: float = DEFAULT_CUTOFF_HZ, fs_Hz: float = 200.0
) -> np.ndarray:
    """Zero-phase 8th-order Butterworth low-pass along the time axis."""
    if fc_Hz >= fs_Hz / 2:
        raise ValueError("cutoff must be below the Nyquist frequency")
    sos = sps.butter(FILTER_ORDER, fc_Hz, btype="low", fs=fs_Hz, output="sos")
    return sps.sosfiltfilt(sos, signals, axis=-1)


def select_sensors(
    truss: TrussSpec, keep_fraction: float = DEFAULT_KEEP_FRACTION
) -> np.ndarray:
    """Deterministic, evenly-spaced-in-x sensor mask keeping ~keep_fraction."""
    if not (0 < keep_fraction <= 1):
        raise ValueError("keep_fraction must be in (0, 1]")
    n = truss.n_nodes
    n_keep = int(round(n * keep_fraction))
    if keep_fraction == 1.0:
        n_keep = n
    if n_keep < 2:
        n_keep = 2
    order = np.argsort(truss.node_coords[:, 0], kind="stable")
    picks = np.unique(np.round(np.linspace(0, n - 1, n_keep)).astype(int))
    if len(picks) < 2:
        raise ValueError("fewer than 2 sensors selected")
    mask = np.zeros(n, dtype=bool)
    mask[order[picks]] = True
    return mask


def max_normalize(signals: np.ndarray) -> tuple[np.ndarray, float]:
    """Divide the whole matrix by its single global max-abs value."""
    scale = float(np.max(np.abs(signals)))
    if scale == 0:
        raise ValueError("all-zero signals cannot be normalized")
    return signals / scale, scale


def normalized_adjacency(truss: TrussSpec) -> NormalizedAdjacency:
    """Symmetric normalization D^{-1/2} A D^{-1/2} of the truss graph."""
    a = truss.adjacency()
    degree = a.sum(axis=1)
    if np.any(degree == 0):
        raise ValueError("isolated node in truss graph")
    d_inv_sqrt = 1.0 / np.sqrt(degree)
    a_tilde = a * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    return NormalizedAdjacency(A=a, A_tilde=a_tilde, degree=degree)


def feature_propagate(
    signals: np.ndarray,
    mask: np.ndarray,
    adjacency: NormalizedAdjacency,
    iters: int = FP_ITERATIONS,
    return_deltas: bool = False,
):
    """Diffuse known channels to unmeasured nodes over the graph.

    Unknown rows start at zero; known rows are held fixed every iteration.
    The per-iteration max update on unknown rows is available for
    convergence diagnostics.
    """
    if signals.shape[0] != len(mask):
        raise ValueError("mask length must match signal row count")
    x0 = signals.copy()
    x0[~mask, :] = 0.0
    x, deltas = kernels.fp_iterate(
        np.ascontiguousarray(adjacency.A_tilde, dtype=float),
        np.ascontiguousarray(x0, dtype=float),
        np.ascontiguousarray(mask, dtype=np.bool_),
        iters,
    )
    if return_deltas:
        return x, deltas
    return x


def sense(
    truss: TrussSpec,
    accelerations: np.ndarray,
    fs_Hz: float,
    keep_fraction: float = DEFAULT_KEEP_FRACTION,
    fc_Hz: float = DEFAULT_CUTOFF_HZ,
) -> SignalSet:
    """Full sensing pipeline: filter, mask, reconstruct, normalize."""
    filtered = lowpass(accelerations, fc_Hz, fs_Hz)
    mask = select_sensors(truss, keep_fraction)
    adj = normalized_adjacency(truss)
    reconstructed = feature_propagate(filtered, mask, adj)
    normalized, scale = max_normalize(reconstructed)
    return SignalSet(
        signals=normalized, mask=mask, fs_Hz=fs_Hz, normalization_scale=scale
    )
