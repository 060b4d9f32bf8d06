"""Classical output-only identification baselines.

Automated Enhanced Frequency Domain Decomposition (EFDD) and
covariance-driven Stochastic Subspace Identification (SSI), operating on
the measured channels only, with geometric interpolation of mode shapes to
unmeasured nodes.
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from scipy.interpolate import interp1d

from .identify import IdentifiedMode, fit_damping, mac

CPSD_NPERSEG = 512
BELL_MAC_THRESHOLD = 0.8
PEAK_MIN_SEPARATION_BINS = 3
SSI_MAX_ZETA = 0.2


@dataclass
class CrossSpectralStack:
    freqs: np.ndarray  # (F,)
    G: np.ndarray  # (F, M, M) Hermitian cross-PSD matrices


@dataclass
class SsiModel:
    A: np.ndarray
    C: np.ndarray
    order: int


def cross_psd(x: np.ndarray, fs: float, nperseg: int = CPSD_NPERSEG) -> CrossSpectralStack:
    """Welch cross-PSD stack (Hann window, 50% overlap)."""
    m, t = x.shape
    if m < 2:
        raise ValueError("need at least two channels")
    if t < nperseg:
        nperseg = t  # single-segment fallback for short records
    freqs, g = sps.csd(
        x[:, None, :], x[None, :, :], fs=fs, window="hann",
        nperseg=nperseg, noverlap=nperseg // 2, axis=-1,
    )
    return CrossSpectralStack(freqs=freqs, G=np.moveaxis(g, -1, 0))


def _auto_peaks(s1: np.ndarray, n_target: int) -> list:
    peaks, props = sps.find_peaks(
        s1, distance=PEAK_MIN_SEPARATION_BINS, prominence=0.0
    )
    if len(peaks) == 0:
        return []
    order = np.argsort(props["prominences"])[::-1]
    return sorted(peaks[order[:n_target]].tolist())


def efdd_identify(stack: CrossSpectralStack, n_target: int) -> list:
    """Automated EFDD: SVD per line, peak picking, SDOF-bell damping.

    Returns IdentifiedMode entries with shapes defined on the measured
    channels.
    """
    u, s, _ = np.linalg.svd(stack.G, hermitian=True)
    s1 = s[:, 0]
    shapes = u[:, :, 0]
    df = stack.freqs[1] - stack.freqs[0]
    modes = []
    for rank, peak in enumerate(_auto_peaks(s1, n_target)):
        ref = shapes[peak]
        # grow the SDOF bell while the singular vector stays aligned
        lo = peak
        while lo > 0 and _complex_mac(shapes[lo - 1], ref) >= BELL_MAC_THRESHOLD:
            lo -= 1
        hi = peak
        while hi < len(s1) - 1 and _complex_mac(shapes[hi + 1], ref) >= BELL_MAC_THRESHOLD:
            hi += 1
        zeta = None
        freq = stack.freqs[peak]
        if hi - lo >= 2:
            bell = np.zeros_like(s1)
            bell[lo : hi + 1] = s1[lo : hi + 1]
            autocorr = np.fft.irfft(bell)
            half = autocorr[: len(autocorr) // 2]
            if np.max(np.abs(half)) > 0:
                half = half / half[0]
            fs_eff = 2.0 * stack.freqs[-1]
            zeta = fit_damping(half, fs_eff)
            # enhanced frequency from zero crossings of the autocorrelation
            n_use = min(len(half), max(8, int(10.0 / max(freq, df) * fs_eff)))
            seg = half[:n_use]
            crossings = np.sum(np.abs(np.diff(np.signbit(seg))))
            duration = n_use / fs_eff
            if crossings >= 2 and duration > 0:
                freq = crossings / (2.0 * duration)
        shape = np.real(ref * np.exp(-1j * np.angle(ref[np.argmax(np.abs(ref))])))
        modes.append(
            IdentifiedMode(
                frequency_Hz=float(freq),
                damping_ratio=zeta,
                mode_shape=shape,
                psd_peak_magnitude=float(s1[peak]),
                single_peak_dominance=1.0,
                source_index=rank,
            )
        )
    return modes


def _complex_mac(a: np.ndarray, b: np.ndarray) -> float:
    num = np.abs(np.vdot(a, b)) ** 2
    den = float(np.vdot(a, a).real * np.vdot(b, b).real)
    return num / den if den > 0 else 0.0


def _block_hankel(cov: np.ndarray, rows: int, cols: int) -> np.ndarray:
    m = cov.shape[1]
    h = np.zeros((rows * m, cols * m))
    for i in range(rows):
        for j in range(cols):
            h[i * m : (i + 1) * m, j * m : (j + 1) * m] = cov[i + j + 1]
    return h


def ssi_identify(
    x: np.ndarray, fs: float, order: int, n_target: int
) -> list:
    """Covariance-driven SSI: Hankel SVD, realization, physical-pole filter."""
    if order % 2:
        raise ValueError("model order must be even")
    m, t = x.shape
    n_lags = 2 * order + 1
    if t < 4 * n_lags:
        raise ValueError("record too short for the requested model order")
    xc = x - x.mean(axis=1, keepdims=True)
    cov = np.stack(
        [xc[:, : t - lag] @ xc[:, lag:].T / (t - lag) for lag in range(n_lags)]
    )
    h = _block_hankel(cov, order, order)
    u, s, _ = np.linalg.svd(h, full_matrices=False)
    obs = u[:, :order] * np.sqrt(s[:order])
    c_mat = obs[:m]
    a_mat = np.linalg.lstsq(obs[:-m], obs[m:], rcond=None)[0]
    eigvals, eigvecs = np.linalg.eig(a_mat)

    dt = 1.0 / fs
    modes = []
    for i, mu in enumerate(eigvals):
        if np.imag(mu) <= 0:
            continue  # keep one of each conjugate pair
        lam = np.log(mu) / dt
        freq = float(np.abs(lam) / (2 * np.pi))
        if np.abs(lam) == 0:
            continue
        zeta = float(-np.real(lam) / np.abs(lam))
        if not (0 < zeta < SSI_MAX_ZETA) or not (0 < freq < fs / 2):
            continue
        shape_c = c_mat @ eigvecs[:, i]
        shape = np.real(
            shape_c * np.exp(-1j * np.angle(shape_c[np.argmax(np.abs(shape_c))]))
        )
        contribution = float(np.linalg.norm(shape_c))
        modes.append((contribution, freq, zeta, shape))
    modes.sort(key=lambda item: item[0], reverse=True)
    out = []
    for rank, (_, freq, zeta, shape) in enumerate(modes[:n_target]):
        out.append(
            IdentifiedMode(
                frequency_Hz=freq,
                damping_ratio=zeta,
                mode_shape=shape,
                psd_peak_magnitude=0.0,
                single_peak_dominance=1.0,
                source_index=rank,
            )
        )
    out.sort(key=lambda m_: m_.frequency_Hz)
    return out


def interpolate_shapes(
    shapes: np.ndarray, measured_x: np.ndarray, all_x: np.ndarray
) -> np.ndarray:
    """Piecewise-linear interpolation in x with linear extrapolation.

    ``shapes`` is (M, P) on measured nodes; returns (N, P) on all nodes.
    Duplicate measured coordinates are averaged first.
    """
    if len(measured_x) < 2:
        raise ValueError("need at least two measured nodes")
    ux = np.unique(measured_x)
    if len(ux) < len(measured_x):
        averaged = np.stack(
            [shapes[measured_x == xv].mean(axis=0) for xv in ux]
        )
        measured_x, shapes = ux, averaged
    order = np.argsort(measured_x)
    f = interp1d(
        measured_x[order],
        shapes[order],
        axis=0,
        kind="linear",
        fill_value="extrapolate",
        assume_sorted=True,
    )
    return f(all_x)
