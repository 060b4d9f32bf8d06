"""Modal parameter extraction from decomposed SDOF responses.

Frequencies come from periodogram peaks, damping ratios from the random
decrement technique with a log-decrement fit, and mode shapes are graded
against ground truth with the modal assurance criterion.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.signal
import scipy.stats

from . import kernels
from .fem import unit_max_normalize
from .network import DecompositionResult

RDT_TRIGGER_SIGMA = np.sqrt(2.0)
RDT_CYCLES = 10
RDT_MIN_SEGMENTS = 10
LOGDEC_PEAKS = 5
DOMINANCE_THRESHOLD = 0.6
MAGNITUDE_RATIO_THRESHOLD = 0.1
MATCH_MAX_REL_FREQ_ERROR = 0.25


@dataclass
class IdentifiedMode:
    frequency_Hz: float
    damping_ratio: float | None
    mode_shape: np.ndarray
    psd_peak_magnitude: float
    single_peak_dominance: float
    source_index: int


@dataclass
class ModeMatch:
    mode_number: int  # 1-based reference mode
    identified: IdentifiedMode
    mac: float
    frequency_error_pct: float
    damping_error_pct: float | None


@dataclass
class StructureResult:
    graph_id: str
    split_tag: str
    matches: list = field(default_factory=list)
    unmatched_reference_modes: list = field(default_factory=list)
    failed: bool = False


@dataclass
class IdentificationReport:
    structures: list = field(default_factory=list)

    def statistics(self, splits=("train",), n_modes=4) -> dict:
        """Per-mode mean/median/std of MAC and error percentages."""
        stats = {}
        for mode in range(1, n_modes + 1):
            macs, ferr, zerr = [], [], []
            for s in self.structures:
                if s.split_tag not in splits:
                    continue
                for m in s.matches:
                    if m.mode_number == mode:
                        macs.append(m.mac)
                        ferr.append(m.frequency_error_pct)
                        if m.damping_error_pct is not None:
                            zerr.append(m.damping_error_pct)
            entry = {}
            for key, vals in (("mac", macs), ("freq_err_pct", ferr), ("damp_err_pct", zerr)):
                if vals:
                    arr = np.array(vals)
                    entry[key] = {
                        "mean": float(arr.mean()),
                        "median": float(np.median(arr)),
                        "std": float(arr.std()),
                        "count": len(vals),
                    }
                else:
                    entry[key] = {"mean": np.nan, "median": np.nan, "std": np.nan, "count": 0}
            stats[mode] = entry
        return stats


def psd(
    q: np.ndarray, fs: float, pad_factor: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """One-sided periodogram, zero-padded to the next power of two >= T.

    ``pad_factor`` > 1 pads further (next power of two >= pad_factor * T)
    to refine peak localization for near-sinusoidal series; refining by
    powers of two keeps every coarse grid frequency on the fine grid.
    """
    t = len(q)
    if t < 16:
        raise ValueError("series too short for PSD")
    nfft = 1 << (pad_factor * t - 1).bit_length()
    spec = np.fft.rfft(q, nfft)
    power = (np.abs(spec) ** 2) / (fs * t)
    power[1:-1] *= 2.0
    freqs = np.fft.rfftfreq(nfft, 1.0 / fs)
    return freqs, power


def pick_frequency(freqs: np.ndarray, power: np.ndarray):
    """Global peak frequency plus a single-peak dominance score.

    Dominance compares the global peak with the largest local maximum not
    adjacent to it; a flat spectrum scores 0.5.
    """
    peak = int(np.argmax(power))
    p_peak = power[peak]
    interior = power[1:-1]
    local_max = np.flatnonzero(
        (interior >= power[:-2]) & (interior >= power[2:])
    ) + 1
    secondary = [k for k in local_max if abs(k - peak) > 1]
    p_second = max((power[k] for k in secondary), default=p_peak)
    if p_peak <= 0:
        return freqs[peak], 0.0, 0.5
    dominance = p_peak / (p_peak + p_second)
    return float(freqs[peak]), float(p_peak), float(dominance)


def rdt(
    q: np.ndarray,
    fs: float,
    fn_hint: float,
    cycles: int = RDT_CYCLES,
    min_segments: int = RDT_MIN_SEGMENTS,
) -> np.ndarray | None:
    """Random decrement signature via level-crossing triggered averaging.

    Triggers on upward crossings of sqrt(2)*sigma; segments span ``cycles``
    periods of the hinted frequency. Returns None when fewer than
    ``min_segments`` segments are found.
    """
    if fn_hint <= 0:
        return None
    sigma = float(np.std(q))
    if sigma == 0:
        return None
    seg_len = int(round(cycles / fn_hint * fs))
    if seg_len < 4 or seg_len >= len(q):
        return None
    signature, count = kernels.rdt_stack(
        np.ascontiguousarray(q, dtype=float), RDT_TRIGGER_SIGMA * sigma, seg_len
    )
    if count < min_segments:
        return None
    return signature


def _positive_peaks(signature: np.ndarray) -> np.ndarray:
    s = signature
    idx = np.flatnonzero((s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:]) & (s[1:-1] > 0)) + 1
    return idx


def fit_damping(signature: np.ndarray, fs: float) -> float | None:
    """Log-decrement damping over the first five positive signature peaks."""
    peaks = _positive_peaks(signature)
    if len(peaks) < 3:
        return None
    peaks = peaks[: LOGDEC_PEAKS]
    p0, pk = signature[peaks[0]], signature[peaks[-1]]
    k = len(peaks) - 1
    if pk <= 0:
        return None
    delta = np.log(p0 / pk) / k
    zeta = delta / np.sqrt(4 * np.pi**2 + delta**2)
    return float(zeta)


def decay_damping(tail: np.ndarray, fs: float, fn: float) -> float | None:
    """Damping from a known free-decay segment, robust to residual content.

    Picks one positive peak per oscillation cycle (minimum spacing 0.8/fn)
    so small ripples from imperfectly separated modes do not register as
    extra peaks, then fits a least-squares line to the log amplitudes; the
    slope per peak is the logarithmic decrement. More noise-tolerant than
    the two-point decrement when the decay per cycle is small.
    """
    if fn <= 0 or len(tail) < 16:
        return None
    distance = max(int(round(0.8 * fs / fn)), 1)
    peaks, _ = scipy.signal.find_peaks(tail, height=0, distance=distance)
    if len(peaks) < 3:
        return None
    # Theil-Sen slope: resistant to single corrupted peaks
    slope = scipy.stats.theilslopes(np.log(tail[peaks]), np.arange(len(peaks)))[0]
    delta = -slope
    if delta <= 0:
        return None
    zeta = delta / np.sqrt(4 * np.pi**2 + delta**2)
    return float(zeta)


def mac(shape_a: np.ndarray, shape_b: np.ndarray) -> float:
    """Modal assurance criterion: scale- and sign-invariant shape match."""
    a = np.asarray(shape_a, dtype=float).ravel()
    b = np.asarray(shape_b, dtype=float).ravel()
    if len(a) != len(b):
        raise ValueError("shape vectors must have equal length")
    aa, bb = a @ a, b @ b
    if aa == 0 or bb == 0:
        raise ValueError("zero vector in MAC")
    return float((a @ b) ** 2 / (aa * bb))


def identify_modes(
    result: DecompositionResult,
    fs: float,
    pad_factor: int = 4,
    decay_start: int | None = None,
    rdt_cycles: int = RDT_CYCLES,
    rdt_min_segments: int = RDT_MIN_SEGMENTS,
) -> list:
    """Per-output-channel frequency, damping, and shape candidates.

    When RDT cannot collect enough trigger segments (short records) and
    ``decay_start`` marks a known free-decay portion, the decay tail itself
    serves as the signature for the log-decrement fit.
    """
    q_all = result.modal_responses
    phi = result.mode_shapes
    modes = []
    for p in range(q_all.shape[0]):
        freqs, power = psd(q_all[p], fs, pad_factor)
        fn, magnitude, dominance = pick_frequency(freqs, power)
        signature = rdt(q_all[p], fs, fn, rdt_cycles, rdt_min_segments)
        if signature is not None:
            zeta = fit_damping(signature, fs)
        elif decay_start is not None:
            zeta = decay_damping(q_all[p, decay_start:], fs, fn)
        else:
            zeta = None
        if zeta is not None and zeta <= 0:
            zeta = None
        shape = unit_max_normalize(phi[:, p : p + 1])[:, 0]
        modes.append(
            IdentifiedMode(
                frequency_Hz=fn,
                damping_ratio=zeta,
                mode_shape=shape,
                psd_peak_magnitude=magnitude,
                single_peak_dominance=dominance,
                source_index=p,
            )
        )
    return modes


def spurious_filter(
    modes: list,
    n_target: int,
    dominance_threshold: float = DOMINANCE_THRESHOLD,
    magnitude_ratio: float = MAGNITUDE_RATIO_THRESHOLD,
) -> list:
    """Keep up to n_target dominant, high-magnitude, non-duplicate modes."""
    candidates = sorted(
        modes,
        key=lambda m: (m.psd_peak_magnitude, m.single_peak_dominance),
        reverse=True,
    )
    passing = [m for m in candidates if m.single_peak_dominance >= dominance_threshold]
    if not passing:
        return []
    max_mag = passing[0].psd_peak_magnitude
    kept = []
    for m in passing:
        if m.psd_peak_magnitude < magnitude_ratio * max_mag:
            continue
        if any(
            abs(m.frequency_Hz - k.frequency_Hz) <= 1e-9
            or (k.frequency_Hz > 0 and abs(m.frequency_Hz / k.frequency_Hz - 1) < 0.02)
            for k in kept
        ):
            continue  # duplicate peak
        kept.append(m)
        if len(kept) == n_target:
            break
    return kept


def match_modes(
    selected: list,
    reference,
    n_modes: int = 4,
) -> tuple[list, list]:
    """Greedy nearest-frequency matching of identified to reference modes."""
    matches = []
    unmatched = []
    available = list(selected)
    for mode_idx in range(min(n_modes, len(reference.frequencies_Hz))):
        f_ref = reference.frequencies_Hz[mode_idx]
        z_ref = reference.damping_ratios[mode_idx]
        best = None
        best_err = np.inf
        for m in available:
            rel = abs(m.frequency_Hz - f_ref) / f_ref
            if rel < best_err:
                best_err = rel
                best = m
        if best is None or best_err > MATCH_MAX_REL_FREQ_ERROR:
            unmatched.append(mode_idx + 1)
            continue
        available.remove(best)
        damp_err = None
        if best.damping_ratio is not None and z_ref > 0:
            damp_err = (best.damping_ratio - z_ref) / z_ref * 100.0
        matches.append(
            ModeMatch(
                mode_number=mode_idx + 1,
                identified=best,
                mac=mac(best.mode_shape, reference.mode_shapes[:, mode_idx]),
                frequency_error_pct=(best.frequency_Hz - f_ref) / f_ref * 100.0,
                damping_error_pct=damp_err,
            )
        )
    return matches, unmatched


def match_and_report(
    per_structure: list,
    n_modes: int = 4,
) -> IdentificationReport:
    """Build a population report from (graph, selected modes) pairs.

    ``per_structure`` holds (graph_id, split_tag, selected_modes, reference)
    tuples with references from eigen-analysis.
    """
    report = IdentificationReport()
    for graph_id, split_tag, selected, reference in per_structure:
        result = StructureResult(graph_id=graph_id, split_tag=split_tag)
        if not selected:
            result.failed = True
            result.unmatched_reference_modes = list(range(1, n_modes + 1))
        else:
            result.matches, result.unmatched_reference_modes = match_modes(
                selected, reference, n_modes
            )
        report.structures.append(result)
    return report
