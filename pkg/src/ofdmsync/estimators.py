"""Carrier-frequency-offset estimators.

Non-data-aided CP correlation, the preamble family (repeated-block, two-stage
half-symbol, and the multi-part BLUE combiner), the two-stage pilot method,
and the conjugate-product pilot estimators (isolated tones and antipodal
clustered pairs) that feed the tracking loops.

All angle extraction uses the four-quadrant arctangent.  Fractional
estimators alias outside their range: a per-symbol drift phi maps back as
wrap(phi) / scale.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import FrameConfig, PilotLayout
from .channel import ici_coefficients
from .modem import add_cp, dft, idft


@dataclass(frozen=True)
class CfoEstimate:
    """Normalized CFO estimate with its provenance."""

    epsilon_hat: float
    kind: str = "fractional"
    n_symbols_used: int = 1


def _wrap(angle: float) -> float:
    """Wrap to [-pi, pi)."""
    return float((angle + np.pi) % (2.0 * np.pi) - np.pi)


# ---------------------------------------------------------------------------
# Non-data-aided: cyclic prefix correlation
# ---------------------------------------------------------------------------

def cp_correlation(rx, cfg: FrameConfig) -> complex:
    """Sum of y*_n y_{n+N} over every CP interval in the stream."""
    rx = np.asarray(rx, dtype=complex).reshape(-1)
    n_sym = cfg.symbol_length
    n_cp = cfg.cp_length
    if rx.size < n_sym:
        raise ValueError("stream shorter than one OFDM symbol")
    if n_cp == 0:
        raise ValueError("cp correlation needs a nonzero cyclic prefix")
    n_symbols = rx.size // n_sym
    rows = rx[: n_symbols * n_sym].reshape(n_symbols, n_sym)
    cp = rows[:, :n_cp]
    tail = rows[:, cfg.n_sub : cfg.n_sub + n_cp]
    return complex(np.sum(np.conj(cp) * tail))


def cp_estimate(rx, cfg: FrameConfig) -> CfoEstimate:
    """CFO from the CP correlation phase: eps = arg(corr) / 2pi.

    The fractional estimate lies in [-0.5, 0.5); offsets beyond alias back.
    """
    rx = np.asarray(rx, dtype=complex).reshape(-1)
    corr = cp_correlation(rx, cfg)
    eps = _wrap(np.angle(corr)) / (2.0 * np.pi)
    return CfoEstimate(eps, "fractional", rx.size // cfg.symbol_length)


def cp_error_increment(rx, cfg: FrameConfig, l_av: int) -> float:
    """Signed discriminator (1/L_av) sum Im{y*_n y_{n+N}} over the first
    l_av CP samples; zero-crossing at eps = 0."""
    if l_av < 1:
        raise ValueError("l_av must be at least 1")
    rx = np.asarray(rx, dtype=complex).reshape(-1)
    n_cp = cfg.cp_length
    if rx.size < cfg.symbol_length or l_av > n_cp:
        raise ValueError("not enough CP samples for the requested average")
    prod = np.conj(rx[:l_av]) * rx[cfg.n_sub : cfg.n_sub + l_av]
    return float(np.mean(prod.imag))


# ---------------------------------------------------------------------------
# Preamble estimators
# ---------------------------------------------------------------------------

def moose_estimate(rx, n_sub: int) -> CfoEstimate:
    """Repeated-block estimator: angle of sum_k Y2_k Y1*_k over 2pi.

    rx must hold two consecutive N-sample blocks carrying identical payload
    with no guard between them; range |eps| <= 0.5.
    """
    rx = np.asarray(rx, dtype=complex).reshape(-1)
    if rx.size != 2 * n_sub:
        raise ValueError(f"expected 2*{n_sub} samples, got {rx.size}")
    y1 = dft(rx[:n_sub])
    y2 = dft(rx[n_sub:])
    corr = np.sum(y2 * np.conj(y1))
    eps = np.angle(corr) / (2.0 * np.pi)
    return CfoEstimate(float(eps), "fractional", 2)


def make_repeated_blocks(n_sub: int, cp_length: int, rng: np.random.Generator):
    """Training pair for the repeated-block estimator: one random QPSK symbol
    repeated twice, preceded by a single CP covering the pair.  Unit average
    sample power."""
    pn = np.exp(1j * 0.5 * np.pi * rng.integers(0, 4, n_sub))
    block = idft(pn) * np.sqrt(n_sub)
    pair = np.concatenate([block, block])
    return add_cp(pair, cp_length), pn


def schmidl_cox_ffo(rx, n_sub: int) -> tuple[float, CfoEstimate]:
    """Fractional stage on a training symbol with two identical halves.

    Returns (phi_hat, estimate) with phi_hat = angle of the half-symbol
    correlation and eps_f = phi_hat / pi in [-1, 1).
    """
    rx = np.asarray(rx, dtype=complex).reshape(-1)
    if rx.size != n_sub:
        raise ValueError(f"expected {n_sub} samples, got {rx.size}")
    half = n_sub // 2
    corr = np.sum(np.conj(rx[:half]) * rx[half:])
    phi = float(np.angle(corr))
    return phi, CfoEstimate(phi / np.pi, "fractional", 1)


def schmidl_cox_ifo(f1, f2, pn_diff, candidates) -> tuple[int, float, dict]:
    """Integer stage: maximize B(g) over candidate even-bin shifts.

    f1, f2 are the FFTs of the two training symbols after the fractional
    correction; pn_diff maps even bins of symbol 1 to symbol 2.  Returns
    (g_hat, eps_i = 2 g_hat, metrics by candidate).
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("empty candidate set")
    f1 = np.asarray(f1, dtype=complex).reshape(-1)
    f2 = np.asarray(f2, dtype=complex).reshape(-1)
    n = f1.size
    even = np.arange(0, n, 2)
    denom = 2.0 * (np.sum(np.abs(f2[even]) ** 2)) ** 2
    metrics = {}
    for g in candidates:
        shifted = (even + 2 * g) % n
        num = np.abs(
            np.sum(np.conj(f1[shifted]) * np.conj(pn_diff[even]) * f2[shifted])
        ) ** 2
        metrics[g] = float(num / denom)
    g_hat = max(metrics, key=metrics.get)
    return g_hat, float(2 * g_hat), metrics


def make_sc_training(n_sub: int, cp_length: int, rng: np.random.Generator):
    """Two-symbol training set for the two-stage estimator.

    Symbol 1 carries a QPSK PN on even bins only (scaled sqrt(2), so its time
    domain has identical halves at full power); symbol 2 carries independent
    PN on all bins.  Returns (stream, grid1, grid2, pn_diff) where pn_diff_k
    = sqrt(2) * Z2_k / Z1_k on even bins.
    """
    qpsk = lambda size: np.exp(1j * 0.5 * np.pi * rng.integers(0, 4, size))
    g1 = np.zeros(n_sub, dtype=complex)
    g1[0::2] = np.sqrt(2.0) * qpsk(n_sub // 2)
    g2 = qpsk(n_sub)
    pn_diff = np.zeros(n_sub, dtype=complex)
    pn_diff[0::2] = np.sqrt(2.0) * g2[0::2] / g1[0::2]
    scale = np.sqrt(n_sub)
    s1 = add_cp(idft(g1) * scale, cp_length)
    s2 = add_cp(idft(g2) * scale, cp_length)
    return np.concatenate([s1, s2]), g1, g2, pn_diff


def mm_weights(q_parts: int, p_design: int) -> np.ndarray:
    """BLUE combining weights w(q), q = 1..P; channel independent, sum to 1.

    w(q) = 3[(Q-q)(Q-q+1) - P(Q-P)] / [P(4P^2 - 6PQ + 3Q^2 - 1)]
    """
    Q, P = q_parts, p_design
    if not 1 <= P <= Q - 1:
        raise ValueError("design parameter must satisfy 1 <= P <= Q-1")
    q = np.arange(1, P + 1)
    num = 3.0 * ((Q - q) * (Q - q + 1) - P * (Q - P))
    den = P * (4.0 * P**2 - 6.0 * P * Q + 3.0 * Q**2 - 1.0)
    return num / den


def morelli_mengali(rx, q_parts: int, p_design: int | None = None) -> CfoEstimate:
    """BLUE estimator on a training symbol made of Q identical parts.

    eps = (Q / 2pi) * sum_q w(q) * wrap(arg Psi(q) - arg Psi(q-1)) with
    Psi(q) the lag-qM autocorrelation; range |eps| <= Q/2.
    """
    rx = np.asarray(rx, dtype=complex).reshape(-1)
    n = rx.size
    if n % q_parts:
        raise ValueError("block length must be divisible by the part count")
    if p_design is None:
        p_design = q_parts - 1
    w = mm_weights(q_parts, p_design)
    m = n // q_parts
    psi = np.empty(p_design + 1, dtype=complex)
    for q in range(p_design + 1):
        lag = q * m
        psi[q] = np.sum(rx[lag:] * np.conj(rx[: n - lag])) / (n - lag)
    phases = np.angle(psi)
    phi = np.array([_wrap(phases[q] - phases[q - 1]) for q in range(1, p_design + 1)])
    eps = q_parts / (2.0 * np.pi) * float(np.sum(w * phi))
    return CfoEstimate(eps, "total", 1)


def make_mm_training(n_sub: int, q_parts: int, cp_length: int,
                     rng: np.random.Generator):
    """Training symbol with Q identical parts: PN on bins that are multiples
    of Q, zeros elsewhere, scaled to unit average sample power."""
    if n_sub % q_parts:
        raise ValueError("part count must divide the FFT size")
    grid = np.zeros(n_sub, dtype=complex)
    loaded = np.arange(0, n_sub, q_parts)
    grid[loaded] = np.sqrt(q_parts) * np.exp(
        1j * 0.5 * np.pi * rng.integers(0, 4, loaded.size)
    )
    return add_cp(idft(grid) * np.sqrt(n_sub), cp_length), grid


# ---------------------------------------------------------------------------
# Pilot-tone estimators
# ---------------------------------------------------------------------------

def classen_fine(y_l, y_ld, layout: PilotLayout, d: int, known_pilots,
                 g: float, n_sub: int) -> float:
    """Fine CFO from pilot phase drift across D symbols:

    eps_f = wrap(arg sum_j (Y_{l+D,p} Y*_{l,p})(Z*_{l+D,p} Z_{l,p})) / (2pi D (1+G))
    """
    if d < 1:
        raise ValueError("symbol spacing D must be >= 1")
    bins, _ = layout.cells(n_sub)
    if bins.size == 0:
        raise ValueError("empty pilot layout")
    y_l = np.asarray(y_l, dtype=complex)
    y_ld = np.asarray(y_ld, dtype=complex)
    z = np.asarray(known_pilots, dtype=complex)
    corr = np.sum(y_ld[bins] * np.conj(y_l[bins]) * np.conj(z) * z)
    return float(np.angle(corr) / (2.0 * np.pi * d * (1.0 + g)))


def classen_coarse(stream, cfg: FrameConfig, d: int = 1,
                   trial_step: float = 0.1,
                   trial_range: float | None = None) -> tuple[float, np.ndarray]:
    """Coarse CFO by trial correction: derotate by each eps_trial, FFT two
    symbols D apart and keep the trial maximizing the pilot correlation
    magnitude.  Exhaustive by construction; intended at desk scale.
    """
    if trial_range is None:
        trial_range = cfg.n_sub / 4.0
    trials = np.arange(-trial_range, trial_range + trial_step / 2, trial_step)
    if trials.size == 0:
        raise ValueError("empty trial grid")
    stream = np.asarray(stream, dtype=complex).reshape(-1)
    n_sym = cfg.symbol_length
    if stream.size < (d + 1) * n_sym:
        raise ValueError("need at least D+1 symbols")
    bins = cfg.pilot_bins
    vals = cfg.pilot_values
    n = np.arange(stream.size)
    metrics = np.empty(trials.size)
    for i, eps in enumerate(trials):
        corrected = stream * np.exp(-2j * np.pi * eps * n / cfg.n_sub)
        y0 = dft(corrected[cfg.cp_length : cfg.cp_length + cfg.n_sub])
        start = d * n_sym + cfg.cp_length
        yd = dft(corrected[start : start + cfg.n_sub])
        corr = np.sum(yd[bins] * np.conj(y0[bins]) * np.conj(vals) * vals)
        metrics[i] = np.abs(corr)
    best = int(np.argmax(metrics))
    return float(trials[best]), metrics


def pilot_conj_estimate(pilot_series, g: float, l_block: int | None = None
                        ) -> tuple[float, CfoEstimate]:
    """Conjugate-product estimator on identical pilots across symbols.

    pilot_series has shape (L,) or (L, n_tones); per-tone products
    Y*_{k,l-1} Y_{k,l} are averaged over the block (and combined coherently
    across tones) before the angle.  Returns (phi_hat, estimate) with
    eps = phi_hat / (2 pi (1+G)).
    """
    series = np.asarray(pilot_series, dtype=complex)
    if series.ndim == 1:
        series = series[:, None]
    L = series.shape[0] if l_block is None else l_block
    if L < 2 or series.shape[0] < L:
        raise ValueError("need at least two symbols in the block")
    series = series[:L]
    prod = np.conj(series[:-1]) * series[1:]
    phi = float(np.angle(np.mean(prod)))
    eps = phi / (2.0 * np.pi * (1.0 + g))
    return phi, CfoEstimate(eps, "fractional", L)


def clustered_combine(grid_row, layout: PilotLayout, n_sub: int) -> np.ndarray:
    """Subtract each antipodal cluster in pairs: R_k = Y_k - Y_{k+1}."""
    if layout.scheme != "clustered":
        raise ValueError("layout is not clustered")
    row = np.asarray(grid_row, dtype=complex)
    lefts = np.array(layout.indices, dtype=int) % n_sub
    rights = (lefts + 1) % n_sub
    return row[..., lefts] - row[..., rights]


def clustered_estimate(combined_series, g: float, l_block: int | None = None
                       ) -> tuple[float, CfoEstimate]:
    """Conjugate-product estimator applied to the cluster differences."""
    return pilot_conj_estimate(combined_series, g, l_block)


def sir_pilot(layout_kind: str, epsilon_f: float, n_sub: int) -> float:
    """Analytic pilot SIR from the ICI coefficients (unit pilot power).

    Conventional tone: |L0|^2 / sum_{d!=0} |L_d|^2.  Clustered pair:
    |2 L0 - L1 - L_{-1}|^2 / sum over non-pilot sources |L_d - L_{d-1}|^2.
    Returns inf when the offset is zero (no ICI).
    """
    if epsilon_f == 0.0:
        return float("inf")
    lam = ici_coefficients(epsilon_f, n_sub)
    if layout_kind == "conventional":
        signal = np.abs(lam[0]) ** 2
        interf = float(np.sum(np.abs(lam[1:]) ** 2))
    elif layout_kind == "clustered":
        signal = np.abs(2.0 * lam[0] - lam[1] - lam[-1]) ** 2
        d = np.arange(n_sub)
        mask = (d != 0) & (d != 1)
        diffs = lam[d[mask]] - lam[(d[mask] - 1) % n_sub]
        interf = float(np.sum(np.abs(diffs) ** 2))
    else:
        raise ValueError(f"unknown layout kind {layout_kind!r}")
    return float(signal / interf)
