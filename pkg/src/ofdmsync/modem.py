"""Constellation mapping, DFT/IDFT, cyclic prefix handling and frame assembly.

Scaling convention: the IDFT carries the 1/N factor and the DFT carries none,
so dft(idft(Z)) == Z.  Constellations are normalized to unit average energy at
the mapper.
"""
from __future__ import annotations

import numpy as np

from .config import FrameConfig

_SUPPORTED_ORDERS = (2, 4, 16, 64)


def _gray_code(n: int) -> np.ndarray:
    i = np.arange(n)
    return i ^ (i >> 1)


def _pam_levels(n_levels: int) -> np.ndarray:
    """Gray-ordered PAM amplitudes, unit average energy per complex symbol
    when used on both axes (half energy per axis)."""
    d = np.sqrt(1.5 / (n_levels**2 - 1))
    # level for gray-coded bit word g: descending so the all-zeros word maps
    # to the most positive amplitude (bit 0 -> +, matching BPSK 0 -> +1)
    amps = (n_levels - 1 - 2 * np.arange(n_levels)) * d
    out = np.empty(n_levels)
    out[_gray_code(n_levels)] = amps
    return out


def _bits_to_ints(bits: np.ndarray, width: int) -> np.ndarray:
    b = bits.reshape(-1, width)
    weights = 1 << np.arange(width - 1, -1, -1)
    return b @ weights


def _ints_to_bits(ints: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width - 1, -1, -1)
    return ((ints[:, None] >> shifts) & 1).reshape(-1).astype(np.int8)


def map_bits(bits, mod_order: int) -> np.ndarray:
    """Gray-map a bit vector onto unit-average-energy M-PSK/M-QAM symbols.

    BPSK maps 0 -> +1, 1 -> -1.  For square QAM the first half of each bit
    word selects the I level and the second half the Q level, each Gray coded.
    """
    if mod_order not in _SUPPORTED_ORDERS:
        raise ValueError(f"unsupported mod_order {mod_order}")
    bits = np.asarray(bits, dtype=np.int8).reshape(-1)
    k = int(np.log2(mod_order))
    if bits.size % k:
        raise ValueError(f"bit count {bits.size} not divisible by log2(M)={k}")
    if mod_order == 2:
        return (1.0 - 2.0 * bits).astype(complex)
    half = k // 2
    levels = _pam_levels(1 << half)
    words = bits.reshape(-1, k)
    i_idx = _bits_to_ints(words[:, :half], half)
    q_idx = _bits_to_ints(words[:, half:], half)
    return levels[i_idx] + 1j * levels[q_idx]


def demap_symbols(rx, mod_order: int) -> np.ndarray:
    """Hard-decision minimum-distance demapper, inverse of map_bits."""
    if mod_order not in _SUPPORTED_ORDERS:
        raise ValueError(f"unsupported mod_order {mod_order}")
    rx = np.asarray(rx, dtype=complex).reshape(-1)
    if mod_order == 2:
        return (rx.real < 0).astype(np.int8)
    k = int(np.log2(mod_order))
    half = k // 2
    levels = _pam_levels(1 << half)

    def slice_axis(x):
        idx = np.argmin(np.abs(x[:, None] - levels[None, :]), axis=1)
        return _ints_to_bits(idx, half).reshape(-1, half)

    i_bits = slice_axis(rx.real)
    q_bits = slice_axis(rx.imag)
    return np.concatenate([i_bits, q_bits], axis=1).reshape(-1)


def decide_symbols(rx, mod_order: int) -> np.ndarray:
    """Nearest constellation point for each received value."""
    return map_bits(demap_symbols(rx, mod_order), mod_order)


def idft(grid_row) -> np.ndarray:
    """Inverse DFT with the 1/N factor: z_n = (1/N) sum_m Z_m e^{j2pi nm/N}."""
    z = np.asarray(grid_row, dtype=complex)
    return np.fft.ifft(z, axis=-1)


def dft(time_row) -> np.ndarray:
    """Forward DFT without scaling: Y_k = sum_n y_n e^{-j2pi nk/N}."""
    y = np.asarray(time_row, dtype=complex)
    return np.fft.fft(y, axis=-1)


def add_cp(symbol, cp_length: int) -> np.ndarray:
    """Prepend the last cp_length samples as a cyclic prefix."""
    symbol = np.asarray(symbol, dtype=complex)
    n = symbol.shape[-1]
    if not 0 <= cp_length <= n:
        raise ValueError(f"cp_length {cp_length} out of range [0, {n}]")
    if cp_length == 0:
        return symbol.copy()
    return np.concatenate([symbol[..., n - cp_length:], symbol], axis=-1)


def remove_cp(symbol, cp_length: int) -> np.ndarray:
    """Drop the first cp_length samples."""
    symbol = np.asarray(symbol, dtype=complex)
    if not 0 <= cp_length < symbol.shape[-1] or symbol.shape[-1] == 0:
        raise ValueError("cp_length out of range for input length")
    return symbol[..., cp_length:].copy()


def tx_scale(cfg: FrameConfig) -> float:
    """Amplitude factor that brings the time stream to unit average power.

    With the 1/N IDFT and unit-energy constellations, a symbol loading
    n_used bins has sample power n_used/N^2.
    """
    return cfg.n_sub / np.sqrt(cfg.n_used)


def build_frame(cfg: FrameConfig, payload_bits, rng=None):
    """Assemble a frame: map payload, insert pilots, IDFT + CP per symbol.

    Returns (grid, stream, ref_bits) where grid is the L x N frequency grid,
    stream the concatenated unit-average-power time samples with CP, and
    ref_bits the payload echoed back for BER bookkeeping.
    """
    payload_bits = np.asarray(payload_bits, dtype=np.int8).reshape(-1)
    L = cfg.symbols_per_frame
    expected = L * cfg.bits_per_symbol
    if payload_bits.size != expected:
        raise ValueError(
            f"payload must be {expected} bits for {L} symbols, got {payload_bits.size}"
        )
    data = map_bits(payload_bits, cfg.mod_order).reshape(L, cfg.n_data)
    grid = np.zeros((L, cfg.n_sub), dtype=complex)
    grid[:, cfg.data_bins] = data
    grid[:, cfg.pilot_bins] = cfg.pilot_values[None, :]
    time = idft(grid)
    with_cp = add_cp(time, cfg.cp_length)
    stream = (with_cp * tx_scale(cfg)).reshape(-1)
    return grid, stream, payload_bits.copy()


def split_symbols(stream, cfg: FrameConfig) -> np.ndarray:
    """Reshape a concatenated with-CP stream into (L, N_sym) rows."""
    stream = np.asarray(stream, dtype=complex).reshape(-1)
    n_sym = cfg.symbol_length
    if stream.size % n_sym:
        raise ValueError("stream length is not a whole number of symbols")
    return stream.reshape(-1, n_sym)


def demodulate_frame(stream, cfg: FrameConfig) -> np.ndarray:
    """Strip CPs, FFT each symbol and undo the transmit power scaling.

    Returns the received L x N frequency grid (channel still applied).
    """
    rows = split_symbols(stream, cfg)
    useful = remove_cp(rows, cfg.cp_length)
    return dft(useful) / tx_scale(cfg)


def extract_payload_bits(grid, cfg: FrameConfig) -> np.ndarray:
    """Demap the data subcarriers of an equalized grid."""
    data = np.asarray(grid, dtype=complex)[:, cfg.data_bins]
    return demap_symbols(data.reshape(-1), cfg.mod_order)


def papr(stream) -> float:
    """Peak-to-average power ratio max|z|^2 / mean|z|^2 (linear)."""
    z = np.asarray(stream, dtype=complex).reshape(-1)
    if z.size == 0:
        raise ValueError("empty stream")
    p = np.abs(z) ** 2
    return float(p.max() / p.mean())
