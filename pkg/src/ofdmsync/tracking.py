"""Closed-loop per-symbol receivers.

TrackingReceiver implements the pilot-driven type-2 chain: NCO derotation
before the FFT, a phase detector built from the conjugate product of
consecutive pilot observations smoothed by a leaky integrator, the
(optionally dual-bandwidth) PI loop, one-tap equalization with known CSI,
and a per-symbol common-phase derotation from the pilots.

The loop state theta_hat is the per-symbol phase-drift estimate in radians;
the NCO applies theta_hat / N_sym per sample, so theta_hat converges to
2 pi eps (1+G) and eps_hat = theta_hat / (2 pi (1+G)).

At eps = 0.4 with G = 1/4 the true per-symbol drift sits exactly on the
+/-pi wrap of the pilot detector.  During acquisition (WIDE mode) the raw
detector angle is therefore unwrapped onto the 2 pi branch indicated by the
cyclic-prefix correlation of the corrected stream, which measures the same
residual over N_u instead of N_sym samples and is unambiguous for
|eps_res| < 0.5.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization
from .config import FrameConfig, PilotLayout
from .estimators import clustered_combine
from .loops import (
    MODE_WIDE,
    DualBwConfig,
    LoopState,
    dual_bw_step,
    tfdfl_ped,
)
from .modem import decide_symbols, demap_symbols, dft, remove_cp, tx_scale


@dataclass
class TraceRecord:
    symbol: int
    theta_hat: float
    theta_err: float
    eps_hat: float
    mode: str


@dataclass
class SymbolOutput:
    """Per-symbol receiver products for BER counting and plots."""

    equalized: np.ndarray          # after NCO + equalizer, before CPE
    corrected: np.ndarray          # after common-phase derotation
    bits: np.ndarray


class TrackingReceiver:
    """Pilot-aided type-2 CFO tracking chain for one frame."""

    def __init__(
        self,
        cfg: FrameConfig,
        channel: ChannelRealization,
        loop_cfg: DualBwConfig | None = None,
        layout: PilotLayout | None = None,
    ):
        self.cfg = cfg
        self.channel = channel
        self.loop_cfg = loop_cfg or DualBwConfig()
        self.layout = layout or cfg.pilot_layout
        self.state = LoopState()
        self.h = channel.freq_response(cfg.n_sub)
        self.scale = tx_scale(cfg)
        self._nco_phase = 0.0
        self._prev_pd = None
        self._cp_mem = None
        self._symbol = 0
        self.trace: list[TraceRecord] = []
        g = cfg.cp_fraction
        self._drift_per_eps = 2.0 * np.pi * (1.0 + g)
        # first CP sample free of inter-symbol leakage from the previous tail
        self._cp_clean = min(max(channel.n_taps - 1, 0), cfg.cp_length - 1)
        if self.layout.scheme == "clustered":
            lefts = np.asarray(self.layout.indices, dtype=int) % cfg.n_sub
            left_vals = np.asarray(self.layout.values, dtype=complex)
            self._cpe_ref = left_vals * (self.h[lefts] + self.h[(lefts + 1) % cfg.n_sub])
        else:
            bins, vals = self.layout.cells(cfg.n_sub)
            self._cpe_ref = self.h[bins] * vals

    # -- phase detector ----------------------------------------------------

    def _pd_observation(self, grid_row: np.ndarray) -> np.ndarray:
        if self.layout.scheme == "clustered":
            return clustered_combine(grid_row, self.layout, self.cfg.n_sub)
        bins, vals = self.layout.cells(self.cfg.n_sub)
        return grid_row[bins] * np.conj(vals)

    def _cp_drift(self, corrected: np.ndarray) -> float | None:
        """Per-symbol drift implied by the CP correlation of the corrected
        symbol; None until the statistic exists."""
        cfg = self.cfg
        if cfg.cp_length == 0:
            return None
        sl = slice(self._cp_clean, cfg.cp_length)
        prod = np.sum(
            np.conj(corrected[sl]) * corrected[cfg.n_sub + self._cp_clean : cfg.n_sub + cfg.cp_length]
        )
        alpha = self.loop_cfg.alpha_leak
        self._cp_mem = prod if self._cp_mem is None else alpha * self._cp_mem + (1 - alpha) * prod
        return float(np.angle(self._cp_mem)) * cfg.symbol_length / cfg.n_sub

    # -- main chain ---------------------------------------------------------

    def step(self, samples: np.ndarray) -> SymbolOutput:
        """Process one with-CP symbol; updates the loop and returns the
        demapped outputs."""
        cfg = self.cfg
        n_sym = cfg.symbol_length
        if samples.size != n_sym:
            raise ValueError(f"expected {n_sym} samples")
        mu = self.state.theta_hat / n_sym
        phases = self._nco_phase + mu * np.arange(n_sym)
        corrected = samples * np.exp(-1j * phases)
        self._nco_phase = float((self._nco_phase + mu * n_sym) % (2.0 * np.pi))

        cp_drift = self._cp_drift(corrected)
        row = dft(remove_cp(corrected, cfg.cp_length)) / self.scale

        pd_obs = self._pd_observation(row)
        theta_err = 0.0
        if self._prev_pd is not None:
            prod = np.sum(np.conj(self._prev_pd) * pd_obs)
            alpha = self.loop_cfg.alpha_leak
            if self.state.leak_mem == 0:
                leak = prod
            else:
                leak = alpha * self.state.leak_mem + (1 - alpha) * prod
            self.state.leak_mem = leak
            theta_err = float(np.angle(leak))
            if self.state.mode == MODE_WIDE and cp_drift is not None:
                branch = round((cp_drift - theta_err) / (2.0 * np.pi))
                theta_err += 2.0 * np.pi * branch
            self.state = dual_bw_step(self.state, theta_err, self.loop_cfg)
        self._prev_pd = pd_obs

        equalized = row.copy()
        used = cfg.used_bins
        equalized[used] = equalized[used] / self.h[used]

        # residual common phase from the pilots (maximum-ratio combining)
        if self.layout.scheme == "clustered":
            obs = clustered_combine(row, self.layout, cfg.n_sub)
        else:
            obs = row[self.layout.cells(cfg.n_sub)[0]]
        cpe = float(np.angle(np.sum(obs * np.conj(self._cpe_ref))))
        corrected_row = equalized * np.exp(-1j * cpe)
        bits = demap_symbols(corrected_row[cfg.data_bins], cfg.mod_order)

        eps_hat = self.state.theta_hat / self._drift_per_eps
        self.trace.append(
            TraceRecord(self._symbol, self.state.theta_hat, theta_err, eps_hat,
                        self.state.mode)
        )
        self._symbol += 1
        return SymbolOutput(equalized=equalized, corrected=corrected_row, bits=bits)

    def run(self, stream: np.ndarray) -> list[SymbolOutput]:
        rows = np.asarray(stream, dtype=complex).reshape(-1, self.cfg.symbol_length)
        return [self.step(r) for r in rows]


class TfDflReceiver:
    """Decision-feedback dual-loop tracker (time loop + frequency loop).

    Non-data-aided: a first-order time loop drives the pre-FFT derotation
    from the subcarrier-averaged decision-feedback error, and a first-order
    per-subcarrier frequency loop derotates the post-FFT symbols.  Handles
    residual offsets up to about a tenth of the subcarrier spacing.
    """

    def __init__(
        self,
        cfg: FrameConfig,
        channel: ChannelRealization,
        gain_time: float = 0.3,
        gain_freq: float = 0.3,
    ):
        self.cfg = cfg
        self.channel = channel
        self.h = channel.freq_response(cfg.n_sub)
        self.scale = tx_scale(cfg)
        self.gain_time = gain_time
        self.gain_freq = gain_freq
        self.mu = 0.0                     # per-sample increment (rad)
        self.psi = np.zeros(cfg.n_sub)    # per-subcarrier phase (rad)
        self._nco_phase = 0.0
        # decision-feedback slope: d(ped)/d(theta) = E[|I| + |Q|]
        from .modem import map_bits
        k = int(np.log2(cfg.mod_order))
        words = np.arange(cfg.mod_order)
        bits = ((words[:, None] >> np.arange(k - 1, -1, -1)) & 1).reshape(-1)
        pts = map_bits(bits, cfg.mod_order)
        self._slope = float(np.mean(np.abs(pts.real) + np.abs(pts.imag)))
        self.trace: list[float] = []

    def step(self, samples: np.ndarray) -> SymbolOutput:
        cfg = self.cfg
        n_sym = cfg.symbol_length
        phases = self._nco_phase + self.mu * np.arange(n_sym)
        corrected = samples * np.exp(-1j * phases)
        self._nco_phase = float((self._nco_phase + self.mu * n_sym) % (2.0 * np.pi))
        row = dft(remove_cp(corrected, cfg.cp_length)) / self.scale
        used = cfg.used_bins
        row[used] = row[used] / self.h[used]
        data_bins = cfg.data_bins
        derot = row[data_bins] * np.exp(-1j * self.psi[data_bins])
        decisions = decide_symbols(derot, cfg.mod_order)
        err = tfdfl_ped(derot, decisions) / self._slope
        self.psi[data_bins] += self.gain_freq * err
        mean_err = float(np.mean(err))
        self.mu += self.gain_time * mean_err / cfg.symbol_length
        self.trace.append(self.mu * cfg.symbol_length)
        bits = demap_symbols(derot, cfg.mod_order)
        return SymbolOutput(equalized=row, corrected=derot, bits=bits)

    def run(self, stream: np.ndarray) -> list[SymbolOutput]:
        rows = np.asarray(stream, dtype=complex).reshape(-1, self.cfg.symbol_length)
        return [self.step(r) for r in rows]
