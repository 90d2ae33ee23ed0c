"""Monte-Carlo experiment engine.

Runs seeded, reproducible BER sweeps, acquisition-time measurements and
constellation captures.  Trials (frames) are independent work units whose
RNG streams derive from (master_seed, grid point, trial index), so results
are bit-identical for any worker count; (bits, errors) reduce by summation.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import (
    FLAT_CHANNEL,
    ChannelRealization,
    apply_cfo,
    apply_channel,
    awgn,
    ebn0_to_noise_var,
    rayleigh_realize,
)
from .config import FrameConfig, clustered_layout, conventional_layout
from .estimators import (
    classen_coarse,
    classen_fine,
    cp_estimate,
    make_mm_training,
    make_repeated_blocks,
    make_sc_training,
    moose_estimate,
    morelli_mengali,
    schmidl_cox_ffo,
    schmidl_cox_ifo,
)
from .loops import DualBwConfig
from .modem import build_frame, demodulate_frame, demap_symbols, dft, tx_scale
from .tracking import TfDflReceiver, TrackingReceiver

TRACKING_SCHEMES = ("type1", "type2_fixed", "type2_dual", "type2_dual_clustered")
FEEDFORWARD_SCHEMES = ("cp", "moose", "sc", "mm", "classen")
ALL_SCHEMES = ("none",) + FEEDFORWARD_SCHEMES + TRACKING_SCHEMES


@dataclass(frozen=True)
class ChannelSpec:
    kind: str = "awgn"
    tau_max: float = 0.5e-6
    profile: str = "exponential"

    def __post_init__(self):
        if self.kind not in ("awgn", "rayleigh"):
            raise ValueError(f"unknown channel kind {self.kind!r}")

    def realize(self, cfg: FrameConfig, rng: np.random.Generator) -> ChannelRealization:
        if self.kind == "awgn":
            return FLAT_CHANNEL
        return rayleigh_realize(self.tau_max, cfg.t_sample, self.profile, rng)

    def label(self) -> str:
        if self.kind == "awgn":
            return "awgn"
        return f"rayleigh:{self.tau_max * 1e6:g}us:{self.profile}"


@dataclass
class ExperimentSpec:
    """One experiment: frame structure, impairments, scheme and budget."""

    cfg: FrameConfig = field(default_factory=lambda: FrameConfig(symbols_per_frame=280))
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    epsilon: float = 0.0
    scheme: str = "none"
    ebn0_grid: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    min_bits: int = 1_000_000
    min_errors: int = 100
    max_bits: int = 40_000_000
    master_seed: int = 1
    warmup_symbols: int | None = None
    loop: DualBwConfig = field(default_factory=DualBwConfig)
    workers: int = 1
    preset: str | None = None

    def __post_init__(self):
        if self.scheme not in ALL_SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if len(self.ebn0_grid) == 0:
            raise ValueError("empty Eb/N0 grid")
        if self.min_errors < 1 or self.min_bits < 1:
            raise ValueError("budgets must be positive")
        if self.scheme == "type2_dual_clustered":
            if self.cfg.pilot_layout.scheme != "clustered":
                self.cfg = replace(self.cfg, pilot_layout=clustered_layout(self.cfg.n_sub))
        elif self.cfg.pilot_layout.scheme == "clustered" and self.scheme != "none":
            self.cfg = replace(self.cfg, pilot_layout=conventional_layout(self.cfg.n_sub))

    @property
    def warmup(self) -> int:
        if self.warmup_symbols is not None:
            return self.warmup_symbols
        return 16 if self.scheme in TRACKING_SCHEMES else 0

    def loop_config(self) -> DualBwConfig:
        if self.scheme == "type2_fixed":
            return replace(self.loop, theta_n_wide=self.loop.theta_n_narrow)
        return self.loop


@dataclass
class BerPoint:
    ebn0_db: float
    bits: int
    errors: int
    low_confidence: bool = False

    @property
    def ber(self) -> float:
        return self.errors / self.bits if self.bits else math.nan


# ---------------------------------------------------------------------------
# Closed-form BER references (independent oracles)
# ---------------------------------------------------------------------------

def q_func(x):
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _pam_bit_error(n_levels: int, bit: int, arg: float) -> float:
    """Exact Gray-coded PAM error probability of bit index `bit` (1-based),
    with `arg` the adjacent-decision Q-function argument d/sigma."""
    total = 0.0
    top = int((1 - 2.0**-bit) * n_levels)
    for i in range(top):
        sign = (-1) ** (i * 2 ** (bit - 1) // n_levels)
        weight = 2 ** (bit - 1) - math.floor(i * 2 ** (bit - 1) / n_levels + 0.5)
        total += sign * weight * q_func((2 * i + 1) * arg)
    return 2.0 / n_levels * total


def ber_awgn_theory(mod_order: int, ebn0_db: float) -> float:
    """Exact Gray-mapped BER on AWGN for BPSK/QPSK/16QAM/64QAM."""
    gamma = 10.0 ** (ebn0_db / 10.0)
    if mod_order in (2, 4):
        return q_func(math.sqrt(2.0 * gamma))
    k = int(math.log2(mod_order))
    levels = 1 << (k // 2)
    # per-axis argument: sqrt(3 k gamma / (M - 1))
    arg = math.sqrt(3.0 * k * gamma / (mod_order - 1))
    per_axis = [_pam_bit_error(levels, b, arg) for b in range(1, k // 2 + 1)]
    return float(np.mean(per_axis))


def ber_rayleigh_theory(mod_order: int, ebn0_db: float) -> float:
    """Flat-Rayleigh BER: AWGN curve averaged over an exponential SNR."""
    gamma_bar = 10.0 ** (ebn0_db / 10.0)
    nodes, weights = np.polynomial.laguerre.laggauss(96)
    vals = [
        ber_awgn_theory(mod_order, 10.0 * math.log10(max(gamma_bar * t, 1e-30)))
        for t in nodes
    ]
    return float(np.sum(weights * np.array(vals)))


def ebn0_at_ber(points: list[BerPoint], target: float = 1e-3) -> float:
    """Interpolate the Eb/N0 crossing of a target BER on a log scale."""
    xs = [p.ebn0_db for p in points]
    ys = [p.ber for p in points]
    for i in range(len(xs) - 1):
        if ys[i] >= target >= ys[i + 1] and ys[i + 1] > 0:
            f = (math.log10(ys[i]) - math.log10(target)) / (
                math.log10(ys[i]) - math.log10(ys[i + 1])
            )
            return xs[i] + f * (xs[i + 1] - xs[i])
    return math.nan


# ---------------------------------------------------------------------------
# Frame simulation
# ---------------------------------------------------------------------------

def _frame_rng(spec: ExperimentSpec, ebn0_db: float, trial: int) -> np.random.Generator:
    point_key = int(round(ebn0_db * 100)) + 10**6
    return np.random.default_rng(
        np.random.SeedSequence([int(spec.master_seed), point_key, int(trial)])
    )


def _vector_demod(stream, cfg, channel, cpe_from_pilots: bool):
    """Vectorized receive: FFT all symbols, equalize, optional per-symbol
    common-phase correction from the pilots, demap data bins."""
    grid = demodulate_frame(stream, cfg)
    h = channel.freq_response(cfg.n_sub)
    used = cfg.used_bins
    eq = grid.copy()
    eq[:, used] = eq[:, used] / h[used]
    if cpe_from_pilots:
        bins, vals = cfg.pilot_layout.cells(cfg.n_sub)
        ref = h[bins] * vals
        cpe = np.angle(np.sum(grid[:, bins] * np.conj(ref)[None, :], axis=1))
        eq = eq * np.exp(-1j * cpe)[:, None]
    return eq, demap_symbols(eq[:, cfg.data_bins].reshape(-1), cfg.mod_order)


def _feedforward_estimate(spec: ExperimentSpec, cfg, stream, rng, clean_refs):
    """Estimate the offset from the scheme's training/redundancy and return
    (epsilon_hat, data_stream) with the training removed."""
    scheme = spec.scheme
    n_sym = cfg.symbol_length
    if scheme == "cp":
        est = cp_estimate(stream, cfg)
        return est.epsilon_hat, stream
    if scheme == "moose":
        n_train = cfg.cp_length + 2 * cfg.n_sub
        rx = stream[:n_train]
        est = moose_estimate(rx[cfg.cp_length :], cfg.n_sub)
        return est.epsilon_hat, stream[n_train:]
    if scheme == "sc":
        n_train = 2 * n_sym
        rx = stream[:n_train]
        pn_diff = clean_refs["pn_diff"]
        sym1 = rx[cfg.cp_length : cfg.cp_length + cfg.n_sub]
        phi, est_f = schmidl_cox_ffo(sym1, cfg.n_sub)
        n = np.arange(rx.size)
        corrected = rx * np.exp(-2j * np.pi * est_f.epsilon_hat * n / cfg.n_sub)
        f1 = dft(corrected[cfg.cp_length : cfg.cp_length + cfg.n_sub])
        f2 = dft(corrected[n_sym + cfg.cp_length : n_sym + cfg.cp_length + cfg.n_sub])
        half_span = cfg.n_sub // 4
        _, eps_i, _ = schmidl_cox_ifo(
            f1, f2, pn_diff, range(-half_span, half_span + 1)
        )
        return est_f.epsilon_hat + eps_i, stream[n_train:]
    if scheme == "mm":
        n_train = n_sym
        rx = stream[:n_train]
        est = morelli_mengali(rx[cfg.cp_length :], q_parts=4)
        return est.epsilon_hat, stream[n_train:]
    if scheme == "classen":
        coarse, _ = classen_coarse(stream[: 2 * n_sym], cfg, d=1, trial_step=0.1)
        n = np.arange(stream.size)
        corrected = stream * np.exp(-2j * np.pi * coarse * n / cfg.n_sub)
        y0 = dft(corrected[cfg.cp_length : cfg.cp_length + cfg.n_sub]) / tx_scale(cfg)
        y1 = dft(corrected[n_sym + cfg.cp_length : n_sym + cfg.cp_length + cfg.n_sub]) / tx_scale(cfg)
        fine = classen_fine(
            y0, y1, cfg.pilot_layout, 1, cfg.pilot_values, cfg.cp_fraction, cfg.n_sub
        )
        return coarse + fine, stream
    raise ValueError(f"not a feed-forward scheme: {scheme}")


def simulate_frame(spec: ExperimentSpec, ebn0_db: float, trial: int,
                   collect=None) -> tuple[int, int]:
    """One frame end to end; returns (bits_counted, bit_errors).

    `collect`, when given, is a dict populated with receiver internals for
    traces and constellation capture.
    """
    cfg = spec.cfg
    rng = _frame_rng(spec, ebn0_db, trial)
    channel = spec.channel.realize(cfg, rng)
    payload = rng.integers(0, 2, cfg.symbols_per_frame * cfg.bits_per_symbol)
    _, stream, ref_bits = build_frame(cfg, payload, rng)

    clean_refs = {}
    if spec.scheme == "moose":
        train, _ = make_repeated_blocks(cfg.n_sub, cfg.cp_length, rng)
        stream = np.concatenate([train, stream])
    elif spec.scheme == "sc":
        train, _, _, pn_diff = make_sc_training(cfg.n_sub, cfg.cp_length, rng)
        clean_refs["pn_diff"] = pn_diff
        stream = np.concatenate([train, stream])
    elif spec.scheme == "mm":
        train, _ = make_mm_training(cfg.n_sub, 4, cfg.cp_length, rng)
        stream = np.concatenate([train, stream])

    rx = apply_channel(stream, channel)
    rx = apply_cfo(rx, spec.epsilon, cfg.n_sub)
    noise_var = ebn0_to_noise_var(ebn0_db, cfg)
    rx = awgn(rx, noise_var, rng)

    scheme = spec.scheme
    if scheme in TRACKING_SCHEMES:
        if scheme == "type1":
            receiver = TfDflReceiver(cfg, channel)
        else:
            layout = cfg.pilot_layout
            receiver = TrackingReceiver(cfg, channel, spec.loop_config(), layout)
        outputs = receiver.run(rx)
        bits = np.concatenate([o.bits for o in outputs[spec.warmup :]])
        ref = ref_bits[spec.warmup * cfg.bits_per_symbol :]
        if collect is not None:
            collect["receiver"] = receiver
            collect["outputs"] = outputs
            collect["stream"] = rx
            collect["channel"] = channel
        return bits.size, int(np.sum(bits != ref))

    if scheme in FEEDFORWARD_SCHEMES:
        eps_hat, data_stream = _feedforward_estimate(spec, cfg, rx, rng, clean_refs)
        n = np.arange(data_stream.size)
        corrected = data_stream * np.exp(-2j * np.pi * eps_hat * n / cfg.n_sub)
        eq, bits = _vector_demod(corrected, cfg, channel, cpe_from_pilots=True)
    else:
        eq, bits = _vector_demod(rx, cfg, channel, cpe_from_pilots=False)

    start = spec.warmup * cfg.bits_per_symbol
    bits = bits[start:]
    ref = ref_bits[start:]
    if collect is not None:
        collect["equalized"] = eq
        collect["channel"] = channel
    return bits.size, int(np.sum(bits != ref))


# ---------------------------------------------------------------------------
# BER points and sweeps
# ---------------------------------------------------------------------------

_BATCH = 4  # frames per stopping-rule check; worker-count independent


def _frame_worker(args):
    spec, ebn0_db, trial = args
    return simulate_frame(spec, ebn0_db, trial)


def run_ber_point(spec: ExperimentSpec, ebn0_db: float) -> BerPoint:
    """Accumulate frames until min_bits AND min_errors (or the bit cap)."""
    bits = errors = 0
    trial = 0
    pool = None
    try:
        if spec.workers > 1:
            pool = ProcessPoolExecutor(max_workers=spec.workers)
        while True:
            batch = [(spec, ebn0_db, trial + i) for i in range(_BATCH)]
            trial += _BATCH
            if pool is not None:
                results = list(pool.map(_frame_worker, batch))
            else:
                results = [_frame_worker(a) for a in batch]
            for b, e in results:
                bits += b
                errors += e
            if bits >= spec.min_bits and errors >= spec.min_errors:
                return BerPoint(ebn0_db, bits, errors)
            if bits >= spec.max_bits:
                return BerPoint(ebn0_db, bits, errors,
                                low_confidence=errors < spec.min_errors)
    finally:
        if pool is not None:
            pool.shutdown()


def run_ber_sweep(spec: ExperimentSpec) -> list[BerPoint]:
    return [run_ber_point(spec, e) for e in spec.ebn0_grid]


# ---------------------------------------------------------------------------
# Acquisition and constellation experiments
# ---------------------------------------------------------------------------

SETTLE_BAND_FLOOR = 0.02  # radians; keeps the 5%-of-final band meaningful at eps ~ 0


def measure_acquisition(spec: ExperimentSpec, ebn0_db: float = 15.0,
                        trial: int = 0):
    """Symbols until the loop's phase output settles within 5% of its final
    value for the rest of a frame.  Returns (l_star, seconds, trace);
    l_star is None when the loop never settles.
    """
    if spec.scheme not in ("type2_fixed", "type2_dual", "type2_dual_clustered"):
        raise ValueError("acquisition measurement needs a type-2 loop scheme")
    collect: dict = {}
    simulate_frame(spec, ebn0_db, trial, collect=collect)
    trace = collect["receiver"].trace
    theta = np.array([t.theta_hat for t in trace])
    final = theta[-1]
    band = max(0.05 * abs(final), SETTLE_BAND_FLOOR)
    outside = np.abs(theta - final) >= band
    if outside.any():
        l_star = int(np.max(np.nonzero(outside)[0])) + 1
    else:
        l_star = 0
    if l_star >= len(theta) - 1:
        return None, math.nan, trace
    return l_star, l_star * spec.cfg.t_symbol, trace


def capture_constellation(spec: ExperimentSpec, stage: str, ebn0_db: float,
                          trial: int = 0) -> list[tuple]:
    """Equalized data-subcarrier values at the requested receiver stage.

    Stages: pre_pll (no correction), post_pll (NCO-corrected, before the
    common-phase rotation), post_phase_correction.
    """
    stages = ("pre_pll", "post_pll", "post_phase_correction")
    if stage not in stages:
        raise ValueError(f"stage must be one of {stages}")
    if stage != "pre_pll" and spec.scheme not in TRACKING_SCHEMES:
        raise ValueError("post-loop stages need a tracking scheme")
    collect: dict = {}
    spec_run = spec
    if stage == "pre_pll":
        spec_run = replace(spec, scheme="none")
    simulate_frame(spec_run, ebn0_db, trial, collect=collect)
    rows = []
    data_bins = spec.cfg.data_bins
    if stage == "pre_pll":
        eq = collect["equalized"]
        for l in range(eq.shape[0]):
            for k in data_bins:
                v = eq[l, k]
                rows.append((stage, l, int(k), float(v.real), float(v.imag)))
        return rows
    outputs = collect["outputs"]
    for l, out in enumerate(outputs):
        row = out.equalized if stage == "post_pll" else out.corrected
        for k in data_bins:
            v = row[k]
            rows.append((stage, l, int(k), float(v.real), float(v.imag)))
    return rows
