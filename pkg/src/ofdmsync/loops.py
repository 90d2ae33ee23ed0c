"""Discrete tracking loops.

The second-order type-2 loop is a PI filter feeding a phase accumulator:

    integrator += k_i * theta_e
    theta_hat  += k_p * theta_e + integrator

whose closed-loop phase transfer function is

    H(z) = ((k_p + k_i) z - k_p) / (z^2 - (2 - k_p - k_i) z + (1 - k_p))

with H_e(z) = (z - 1)^2 over the same denominator, so H + H_e = 1
identically.  The dual-bandwidth controller runs the same loop with wide
gains during acquisition and switches to narrow gains once a smoothed
cos(theta_e) lock metric holds above threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

MODE_WIDE = "WIDE"
MODE_NARROW = "NARROW"


@dataclass(frozen=True)
class LoopGains:
    k_p: float
    k_i: float
    theta_n: float
    zeta: float
    alpha_leak: float = 0.9


def type2_gains(theta_n: float, zeta: float, alpha_leak: float = 0.9) -> LoopGains:
    """PI gains from loop bandwidth and damping:

    k_p = 4 zeta theta_n / (1 + 4 zeta theta_n + theta_n^2)
    k_i = 4 theta_n^2   / (1 + 4 zeta theta_n + theta_n^2)
    """
    if theta_n <= 0 or zeta <= 0:
        raise ValueError("loop bandwidth and damping must be positive")
    den = 1.0 + 4.0 * zeta * theta_n + theta_n**2
    return LoopGains(
        k_p=4.0 * zeta * theta_n / den,
        k_i=4.0 * theta_n**2 / den,
        theta_n=theta_n,
        zeta=zeta,
        alpha_leak=alpha_leak,
    )


def closed_loop_poles(gains: LoopGains) -> np.ndarray:
    """Roots of z^2 - (2 - k_p - k_i) z + (1 - k_p)."""
    return np.roots([1.0, -(2.0 - gains.k_p - gains.k_i), 1.0 - gains.k_p])


def transfer_eval(gains: LoopGains, z: complex) -> tuple[complex, complex]:
    """Evaluate (H(z), H_e(z)); raises at a closed-loop pole."""
    den = z**2 - (2.0 - gains.k_p - gains.k_i) * z + (1.0 - gains.k_p)
    if abs(den) < 1e-300:
        raise ZeroDivisionError("evaluation at a closed-loop pole")
    h = ((gains.k_p + gains.k_i) * z - gains.k_p) / den
    h_e = (z - 1.0) ** 2 / den
    return h, h_e


@dataclass
class DualBwConfig:
    """Dual-bandwidth loop parameters (wide acquisition, narrow tracking)."""

    theta_n_wide: float = 0.1
    theta_n_narrow: float = 0.01
    zeta: float = 1.0
    alpha_leak: float = 0.9
    lock_threshold: float = 0.85
    lock_hold: int = 5
    lock_beta: float = 0.9
    lock_hysteresis: float = 0.15

    def __post_init__(self):
        if not self.theta_n_wide >= self.theta_n_narrow > 0:
            raise ValueError("need theta_n_wide >= theta_n_narrow > 0")

    @property
    def wide_gains(self) -> LoopGains:
        return type2_gains(self.theta_n_wide, self.zeta, self.alpha_leak)

    @property
    def narrow_gains(self) -> LoopGains:
        return type2_gains(self.theta_n_narrow, self.zeta, self.alpha_leak)


@dataclass
class LoopState:
    """Loop memory: phase accumulator, PI integrator, leaky PD memory,
    bandwidth mode and lock bookkeeping."""

    theta_hat: float = 0.0
    integrator: float = 0.0
    leak_mem: complex = 0.0 + 0.0j
    mode: str = MODE_WIDE
    lock_metric: float | None = None
    lock_samples: int = 0
    lock_counter: int = 0
    locked: bool = False
    symbol_index: int = 0


def type2_step(state: LoopState, phase_error: float, gains: LoopGains) -> LoopState:
    """One PI + accumulator update."""
    integrator = state.integrator + gains.k_i * phase_error
    theta_hat = state.theta_hat + gains.k_p * phase_error + integrator
    return replace(
        state,
        integrator=integrator,
        theta_hat=theta_hat,
        symbol_index=state.symbol_index + 1,
    )


def type1_step(state: LoopState, phase_error: float, alpha_prime: float) -> LoopState:
    """First-order update theta_hat += alpha' * theta_e; stable for
    0 <= alpha' < 2."""
    if not 0.0 <= alpha_prime < 2.0:
        raise ValueError("alpha' outside the stability range [0, 2)")
    return replace(
        state,
        theta_hat=state.theta_hat + alpha_prime * phase_error,
        symbol_index=state.symbol_index + 1,
    )


def tfdfl_ped(equalized_symbol, decision) -> np.ndarray:
    """Decision-feedback phase-error increment, multiplier free:

    eps = e_Q * sgn(a) - e_I * sgn(b)

    with (a, b) the received I/Q, (I, Q) the decision and e = received -
    decision per axis.  Positive for a small positive rotation.
    """
    y = np.asarray(equalized_symbol, dtype=complex)
    d = np.asarray(decision, dtype=complex)
    e_i = y.real - d.real
    e_q = y.imag - d.imag
    return e_q * np.sign(y.real) - e_i * np.sign(y.imag)


def nco_rotate(stream, state: LoopState, cfg, phase_offset: float = 0.0) -> np.ndarray:
    """Derotate samples by the per-sample increment implied by theta_hat.

    theta_hat is the per-symbol phase drift estimate; sample n is multiplied
    by e^{-j (phase_offset + n * theta_hat / N_sym)}.
    """
    stream = np.asarray(stream, dtype=complex).reshape(-1)
    mu = state.theta_hat / cfg.symbol_length
    n = np.arange(stream.size)
    return stream * np.exp(-1j * (phase_offset + mu * n))


def lock_detect(state: LoopState, phase_error: float, cfg: DualBwConfig
                ) -> tuple[bool, LoopState]:
    """Quadrature lock indication: exponentially smoothed cos(theta_e).

    The metric warms up as a running mean over the first lock_hold samples
    (so a clean stream can lock after exactly lock_hold symbols while pure
    noise cannot trip the detector at startup), then becomes an EMA with
    forgetting factor lock_beta.  Locked once the metric holds above
    lock_threshold for lock_hold consecutive symbols; unlocks with
    hysteresis at lock_threshold - lock_hysteresis.
    """
    q = float(np.cos(phase_error))
    n = state.lock_samples
    if state.lock_metric is None:
        metric = q
    elif n < cfg.lock_hold:
        metric = (state.lock_metric * n + q) / (n + 1)
    else:
        metric = cfg.lock_beta * state.lock_metric + (1.0 - cfg.lock_beta) * q
    counter = state.lock_counter + 1 if metric > cfg.lock_threshold else 0
    locked = state.locked
    if not locked and counter >= cfg.lock_hold:
        locked = True
    elif locked and metric < cfg.lock_threshold - cfg.lock_hysteresis:
        locked = False
        counter = 0
    new_state = replace(
        state,
        lock_metric=metric,
        lock_samples=n + 1,
        lock_counter=counter,
        locked=locked,
    )
    return locked, new_state


def dual_bw_step(state: LoopState, phase_error: float, cfg: DualBwConfig
                 ) -> LoopState:
    """Lock-gated gain switch followed by a type-2 update.

    The PI integrator and leaky memory carry across mode switches; only the
    gains change.
    """
    locked, state = lock_detect(state, phase_error, cfg)
    mode = MODE_NARROW if locked else MODE_WIDE
    state = replace(state, mode=mode)
    gains = cfg.narrow_gains if mode == MODE_NARROW else cfg.wide_gains
    return type2_step(state, phase_error, gains)


def noise_bandwidth(theta_n: float, zeta: float) -> float:
    """Equivalent noise bandwidth B_L = (w_n / 2)(zeta + 1/(4 zeta))."""
    if theta_n <= 0 or zeta <= 0:
        raise ValueError("inputs must be positive")
    return 0.5 * theta_n * (zeta + 1.0 / (4.0 * zeta))


def acquisition_time_pred(delta_omega0: float, zeta: float, b_l: float) -> float:
    """Pull-in time T_p = (dw0)^2 (zeta + 1/(4 zeta))^3 / (16 B_L^3)."""
    if b_l <= 0:
        raise ValueError("noise bandwidth must be positive")
    k = zeta + 1.0 / (4.0 * zeta)
    return delta_omega0**2 * k**3 / (16.0 * b_l**3)
