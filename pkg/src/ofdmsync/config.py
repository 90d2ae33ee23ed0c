"""OFDM numerology and pilot layout configuration.

Defaults follow the 20 MHz WLAN profile: 64-point FFT, 48 data + 4 pilot
subcarriers, quarter-symbol guard interval, 20 MHz sampling.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

# 20 MHz WLAN profile constants
WLAN_N_SUB = 64
WLAN_CP_FRACTION = 0.25
WLAN_SAMPLE_RATE = 20e6
WLAN_N_DATA = 48

# Logical subcarrier indices (relative to DC) of the 52 used bins.
_USED_LOGICAL = [k for k in range(-26, 27) if k != 0]
# Pilot tones at logical +/-7 and +/-21.
_PILOT_LOGICAL = [-21, -7, 7, 21]
# Clustered variant: two adjacent antipodal pairs with the same 4-cell
# overhead, placed near the conventional outer pilots.
_CLUSTER_STARTS_LOGICAL = [-21, 20]


def logical_to_bin(k: int, n_sub: int) -> int:
    """Map a logical subcarrier index (DC-relative) to an FFT bin in [0, n_sub)."""
    return k % n_sub


@dataclass(frozen=True)
class PilotLayout:
    """Pilot tone placement and values.

    For ``scheme == "conventional"`` each entry of ``indices`` is an isolated
    tone carrying ``values[i]``.  For ``scheme == "clustered"`` each entry is
    the left bin of an adjacent pair (k, k+1) carrying antipodal values
    ``(values[i], -values[i])``.
    """

    scheme: str
    indices: tuple[int, ...]
    values: tuple[complex, ...]

    def __post_init__(self):
        if self.scheme not in ("conventional", "clustered"):
            raise ValueError(f"unknown pilot scheme {self.scheme!r}")
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values must align")

    def cells(self, n_sub: int) -> tuple[np.ndarray, np.ndarray]:
        """All occupied (bin, value) pairs, cluster pairs expanded."""
        if self.scheme == "conventional":
            bins = np.array(self.indices, dtype=int) % n_sub
            vals = np.array(self.values, dtype=complex)
        else:
            bins = []
            vals = []
            for k, v in zip(self.indices, self.values):
                bins.extend([k % n_sub, (k + 1) % n_sub])
                vals.extend([v, -v])
            bins = np.array(bins, dtype=int)
            vals = np.array(vals, dtype=complex)
        if len(np.unique(bins)) != len(bins):
            raise ValueError("pilot cells collide")
        return bins, vals


def conventional_layout(n_sub: int = WLAN_N_SUB) -> PilotLayout:
    idx = tuple(logical_to_bin(k, n_sub) for k in _PILOT_LOGICAL)
    return PilotLayout("conventional", idx, (1.0 + 0.0j,) * len(idx))


def clustered_layout(n_sub: int = WLAN_N_SUB) -> PilotLayout:
    idx = tuple(logical_to_bin(k, n_sub) for k in _CLUSTER_STARTS_LOGICAL)
    return PilotLayout("clustered", idx, (1.0 + 0.0j,) * len(idx))


@dataclass
class FrameConfig:
    """OFDM frame numerology.

    cp_length is derived as round(cp_fraction * n_sub); non-integral products
    are rounded with a warning.
    """

    n_sub: int = WLAN_N_SUB
    cp_fraction: float = WLAN_CP_FRACTION
    n_data: int = WLAN_N_DATA
    pilot_layout: PilotLayout = field(default_factory=conventional_layout)
    mod_order: int = 4
    symbols_per_frame: int = 1
    sample_rate: float = WLAN_SAMPLE_RATE

    def __post_init__(self):
        if self.n_sub <= 0:
            raise ValueError("n_sub must be positive")
        if not 0.0 <= self.cp_fraction < 1.0:
            raise ValueError("cp_fraction must lie in [0, 1)")
        if self.mod_order not in (2, 4, 16, 64):
            raise ValueError(f"unsupported mod_order {self.mod_order}")
        if self.symbols_per_frame <= 0:
            raise ValueError("symbols_per_frame must be positive")
        exact = self.cp_fraction * self.n_sub
        if abs(exact - round(exact)) > 1e-9:
            warnings.warn(
                f"cp_fraction*n_sub = {exact:.3f} is not integral; "
                f"rounding cp length to {round(exact)}",
                stacklevel=2,
            )
        self._check_allocation()

    # -- derived quantities ------------------------------------------------

    @property
    def cp_length(self) -> int:
        return int(round(self.cp_fraction * self.n_sub))

    @property
    def symbol_length(self) -> int:
        return self.n_sub + self.cp_length

    @property
    def bits_per_symbol(self) -> int:
        return self.n_data * int(np.log2(self.mod_order))

    @property
    def t_sample(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def t_symbol(self) -> float:
        return self.symbol_length * self.t_sample

    @property
    def pilot_bins(self) -> np.ndarray:
        return self.pilot_layout.cells(self.n_sub)[0]

    @property
    def pilot_values(self) -> np.ndarray:
        return self.pilot_layout.cells(self.n_sub)[1]

    @property
    def data_bins(self) -> np.ndarray:
        """Data subcarrier bins: the used set minus pilot cells."""
        pilots = set(self.pilot_bins.tolist())
        if self.n_sub == WLAN_N_SUB:
            used = [logical_to_bin(k, self.n_sub) for k in _USED_LOGICAL]
        else:
            # Scale the 802.11a-style allocation: contiguous band around DC,
            # DC nulled, guard band preserved proportionally.
            half = self.n_data // 2 + len(pilots) // 2 + 1
            used = [logical_to_bin(k, self.n_sub) for k in range(-half, half + 1)
                    if k != 0]
        data = [b for b in used if b not in pilots]
        return np.array(data[: self.n_data], dtype=int)

    @property
    def used_bins(self) -> np.ndarray:
        return np.sort(np.concatenate([self.data_bins, self.pilot_bins]))

    @property
    def n_used(self) -> int:
        return self.n_data + len(self.pilot_bins)

    def _check_allocation(self):
        bins = self.pilot_bins
        if np.any(bins < 0) or np.any(bins >= self.n_sub):
            raise ValueError("pilot indices out of range")
        if len(self.data_bins) != self.n_data:
            raise ValueError(
                f"cannot place {self.n_data} data subcarriers with this layout"
            )
