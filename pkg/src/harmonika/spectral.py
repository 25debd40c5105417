"""STFT and naive constant-Q analysis.

Both transforms share one temporal grid: analysis instants sit at
t = frame * hop samples of the original signal, realized by reflect-padding
so every window is centered on its instant. Frame count for a length-L
signal is therefore 1 + L // hop regardless of window length.

The constant-Q transform here is the textbook per-bin windowed DFT with
Q = 1 / (2^(1/B) - 1) and per-bin window lengths N_k = ceil(Q * f_s / f_c^k).
It exists to contrast grid geometry with the harmonic filter bank, not for
throughput.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioBuffer
from .errors import ConfigError, NyquistError, SizeError

WINDOWS = ("hann", "rectangular")


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 2048
    hop_size: int = 256
    window: str = "hann"

    def __post_init__(self):
        n = self.fft_size
        if n < 2 or (n & (n - 1)) != 0:
            raise ConfigError(f"fft_size must be a power of two, got {n}")
        if not 0 < self.hop_size <= n:
            raise ConfigError(f"hop_size must be in (0, fft_size], got {self.hop_size}")
        if self.window not in WINDOWS:
            raise ConfigError(f"window must be one of {WINDOWS}, got {self.window!r}")


@dataclass(frozen=True)
class ComplexSpectrogram:
    """One-sided STFT values, shape [bins, frames]."""

    values: np.ndarray
    bin_hz: float
    frame_hop_s: float

    def __post_init__(self):
        if self.values.ndim != 2:
            raise SizeError(f"expected [bins, frames] matrix, got {self.values.shape}")

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]

    @property
    def sample_rate(self) -> float:
        # bins = N/2 + 1, bin_hz = f_s/N  =>  f_s = 2 * bin_hz * (bins - 1)
        return 2.0 * self.bin_hz * (self.bins - 1)


def _window(kind: str, n: int) -> np.ndarray:
    if kind == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    return np.ones(n)


def _frame_starts(num_samples: int, hop: int) -> int:
    return 1 + num_samples // hop


def stft(buf: AudioBuffer, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """One-sided STFT on the shared centered frame grid.

    Bin k of frame t holds sum_n x(n) w(n) e^{-j 2 pi k n / N} over the
    window centered on sample t*hop (reflect padding supplies the edges).
    """
    x = buf.samples
    n = cfg.fft_size
    if len(x) < n:
        raise SizeError(f"buffer length {len(x)} shorter than fft_size {n}")
    pad = n // 2
    xp = np.pad(x, pad, mode="reflect")
    frames = _frame_starts(len(x), cfg.hop_size)
    win = _window(cfg.window, n)
    view = np.lib.stride_tricks.sliding_window_view(xp, n)[::cfg.hop_size][:frames]
    spec = np.fft.rfft(view * win, axis=1).T
    return ComplexSpectrogram(
        values=spec,
        bin_hz=buf.sample_rate / n,
        frame_hop_s=cfg.hop_size / buf.sample_rate,
    )


@dataclass(frozen=True)
class CqtGrid:
    """Log-spaced constant-Q analysis grid.

    Center of bin k is f_min * 2^(k/B); all bins share
    Q = f_c / f_bw = 1 / (2^(1/B) - 1). Window lengths shrink with
    frequency: N_k = ceil(Q * f_s / f_c^k).
    """

    f_min: float = 32.7
    bins_per_octave: int = 24
    num_bins: int = 204
    sample_rate: int = 24000
    q_factor: float = field(init=False)
    centers: np.ndarray = field(init=False)
    window_lengths: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.f_min <= 0 or self.bins_per_octave < 1 or self.num_bins < 1:
            raise ConfigError("f_min, bins_per_octave and num_bins must be positive")
        b = self.bins_per_octave
        q = 1.0 / (2.0 ** (1.0 / b) - 1.0)
        centers = self.f_min * 2.0 ** (np.arange(self.num_bins) / b)
        lengths = np.ceil(q * self.sample_rate / centers).astype(np.int64)
        if self.num_bins > 1 and not np.all(np.diff(lengths) < 0):
            raise ConfigError("window lengths not strictly decreasing; grid too dense")
        object.__setattr__(self, "q_factor", q)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "window_lengths", lengths)

    @property
    def bandwidths(self) -> np.ndarray:
        return self.centers / self.q_factor

    def nyquist_ok(self) -> bool:
        top = self.centers[-1] * (1.0 + 1.0 / (2.0 * self.q_factor))
        return bool(top <= self.sample_rate / 2)


def max_nyquist_bins(f_min: float, bins_per_octave: int, sample_rate: int) -> int:
    """Largest bin count whose top filter stays below half the sample rate."""
    q = 1.0 / (2.0 ** (1.0 / bins_per_octave) - 1.0)
    limit = (sample_rate / 2) / (1.0 + 1.0 / (2.0 * q))
    if limit <= f_min:
        raise ConfigError("no CQT bin fits below Nyquist")
    return 1 + int(math.floor(bins_per_octave * math.log2(limit / f_min)))


def cqt(buf: AudioBuffer, grid: CqtGrid, hop_size: int = 256) -> np.ndarray:
    """Direct per-bin windowed DFT (Eq.-level naive CQT), [num_bins, frames].

    Every bin uses a Hann window of its own length N_k, centered on the
    shared frame instants t*hop; values carry the 1/N_k normalization.
    """
    if grid.sample_rate != buf.sample_rate:
        raise ConfigError(
            f"grid sample rate {grid.sample_rate} != buffer rate {buf.sample_rate}"
        )
    if not grid.nyquist_ok():
        raise NyquistError(
            f"top CQT bin at {grid.centers[-1]:.1f} Hz exceeds Nyquist "
            f"({buf.sample_rate / 2:.1f} Hz) including its half-bandwidth"
        )
    x = buf.samples
    n_max = int(grid.window_lengths[0])
    if len(x) < n_max:
        raise SizeError(f"buffer length {len(x)} shorter than longest window {n_max}")
    pad_l = n_max // 2
    pad_r = n_max - pad_l
    xp = np.pad(x, (pad_l, pad_r), mode="reflect")
    frames = _frame_starts(len(x), hop_size)
    out = np.empty((grid.num_bins, frames), dtype=np.complex128)
    starts = np.arange(frames) * hop_size + pad_l
    for k in range(grid.num_bins):
        n_k = int(grid.window_lengths[k])
        phase = np.arange(n_k)
        kernel = (_window("hann", n_k) / n_k) * np.exp(
            -2j * np.pi * grid.q_factor * phase / n_k
        )
        view = np.lib.stride_tricks.sliding_window_view(xp, n_k)
        out[k] = view[starts - n_k // 2] @ kernel
    return out


def cqt_harmonic_coverage(grid: CqtGrid, h: float) -> float:
    """Octave distance from the h-th harmonic of bin 0 to the nearest grid bin.

    Zero exactly when h * f_c^0 lands on the grid, which happens only for
    h = 2^d; odd harmonics always miss by a fraction of a grid step.
    """
    if h < 1:
        raise ConfigError(f"harmonic order must be >= 1, got {h}")
    target = math.log2(h * grid.centers[0])
    return float(np.min(np.abs(target - np.log2(grid.centers))))


def dump_spectrogram(spec: ComplexSpectrogram, csv_path, sidecar_path) -> None:
    """Frame-major CSV of magnitudes plus a JSON shape sidecar."""
    np.savetxt(csv_path, np.abs(spec.values).T, delimiter=",", fmt="%.17g")
    meta = {
        "bins": spec.bins,
        "frames": spec.frames,
        "bin_hz": spec.bin_hz,
        "hop_s": spec.frame_hop_s,
    }
    with open(sidecar_path, "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
