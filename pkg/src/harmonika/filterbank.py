"""Universal harmonic filter bank.

A bank is a family of triangular band-pass filters. One shared log-spaced
base grid carries F = floor(B * log2(f_max / f_min)) center frequencies
f_c^k = f_min * 2^(k/B), with f_max = f_s / (2H) so that every scaled
center stays below Nyquist. Slice h (harmonic order h, optionally
preceded by a half-harmonic at h = 0.5) places its filters at exactly
h * f_c^k, which keeps bin k of every slice an exact integer (or half)
multiple of bin k of the first harmonic - the property a plain
constant-Q grid only has for h = 2^d.

Filter widths follow the equivalent-rectangular-bandwidth law
f_bw = 0.1079 * f + 24.7 evaluated at the slice's own center, divided by
a learnable gamma clamped to >= 1, so learning can only narrow filters:

    w(f) = max(0, 1 - 2|f - h f_c| / f_bw^h),   f_bw^h = erb(h f_c) / max(gamma, 1)

Projecting a magnitude spectrogram through the bank yields the harmonic
tensor [slices, F, frames] consumed by the discriminator network.

Exactness note: base-grid mantissas are truncated to 49 bits (relative
perturbation < 1.4e-15) so every h * f_c^k is computed without rounding
and center ratios across slices divide back to h bitwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, SizeError
from .spectral import ComplexSpectrogram

ERB_SLOPE = 0.1079
ERB_OFFSET = 24.7

_MANTISSA_BITS = 49  # leaves 4 spare bits: 10 * m stays exact in float64


def _truncate_mantissa(values: np.ndarray) -> np.ndarray:
    m, e = np.frexp(values)
    return np.ldexp(np.round(m * 2.0 ** _MANTISSA_BITS) / 2.0 ** _MANTISSA_BITS, e)


def erb_hz(f_hz) -> np.ndarray | float:
    """Equivalent rectangular bandwidth at a given center frequency."""
    return ERB_SLOPE * f_hz + ERB_OFFSET


@dataclass(frozen=True)
class HarmonicBankConfig:
    f_min: float = 32.7
    bins_per_octave: int = 24
    num_harmonics: int = 10
    include_half: bool = True
    sample_rate: int = 24000
    per_slice_gamma: bool = False
    log_compress: bool = False

    def __post_init__(self):
        if self.f_min <= 0:
            raise ConfigError(f"f_min must be positive, got {self.f_min}")
        if self.bins_per_octave < 1 or self.num_harmonics < 1:
            raise ConfigError("bins_per_octave and num_harmonics must be >= 1")
        if self.f_max <= self.f_min:
            raise ConfigError(
                f"f_max = f_s/(2H) = {self.f_max:.2f} Hz must exceed "
                f"f_min = {self.f_min:.2f} Hz"
            )

    @property
    def f_max(self) -> float:
        return self.sample_rate / (2.0 * self.num_harmonics)

    @property
    def harmonic_orders(self) -> tuple:
        head = (0.5,) if self.include_half else ()
        return head + tuple(float(h) for h in range(1, self.num_harmonics + 1))


@dataclass(frozen=True)
class HarmonicFilterBank:
    """Immutable bank; gamma updates return a new bank (copy-on-update)."""

    config: HarmonicBankConfig
    gamma: np.ndarray  # stored unclamped; scalar () or per-slice (S,)
    num_bins: int = field(init=False)
    centers: np.ndarray = field(init=False)  # [slices, F], exact h * base
    harmonic_orders: tuple = field(init=False)

    def __post_init__(self):
        cfg = self.config
        num_bins = int(np.floor(
            cfg.bins_per_octave * np.log2(cfg.f_max / cfg.f_min)
        ))
        if num_bins < 1:
            raise ConfigError("frequency range too narrow for a single bin")
        base = _truncate_mantissa(
            cfg.f_min * 2.0 ** (np.arange(num_bins) / cfg.bins_per_octave)
        )
        orders = cfg.harmonic_orders
        centers = np.asarray(orders)[:, None] * base[None, :]
        if centers.max() > cfg.sample_rate / 2.0:
            raise ConfigError("top harmonic center exceeds Nyquist")
        gamma = np.asarray(self.gamma, dtype=np.float64)
        expected = (len(orders),) if cfg.per_slice_gamma else ()
        if gamma.shape != expected:
            raise ConfigError(f"gamma shape {gamma.shape}, expected {expected}")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "num_bins", num_bins)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "harmonic_orders", orders)

    @property
    def num_slices(self) -> int:
        return len(self.harmonic_orders)

    @property
    def base_grid(self) -> np.ndarray:
        idx = self.harmonic_orders.index(1.0)
        return self.centers[idx]

    def effective_gamma(self) -> np.ndarray:
        """The clamp gamma* = max(gamma, 1) used everywhere bandwidths matter."""
        return np.maximum(self.gamma, 1.0)

    def slice_index(self, order: float) -> int:
        try:
            return self.harmonic_orders.index(float(order))
        except ValueError:
            raise ConfigError(f"order {order} not in bank {self.harmonic_orders}")

    def gamma_for_order(self, order: float) -> float:
        g = self.effective_gamma()
        if self.config.per_slice_gamma:
            return float(g[self.slice_index(order)])
        return float(g)

    def bandwidth(self, h: float, f_c) -> np.ndarray | float:
        """f_bw^h = erb(h * f_c) / gamma*, f_c being the base-grid center."""
        if np.any(np.asarray(f_c) <= 0):
            raise ConfigError("center frequency must be positive")
        return erb_hz(h * np.asarray(f_c, dtype=np.float64)) / self.gamma_for_order(h)

    def bandwidths(self) -> np.ndarray:
        """[slices, F] bandwidth table at the current gamma."""
        g = self.effective_gamma()
        if not self.config.per_slice_gamma:
            g = np.full(self.num_slices, float(g))
        return erb_hz(self.centers) / g[:, None]

    def filter_response(self, slice_idx: int, bin_idx: int, f) -> np.ndarray | float:
        """Triangle weight [1 - 2|f - h f_c| / f_bw]_+ for one filter."""
        c = self.centers[slice_idx, bin_idx]
        bw = self.bandwidths()[slice_idx, bin_idx]
        f = np.asarray(f, dtype=np.float64)
        resp = 1.0 - 2.0 * np.abs(f - c) / bw
        out = np.maximum(resp, 0.0)
        return float(out) if out.ndim == 0 else out

    def with_gamma(self, gamma) -> "HarmonicFilterBank":
        return replace(self, gamma=np.asarray(gamma, dtype=np.float64))


def build_bank(cfg: HarmonicBankConfig) -> HarmonicFilterBank:
    """Construct a bank with gamma at its initial value 1."""
    gamma = np.ones(len(cfg.harmonic_orders)) if cfg.per_slice_gamma else np.float64(1.0)
    return HarmonicFilterBank(config=cfg, gamma=gamma)


@dataclass(frozen=True)
class HarmonicTensor:
    """Real [slices, F, frames] projection of a magnitude spectrogram."""

    values: np.ndarray
    harmonic_orders: tuple
    frame_hop_s: float

    def __post_init__(self):
        if self.values.ndim != 3:
            raise SizeError(f"expected [slices, bins, frames], got {self.values.shape}")
        if self.values.shape[0] != len(self.harmonic_orders):
            raise SizeError("slice count does not match harmonic orders")


def _weight_matrices(bank: HarmonicFilterBank, bin_hz: float, num_stft_bins: int):
    """Sparse triangle weights W and their support indicator S, [S*F, bins].

    Rows whose triangle is narrower than the STFT bin spacing and captures
    no bin center fall back to a single apex entry of weight 1 at the
    nearest bin, so no filter ever vanishes from the projection.
    """
    freqs = np.arange(num_stft_bins) * bin_hz
    centers = bank.centers
    bw = bank.bandwidths()
    rows, cols, weights = [], [], []
    n_slices, n_bins = centers.shape
    for s in range(n_slices):
        for k in range(n_bins):
            c, width = centers[s, k], bw[s, k]
            lo = int(np.ceil((c - width / 2.0) / bin_hz))
            hi = int(np.floor((c + width / 2.0) / bin_hz))
            lo, hi = max(lo, 0), min(hi, num_stft_bins - 1)
            idx = np.arange(lo, hi + 1)
            w = 1.0 - 2.0 * np.abs(freqs[idx] - c) / width
            keep = w > 0.0
            idx, w = idx[keep], w[keep]
            if idx.size == 0:
                idx = np.array([min(int(round(c / bin_hz)), num_stft_bins - 1)])
                w = np.array([1.0])
            row = s * n_bins + k
            rows.append(np.full(idx.size, row))
            cols.append(idx)
            weights.append(w)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    weights = np.concatenate(weights)
    shape = (n_slices * n_bins, num_stft_bins)
    w_mat = sp.csr_matrix((weights, (rows, cols)), shape=shape)
    s_mat = sp.csr_matrix((np.ones_like(weights), (rows, cols)), shape=shape)
    return w_mat, s_mat


def _check_rate(bank: HarmonicFilterBank, spec: ComplexSpectrogram) -> None:
    inferred = spec.sample_rate
    if abs(inferred - bank.config.sample_rate) > 1e-6 * bank.config.sample_rate:
        raise ConfigError(
            f"spectrogram sample rate {inferred:.3f} Hz does not match "
            f"bank config {bank.config.sample_rate} Hz"
        )


def project(bank: HarmonicFilterBank, spec: ComplexSpectrogram) -> HarmonicTensor:
    """Weight the magnitude spectrogram by every filter: the harmonic tensor.

    values[s, k, t] = sum_b w_{s,k}(b * bin_hz) * |X(b, t)|, optionally
    log1p-compressed when the bank config asks for it.
    """
    _check_rate(bank, spec)
    w_mat, _ = _weight_matrices(bank, spec.bin_hz, spec.bins)
    mag = np.abs(spec.values)
    flat = w_mat @ mag
    values = flat.reshape(bank.num_slices, bank.num_bins, spec.frames)
    if bank.config.log_compress:
        values = np.log1p(values)
    return HarmonicTensor(
        values=values,
        harmonic_orders=bank.harmonic_orders,
        frame_hop_s=spec.frame_hop_s,
    )


def gamma_gradient(bank: HarmonicFilterBank, spec: ComplexSpectrogram,
                   upstream: np.ndarray):
    """Analytic d(sum upstream * tensor)/d(gamma).

    On the triangle support, w = 1 - 2|f - c| gamma* / erb(c), so
    dw/dgamma* = (w - 1) / gamma*; entries off the support contribute 0,
    and the clamp gate passes gradient only where the stored gamma >= 1.
    """
    _check_rate(bank, spec)
    shape = (bank.num_slices, bank.num_bins, spec.frames)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != shape:
        raise SizeError(f"upstream shape {upstream.shape}, expected {shape}")
    w_mat, s_mat = _weight_matrices(bank, spec.bin_hz, spec.bins)
    mag = np.abs(spec.values)
    proj = (w_mat @ mag).reshape(shape)
    support = (s_mat @ mag).reshape(shape)
    if bank.config.log_compress:
        upstream = upstream / (1.0 + proj)
    per_entry = upstream * (proj - support)
    gamma = np.atleast_1d(bank.gamma)
    g_eff = np.maximum(gamma, 1.0)
    gate = (gamma >= 1.0).astype(np.float64)
    if bank.config.per_slice_gamma:
        grad = gate / g_eff * per_entry.sum(axis=(1, 2))
        return grad
    return float(gate[0] / g_eff[0] * per_entry.sum())


def dump_bank(bank: HarmonicFilterBank, path) -> None:
    """JSON description: config, gamma, bin count, per-slice centers."""
    doc = {
        "f_min": bank.config.f_min,
        "bins_per_octave": bank.config.bins_per_octave,
        "num_harmonics": bank.config.num_harmonics,
        "include_half": bank.config.include_half,
        "sample_rate": bank.config.sample_rate,
        "per_slice_gamma": bank.config.per_slice_gamma,
        "log_compress": bank.config.log_compress,
        "gamma": bank.gamma.tolist(),
        "num_bins": bank.num_bins,
        "harmonic_orders": list(bank.harmonic_orders),
        "centers_hz": [row.tolist() for row in bank.centers],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def dump_tensor(tensor: HarmonicTensor, bin_path, sidecar_path,
                csv_path=None, csv_limit_bytes: int = 1 << 20) -> None:
    """Flat float32 little-endian dump in [slice][bin][frame] order + sidecar.

    A CSV copy (frame-major rows of the flattened [slice*bin] axis) is
    written only when the float32 payload fits under csv_limit_bytes.
    """
    payload = tensor.values.astype("<f4")
    with open(bin_path, "wb") as fh:
        fh.write(payload.tobytes(order="C"))
    meta = {
        "shape": list(tensor.values.shape),
        "order": "slice,bin,frame",
        "dtype": "float32-le",
        "harmonic_orders": list(tensor.harmonic_orders),
        "frame_hop_s": tensor.frame_hop_s,
    }
    with open(sidecar_path, "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    if csv_path is not None and payload.nbytes <= csv_limit_bytes:
        s, f, t = tensor.values.shape
        np.savetxt(csv_path, tensor.values.reshape(s * f, t).T,
                   delimiter=",", fmt="%.17g")
