"""WAV ingestion, writing, and sample-rate conversion.

Reads RIFF/WAVE files holding PCM16 or IEEE float32 samples. Stereo input
is averaged down to mono; PCM16 is scaled by 1/32768 so full negative
scale maps to -1.0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.signal import resample_poly

from .errors import ConfigError, FormatError, SizeError, UnsupportedFormatError

_PCM = 1
_IEEE_FLOAT = 3
_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioBuffer:
    """Mono signal with its sampling rate.

    samples are dimensionless amplitudes, nominally within [-1, 1];
    sample_rate is in Hz.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise SizeError(f"expected mono 1-D samples, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise FormatError("non-finite sample values")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


def load_wav(path) -> AudioBuffer:
    """Read a RIFF/WAVE file into an AudioBuffer.

    Supports PCM16 and IEEE float32 (plus WAVE_FORMAT_EXTENSIBLE wrapping
    either). Raises FormatError on malformed containers and
    UnsupportedFormatError on other encodings.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise FormatError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if len(body) < size:
                raise FormatError(f"{path}: data chunk shorter than declared")
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or payload is None:
        raise FormatError(f"{path}: missing fmt or data chunk")

    tag, channels, rate, _byte_rate, _block_align, bits = fmt
    if tag == _EXTENSIBLE:
        # sub-format GUID starts with the effective format tag
        raw = data  # already consumed; re-find fmt body for the GUID
        tag = _guid_subformat(raw)
    if channels < 1:
        raise FormatError(f"{path}: zero channels")

    if tag == _PCM and bits == 16:
        frames = np.frombuffer(payload, dtype="<i2")
        samples = frames.astype(np.float64) / 32768.0
    elif tag == _IEEE_FLOAT and bits == 32:
        frames = np.frombuffer(payload, dtype="<f4")
        samples = frames.astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"{path}: unsupported encoding (format tag {tag}, {bits}-bit)"
        )

    usable = (len(samples) // channels) * channels
    samples = samples[:usable].reshape(-1, channels)
    if channels > 1:
        samples = samples.mean(axis=1)
    else:
        samples = samples[:, 0]
    return AudioBuffer(samples=samples, sample_rate=int(rate))


def _guid_subformat(data: bytes) -> int:
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        if cid == b"fmt ":
            if size < 40:
                raise FormatError("extensible fmt chunk too short")
            (sub,) = struct.unpack_from("<H", data, pos + 8 + 24)
            return sub
        pos += 8 + size + (size & 1)
    raise FormatError("missing fmt chunk")


def save_wav(path, buf: AudioBuffer, encoding: str = "pcm16") -> None:
    """Write an AudioBuffer as RIFF/WAVE, PCM16 or float32."""
    x = buf.samples
    if encoding == "pcm16":
        tag, bits = _PCM, 16
        clipped = np.clip(x, -1.0, 32767.0 / 32768.0)
        payload = (np.round(clipped * 32768.0).astype("<i2")).tobytes()
    elif encoding == "float32":
        tag, bits = _IEEE_FLOAT, 32
        payload = x.astype("<f4").tobytes()
    else:
        raise UnsupportedFormatError(f"unknown encoding {encoding!r}")

    block_align = bits // 8
    fmt = struct.pack(
        "<HHIIHH", tag, 1, buf.sample_rate, buf.sample_rate * block_align,
        block_align, bits,
    )
    chunks = b"".join([
        b"fmt ", struct.pack("<I", len(fmt)), fmt,
        b"data", struct.pack("<I", len(payload)), payload,
        b"\x00" if len(payload) & 1 else b"",
    ])
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks)


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Band-limited rational resampling (polyphase windowed-sinc FIR).

    Duration is preserved to within one sample period of the target rate.
    """
    if target_rate <= 0:
        raise ConfigError(f"target_rate must be positive, got {target_rate}")
    if target_rate == buf.sample_rate:
        return buf
    g = gcd(int(target_rate), int(buf.sample_rate))
    up, down = int(target_rate) // g, int(buf.sample_rate) // g
    out = resample_poly(buf.samples, up, down)
    return AudioBuffer(samples=out, sample_rate=int(target_rate))
