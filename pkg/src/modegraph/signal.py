"""Signal containers, mirrored-boundary spectra, synthetic signals and CSV ingestion.

Conventions used everywhere in the package:

* A length-``T`` signal is mirror-extended to length ``2T`` by reflecting its
  first half in front and its second half behind.
* The forward DFT is unnormalized; the inverse carries ``1/(2T)``.
* Spectra are stored in centered order: index ``T`` holds frequency 0 and
  index ``t`` holds normalized frequency ``(t - T) / (2T)``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateInputError, InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeSeries:
    """A single node's real-valued signal.

    Odd-length input is truncated by one trailing sample; ``truncated`` records
    that this happened.
    """

    id: str
    values: np.ndarray
    sample_interval: float = 1.0
    truncated: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise InvalidInputError(f"series {self.id!r}: expected 1-D values, got shape {values.shape}")
        truncated = self.truncated
        if values.size % 2:
            logger.info("series %r: odd length %d truncated to %d", self.id, values.size, values.size - 1)
            values = values[:-1]
            truncated = True
        if values.size < 4:
            raise InvalidInputError(f"series {self.id!r}: length {values.size} is below the minimum of 4")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError(f"series {self.id!r}: contains non-finite values")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "truncated", truncated)

    @property
    def length(self) -> int:
        return self.values.size

    def metadata(self) -> dict:
        return {"id": self.id, "T": self.length, "truncated": self.truncated,
                "sample_interval": self.sample_interval}


@dataclass(frozen=True)
class MirroredSignal:
    values: np.ndarray
    origin_length: int


@dataclass(frozen=True)
class Spectrum:
    """Centered 2T-point DFT of a mirrored signal."""

    coeffs: np.ndarray
    origin_length: int

    @property
    def grid(self) -> np.ndarray:
        return two_sided_grid(self.origin_length)


@dataclass(frozen=True)
class SyntheticSpec:
    """Tones are ``(frequency, amplitude, phase)`` with frequency in cycles/sample."""

    tones: Sequence[tuple]
    length: int
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if len(self.tones) == 0:
            raise InvalidInputError("at least one tone is required")
        freqs = [t[0] for t in self.tones]
        if any(not 0.0 < f < 0.5 for f in freqs):
            raise InvalidInputError(f"tone frequencies must lie in (0, 0.5), got {freqs}")
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise InvalidInputError(f"tone frequencies must be strictly increasing, got {freqs}")
        if self.noise_std < 0:
            raise InvalidInputError(f"noise_std must be >= 0, got {self.noise_std}")


@dataclass(frozen=True)
class SplitConfig:
    train_frac: float = 0.7
    val_frac: float = 0.15
    test_frac: float = 0.15

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(not 0.0 < f < 1.0 for f in fracs):
            raise ConfigError(f"fractions must lie in (0, 1), got {fracs}", "split")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"fractions must sum to 1, got {sum(fracs)!r}", "split")

    def bounds(self, n: int) -> tuple[slice, slice, slice]:
        """Chronological slices for ``n`` items; every part gets at least one item when n >= 3."""
        n_train = int(round(self.train_frac * n))
        n_val = int(round(self.val_frac * n))
        if n >= 3:
            n_train = min(max(n_train, 1), n - 2)
            n_val = min(max(n_val, 1), n - n_train - 1)
        return slice(0, n_train), slice(n_train, n_train + n_val), slice(n_train + n_val, n)


def two_sided_grid(T: int) -> np.ndarray:
    return (np.arange(2 * T) - T) / (2.0 * T)


def one_sided_grid(T: int) -> np.ndarray:
    return np.arange(T) / (2.0 * T)


def _as_values(signal) -> np.ndarray:
    if isinstance(signal, TimeSeries):
        return signal.values
    values = np.asarray(signal, dtype=float)
    if values.ndim != 1 or values.size < 4 or values.size % 2:
        raise InvalidInputError(f"signal length {values.size} must be even and >= 4")
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("signal contains non-finite values")
    return values


def mirror_extend(signal) -> MirroredSignal:
    """Reflect the first half in front and the second half behind.

    >>> mirror_extend(np.array([1., 2., 3., 4.])).values
    array([2., 1., 1., 2., 3., 4., 4., 3.])
    """
    x = _as_values(signal)
    half = x.size // 2
    values = np.concatenate([x[:half][::-1], x, x[half:][::-1]])
    return MirroredSignal(values, x.size)


def unmirror(mirrored) -> np.ndarray:
    values = mirrored.values if isinstance(mirrored, MirroredSignal) else np.asarray(mirrored)
    if values.size % 2:
        raise InvalidInputError(f"mirrored length {values.size} is odd")
    T = values.size // 2
    return values[T // 2: T // 2 + T].copy()


def to_spectrum(mirrored: MirroredSignal) -> Spectrum:
    coeffs = np.fft.fftshift(np.fft.fft(mirrored.values))
    return Spectrum(coeffs, mirrored.origin_length)


def from_spectrum(spec: Spectrum) -> np.ndarray:
    """Inverse of :func:`to_spectrum`; the imaginary residue is discarded."""
    return np.fft.ifft(np.fft.ifftshift(spec.coeffs)).real


def one_sided(spec: Spectrum) -> tuple[np.ndarray, np.ndarray]:
    """Nonnegative-frequency half ``coeffs[T:2T]`` and its grid ``[0, 0.5)``."""
    T = spec.origin_length
    return spec.coeffs[T:].copy(), one_sided_grid(T)


def symmetrize(half: np.ndarray, nyquist: complex = 0.0) -> Spectrum:
    """Build a conjugate-symmetric centered spectrum from its nonnegative half.

    ``half`` may be stacked along leading axes. The Nyquist bin (index 0 in
    centered order) is not part of the one-sided grid and is set to
    ``nyquist``.
    """
    half = np.asarray(half)
    T = half.shape[-1]
    full = np.empty(half.shape[:-1] + (2 * T,), dtype=complex)
    full[..., T:] = half
    full[..., 1:T] = np.conj(half[..., 1:][..., ::-1])
    full[..., 0] = nyquist
    return Spectrum(full, T)


def half_to_time(half: np.ndarray) -> np.ndarray:
    """One-sided spectra (..., T) -> time-domain signals (..., T) after unmirroring."""
    spec = symmetrize(half)
    mirrored = np.fft.ifft(np.fft.ifftshift(spec.coeffs, axes=-1), axis=-1).real
    T = spec.origin_length
    return mirrored[..., T // 2: T // 2 + T]


def signal_half_spectrum(signal) -> np.ndarray:
    """Shortcut: mirror, transform, keep the nonnegative half."""
    return one_sided(to_spectrum(mirror_extend(signal)))[0]


def gen_synthetic(spec: SyntheticSpec, id: str = "synthetic") -> TimeSeries:
    t = np.arange(spec.length)
    values = np.zeros(spec.length)
    for freq, amp, phase in spec.tones:
        values += amp * np.cos(2 * np.pi * freq * t + phase)
    if spec.noise_std > 0:
        rng = np.random.default_rng(spec.seed)
        values += rng.normal(0.0, spec.noise_std, spec.length)
    return TimeSeries(id, values)


def load_csv(path, columns: Sequence[str] | None = None, sample_interval: float = 1.0) -> list[TimeSeries]:
    """Read a wide CSV (header = node ids, one row per timestep)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        wanted = list(columns) if columns is not None else header
        missing = [c for c in wanted if c not in header]
        if missing:
            raise InvalidInputError(f"{path}: unknown columns {missing}")
        idx = [header.index(c) for c in wanted]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InvalidInputError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            vals = []
            for j in idx:
                try:
                    vals.append(float(row[j]))
                except ValueError:
                    raise InvalidInputError(
                        f"{path}: row {lineno}, column {header[j]!r}: cannot parse {row[j]!r}") from None
            rows.append(vals)
    data = np.asarray(rows, dtype=float).reshape(-1, len(idx))
    return [TimeSeries(name, data[:, j], sample_interval) for j, name in enumerate(wanted)]


def write_csv(path, series: Sequence[TimeSeries]) -> None:
    data = np.column_stack([s.values for s in series])
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([s.id for s in series])
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


def zscore_normalize(series, fit_slice: slice | None = None):
    """Population z-score. Statistics come from ``fit_slice`` (default: all samples).

    Returns ``(normalized, mean, std)`` where ``normalized`` has the input's
    type (TimeSeries or array).
    """
    is_series = isinstance(series, TimeSeries)
    x = series.values if is_series else np.asarray(series, dtype=float)
    fit = x if fit_slice is None else x[fit_slice]
    mean = float(np.mean(fit))
    std = float(np.std(fit))
    if std == 0.0 or not np.isfinite(std):
        name = series.id if is_series else "<array>"
        raise DegenerateInputError(f"series {name!r} has zero variance")
    out = (x - mean) / std
    if is_series:
        out = TimeSeries(series.id, out, series.sample_interval, series.truncated)
    return out, mean, std


def denormalize(values, mean: float, std: float) -> np.ndarray:
    return np.asarray(values, dtype=float) * std + mean
