"""Baseband model of a two-symbol OFDM training preamble.

The transmitter sends two identical QPSK training symbols back to back.
The receiver suffers a normalized carrier-frequency offset (CFO, in units
of the subcarrier spacing) and a sampling-frequency offset (SFO, the
fractional sampling-clock error), and observes the burst through a
quasi-static multipath channel plus white Gaussian noise.

Conventions used throughout the package:

* unitary DFT scaling: demodulation divides by sqrt(N);
* the active subcarriers occupy the centred set {-K/2, ..., K/2 - 1};
* training symbol m spans samples N_m + n for n in [0, N), where
  N_m = cp_len + m * (dft_size + cp_len) counts from the burst start
  (the cyclic prefix itself is never materialized, only its offset);
* an SFO stretches the receiver time base by (1 + sfo), which both skews
  the per-subcarrier phase ramps and scales the CFO rotation.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "OfdmConfig",
    "TrainingSymbols",
    "ChannelRealization",
    "ImpairmentParams",
    "TimeDomainFrame",
    "PreambleObservation",
    "make_config",
    "generate_training_symbols",
    "exponential_power_profile",
    "sample_channel",
    "channel_frequency_response",
    "synthesize_received_symbol",
    "synthesize_frame",
    "demodulate",
    "demodulate_frame",
    "coupling_coefficient",
    "ici_term",
    "carrier_gain",
    "noise_variance_from_snr",
    "derive_rng",
    "snr_stream_key",
]

_TWO_PI = 2.0 * np.pi

# Gray-ordered QPSK alphabet with unit average power.
QPSK_ALPHABET = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)

# Exponential power-delay-profile time constant, in tap periods.
PDP_DECAY_TAPS = 5.0


@dataclass(frozen=True)
class OfdmConfig:
    """Static preamble geometry.

    Attributes
    ----------
    dft_size : int
        DFT length N (even, positive).
    n_active : int
        Number of active subcarriers K (even, positive, at most N).
    cp_len : int
        Cyclic prefix length in samples (non-negative).
    n_symbols : int
        Number of training symbols in the burst. The estimators in this
        package consume exactly two.
    """

    dft_size: int
    n_active: int
    cp_len: int
    n_symbols: int = 2

    @property
    def subcarrier_indices(self) -> np.ndarray:
        """Active subcarrier indices, ascending: -K/2 .. K/2 - 1."""
        half = self.n_active // 2
        return np.arange(-half, half)

    @property
    def symbol_len(self) -> int:
        return self.dft_size + self.cp_len

    def symbol_start(self, m: int) -> int:
        """Sample index N_m at which the useful part of symbol m begins."""
        if not 0 <= m < self.n_symbols:
            raise ValueError(f"symbol index {m} outside [0, {self.n_symbols})")
        return self.cp_len + m * self.symbol_len


def make_config(dft_size: int = 64, n_active: int = 52, cp_len: int = 16,
                n_symbols: int = 2) -> OfdmConfig:
    """Validate and build an :class:`OfdmConfig`.

    Raises
    ------
    ValueError
        If a field is non-positive, N or K is odd, or K exceeds N.
    """
    for name, value in (("dft_size", dft_size), ("n_active", n_active),
                        ("cp_len", cp_len), ("n_symbols", n_symbols)):
        if not isinstance(value, (int, np.integer)):
            raise ValueError(f"{name} must be an integer, got {value!r}")
        if value <= 0 and name != "cp_len":
            raise ValueError(f"{name} must be positive, got {value}")
    if cp_len < 0:
        raise ValueError(f"cp_len must be >= 0, got {cp_len}")
    if dft_size % 2:
        raise ValueError(f"dft_size (N) must be even, got {dft_size}")
    if n_active % 2:
        raise ValueError(f"n_active (K) must be even, got {n_active}")
    if n_active > dft_size:
        raise ValueError(f"K exceeds N ({n_active} > {dft_size})")
    return OfdmConfig(int(dft_size), int(n_active), int(cp_len), int(n_symbols))


@dataclass(frozen=True)
class TrainingSymbols:
    """Frequency-domain training pair, one length-K vector per symbol."""

    x0: np.ndarray
    x1: np.ndarray

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=complex)
        x1 = np.asarray(self.x1, dtype=complex)
        if x0.ndim != 1 or x1.ndim != 1:
            raise ValueError("training symbols must be 1-D vectors")
        if x0.shape != x1.shape:
            raise ValueError(
                f"training symbols differ in length ({x0.size} vs {x1.size})")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "x1", x1)

    def symbol(self, m: int) -> np.ndarray:
        return (self.x0, self.x1)[m]


@dataclass(frozen=True)
class ChannelRealization:
    """Quasi-static multipath channel, one complex gain per tap."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=complex)
        if taps.ndim != 1 or taps.size == 0:
            raise ValueError("taps must be a non-empty 1-D vector")
        object.__setattr__(self, "taps", taps)

    @property
    def n_taps(self) -> int:
        return self.taps.size


@dataclass(frozen=True)
class ImpairmentParams:
    """Synchronization impairments and the noise level of one burst.

    cfo is the carrier-frequency offset normalized to the subcarrier
    spacing; sfo is the fractional sampling-clock offset; noise_var is the
    total variance of the complex noise per received sample (split evenly
    between the real and imaginary parts).
    """

    cfo: float
    sfo: float
    noise_var: float = 0.0

    def __post_init__(self):
        for name in ("cfo", "sfo", "noise_var"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
        if self.sfo <= -1.0:
            raise ValueError(f"sfo must exceed -1, got {self.sfo}")
        if self.noise_var < 0.0:
            raise ValueError(f"noise_var must be >= 0, got {self.noise_var}")


@dataclass(frozen=True)
class TimeDomainFrame:
    """Received burst: one row of N samples per training symbol."""

    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if samples.ndim != 2:
            raise ValueError("samples must be a 2-D (symbols x N) matrix")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True)
class PreambleObservation:
    """Demodulated preamble: K-point spectra of both symbols plus the
    training pair that produced them."""

    r0: np.ndarray
    r1: np.ndarray
    training: TrainingSymbols

    def __post_init__(self):
        r0 = np.asarray(self.r0, dtype=complex)
        r1 = np.asarray(self.r1, dtype=complex)
        if r0.shape != r1.shape or r0.ndim != 1:
            raise ValueError("r0 and r1 must be 1-D vectors of equal length")
        if r0.size != self.training.x0.size:
            raise ValueError(
                f"observation length {r0.size} does not match training "
                f"length {self.training.x0.size}")
        object.__setattr__(self, "r0", r0)
        object.__setattr__(self, "r1", r1)


def generate_training_symbols(rng: np.random.Generator,
                              config: OfdmConfig) -> TrainingSymbols:
    """Draw one QPSK training symbol i.i.d. uniform and repeat it."""
    picks = rng.integers(0, 4, size=config.n_active)
    x0 = QPSK_ALPHABET[picks]
    return TrainingSymbols(x0=x0, x1=x0.copy())


def exponential_power_profile(n_taps: int,
                              decay: float = PDP_DECAY_TAPS) -> np.ndarray:
    """Exponentially decaying power-delay profile normalized to unit sum."""
    if n_taps < 1:
        raise ValueError(f"n_taps must be >= 1, got {n_taps}")
    if decay <= 0:
        raise ValueError(f"decay must be positive, got {decay}")
    weights = np.exp(-np.arange(n_taps) / decay)
    return weights / weights.sum()


def sample_channel(rng: np.random.Generator, n_taps: int = 5,
                   decay: float = PDP_DECAY_TAPS) -> ChannelRealization:
    """Draw independent Rayleigh taps with the exponential power profile."""
    profile = exponential_power_profile(n_taps, decay)
    scale = np.sqrt(profile / 2.0)
    taps = scale * (rng.standard_normal(n_taps)
                    + 1j * rng.standard_normal(n_taps))
    return ChannelRealization(taps=taps)


def channel_frequency_response(channel: ChannelRealization, k,
                               dft_size: int):
    """Channel gain H(k) = sum_l h_l exp(-j 2 pi k l / N) at subcarrier k.

    Broadcasts over arrays of subcarrier indices.
    """
    k = np.asarray(k)
    scalar = k.ndim == 0
    l = np.arange(channel.n_taps)
    phases = np.exp(-1j * _TWO_PI
                    * np.atleast_1d(k)[..., None] * l / dft_size)
    out = phases @ channel.taps
    return complex(out[0]) if scalar else out


def noise_variance_from_snr(config: OfdmConfig, snr_db: float) -> float:
    """Complex noise variance for a given SNR in dB.

    The SNR is defined against the mean received sample power, which is
    K/N for unit-power training symbols and a unit-energy average power
    profile, so noise_var = (K/N) * 10**(-snr_db/10).
    """
    return (config.n_active / config.dft_size) * 10.0 ** (-snr_db / 10.0)


def synthesize_received_symbol(config: OfdmConfig, training: TrainingSymbols,
                               channel: ChannelRealization,
                               impairments: ImpairmentParams, m: int,
                               rng: np.random.Generator | None = None
                               ) -> np.ndarray:
    """Simulate the N useful samples of training symbol m at the receiver.

    Evaluates the time-domain model directly:

        r[n] = exp(j 2 pi (N_m + n) (1 + sfo) cfo / N) / sqrt(N)
               * sum_k X(k) H(k) exp(j 2 pi k (n (1 + sfo) + sfo N_m) / N)
               + w[n]

    where the sum runs over the active subcarriers and w is circular
    Gaussian noise of total variance ``impairments.noise_var``.

    Parameters
    ----------
    m : int
        Training symbol index.
    rng : numpy.random.Generator, optional
        Noise source; required when ``impairments.noise_var > 0``.
    """
    x = training.symbol(m)
    if x.size != config.n_active:
        raise ValueError(
            f"training length {x.size} does not match n_active "
            f"{config.n_active}")
    n = np.arange(config.dft_size)
    ks = config.subcarrier_indices
    start = config.symbol_start(m)
    cfo, sfo = impairments.cfo, impairments.sfo

    h = channel_frequency_response(channel, ks, config.dft_size)
    warp = n * (1.0 + sfo) + sfo * start
    basis = np.exp(1j * _TWO_PI / config.dft_size * np.outer(warp, ks))
    lead = np.exp(1j * _TWO_PI / config.dft_size
                  * (start + n) * (1.0 + sfo) * cfo)
    signal = lead * (basis @ (x * h)) / np.sqrt(config.dft_size)

    if impairments.noise_var > 0.0:
        if rng is None:
            raise ValueError("rng is required when noise_var > 0")
        sigma = np.sqrt(impairments.noise_var / 2.0)
        noise = sigma * (rng.standard_normal(config.dft_size)
                         + 1j * rng.standard_normal(config.dft_size))
        signal = signal + noise
    return signal


def synthesize_frame(config: OfdmConfig, training: TrainingSymbols,
                     channel: ChannelRealization,
                     impairments: ImpairmentParams,
                     rngs=(None, None)) -> TimeDomainFrame:
    """Simulate all training symbols of the burst, one noise stream each."""
    if len(rngs) != config.n_symbols:
        raise ValueError(
            f"expected {config.n_symbols} noise streams, got {len(rngs)}")
    rows = [synthesize_received_symbol(config, training, channel,
                                       impairments, m, rngs[m])
            for m in range(config.n_symbols)]
    return TimeDomainFrame(samples=np.stack(rows))


def demodulate(samples: np.ndarray, config: OfdmConfig) -> np.ndarray:
    """Unitary DFT of one received symbol, restricted to the active set.

    Returns R(k) = (1/sqrt(N)) sum_n r[n] exp(-j 2 pi k n / N) for k in
    the ascending active subcarrier set.
    """
    samples = np.asarray(samples, dtype=complex)
    if samples.shape != (config.dft_size,):
        raise ValueError(
            f"expected {config.dft_size} samples, got shape {samples.shape}")
    spectrum = np.fft.fft(samples) / np.sqrt(config.dft_size)
    return spectrum[config.subcarrier_indices % config.dft_size]


def demodulate_frame(frame: TimeDomainFrame, config: OfdmConfig,
                     training: TrainingSymbols) -> PreambleObservation:
    """Demodulate the first two symbols of a burst into an observation."""
    if frame.samples.shape[0] < 2:
        raise ValueError("frame must contain at least two symbols")
    r0 = demodulate(frame.samples[0], config)
    r1 = demodulate(frame.samples[1], config)
    return PreambleObservation(r0=r0, r1=r1, training=training)


def coupling_coefficient(k, i, cfo: float, sfo: float, dft_size: int):
    """Inter-carrier coupling delta_{k,i} of modulated subcarrier i into
    demodulated bin k under the given offsets.

    Defined as (1/N) sum_n exp(j 2 pi n a / N) with
    a = i sfo + cfo (1 + sfo) + i - k; evaluated in closed form as a
    Dirichlet kernel, with an explicit-sum fallback where the kernel
    denominator degenerates (a near a multiple of N). Broadcasts over
    arrays of k and i.
    """
    k = np.asarray(k, dtype=float)
    i = np.asarray(i, dtype=float)
    a = i * sfo + cfo * (1.0 + sfo) + i - k
    scalar = a.ndim == 0
    a = np.atleast_1d(a)

    denom = np.sin(np.pi * a / dft_size)
    out = np.empty(a.shape, dtype=complex)
    singular = np.abs(denom) < 1e-9
    regular = ~singular
    if regular.any():
        ar = a[regular]
        out[regular] = (np.exp(1j * np.pi * ar * (dft_size - 1) / dft_size)
                        * np.sin(np.pi * ar)
                        / (dft_size * denom[regular]))
    if singular.any():
        n = np.arange(dft_size)
        phases = np.exp(1j * _TWO_PI / dft_size
                        * np.outer(a[singular], n))
        out[singular] = phases.mean(axis=1)
    return out[0] if scalar else out


def carrier_gain(k, m: int, cfo: float, sfo: float, config: OfdmConfig):
    """Multiplicative gain on the wanted symbol at demodulated bin k of
    training symbol m: the self-coupling delta_{k,k} rotated by the
    symbol-start phase exp(j 2 pi N_m (k sfo + cfo (1 + sfo)) / N)."""
    start = config.symbol_start(m)
    karr = np.asarray(k, dtype=float)
    self_coupling = coupling_coefficient(karr, karr, cfo, sfo,
                                         config.dft_size)
    phase = np.exp(1j * _TWO_PI / config.dft_size * start
                   * (karr * sfo + cfo * (1.0 + sfo)))
    gain = self_coupling * phase
    return complex(gain) if karr.ndim == 0 else gain


def ici_term(k, m: int, training: TrainingSymbols,
             channel: ChannelRealization, cfo: float, sfo: float,
             config: OfdmConfig) -> complex:
    """Inter-carrier interference landing on bin k of training symbol m.

    Sums, over every active subcarrier i != k, the coupled and
    phase-rotated contribution delta_{k,i} exp(j 2 pi N_m (i sfo +
    cfo (1 + sfo)) / N) X_m(i) H(i), in ascending i order.
    """
    ks = config.subcarrier_indices
    x = training.symbol(m)
    start = config.symbol_start(m)
    h = channel_frequency_response(channel, ks, config.dft_size)
    coupling = coupling_coefficient(float(k), ks, cfo, sfo, config.dft_size)
    phase = np.exp(1j * _TWO_PI / config.dft_size * start
                   * (ks * sfo + cfo * (1.0 + sfo)))
    terms = coupling * phase * x * h
    keep = ks != k
    return complex(terms[keep].sum())


def snr_stream_key(snr_db: float) -> int:
    """Stable integer key for an SNR point (milli-dB resolution)."""
    return int(round(float(snr_db) * 1000.0))


def derive_rng(master_seed: int, *keys) -> np.random.Generator:
    """Derive an independent substream from a master seed and a key path.

    Integer keys enter the seed sequence directly; string labels are
    folded through SHA-256 so the mapping is stable across processes and
    platforms. The same (seed, keys) always yields the same stream.
    """
    words = [int(master_seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            digest = hashlib.sha256(key.encode("utf-8")).digest()
            words.append(int.from_bytes(digest[:8], "big"))
        elif isinstance(key, (int, np.integer)):
            words.append(int(key) & 0xFFFFFFFFFFFFFFFF)
        else:
            raise TypeError(f"rng key must be int or str, got {key!r}")
    return np.random.default_rng(np.random.SeedSequence(words))
