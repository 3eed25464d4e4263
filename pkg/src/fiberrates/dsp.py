"""Receiver DSP: optical filtering, dispersion compensation / back-propagation,
matched filtering, data-aided alignment and noise-variance estimation."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError, DegenerateInputError, NumericalDivergenceError
from .linksim import _LinearOperator, _integrate, rrc_response, step_plan

SIGMA_SQ_FLOOR = 1e-12


class DspMode(str, Enum):
    EDC = "edc"
    SC_DBP = "sc-dbp"
    MC_DBP = "mc-dbp"


@dataclass
class SymbolBatch:
    """Aligned transmitted/received symbols, one row per polarization.

    ``sigma_sq`` is the total complex noise variance per polarization and
    ``gain`` the complex scalar applied to the raw received samples.
    """

    tx_indices: np.ndarray
    rx_symbols: np.ndarray
    constellation: object
    sigma_sq: np.ndarray | None = None
    gain: np.ndarray | None = None

    def __post_init__(self):
        self.tx_indices = np.atleast_2d(np.asarray(self.tx_indices, dtype=np.int64))
        self.rx_symbols = np.atleast_2d(np.asarray(self.rx_symbols, dtype=complex))
        if self.tx_indices.shape != self.rx_symbols.shape:
            raise ValueError("tx and rx must have equal shapes")
        if self.sigma_sq is not None:
            self.sigma_sq = np.atleast_1d(np.asarray(self.sigma_sq, dtype=float))

    @property
    def n_pol(self):
        return self.rx_symbols.shape[0]

    @property
    def n(self):
        return self.rx_symbols.shape[1]

    @property
    def tx_symbols(self):
        return self.constellation.points[self.tx_indices]

    def with_sigma_sq(self, sigma_sq=None):
        """Copy carrying the given (or freshly estimated) noise variance."""
        if sigma_sq is None:
            sigma_sq = estimate_noise_variance(self)
        return replace(self, sigma_sq=np.atleast_1d(np.asarray(sigma_sq, dtype=float)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pol", "n", "tx_re", "tx_im", "rx_re", "rx_im"])
            tx = self.tx_symbols
            for p in range(self.n_pol):
                for n in range(self.n):
                    t, r = complex(tx[p, n]), complex(self.rx_symbols[p, n])
                    w.writerow([p, n, repr(t.real), repr(t.imag), repr(r.real), repr(r.imag)])

    @classmethod
    def from_csv(cls, path, constellation):
        """Read a batch written by ``to_csv``; tx symbols are mapped back to
        the nearest constellation index."""
        from .constellation import hard_decision

        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        n_pol = int(rows[:, 0].max()) + 1
        n = int(rows[:, 1].max()) + 1
        tx = (rows[:, 2] + 1j * rows[:, 3]).reshape(n_pol, n)
        rx = (rows[:, 4] + 1j * rows[:, 5]).reshape(n_pol, n)
        return cls(hard_decision(tx, constellation), rx, constellation)


def awgn_batch(constellation, sigma_sq, n, seed=0, n_pol=1):
    """Symbols drawn from the constellation PMF plus complex AWGN of total
    variance ``sigma_sq``; noise variance is estimated from the data."""
    from .constellation import symbols_from_pmf

    rng = np.random.default_rng(seed)
    idx = np.stack([symbols_from_pmf(constellation.pmf, n, rng) for _ in range(n_pol)])
    noise = rng.standard_normal((2,) + idx.shape)
    rx = constellation.points[idx] + np.sqrt(sigma_sq / 2) * (noise[0] + 1j * noise[1])
    return SymbolBatch(idx, rx, constellation).with_sigma_sq()


# optical domain ------------------------------------------------------------------

def optical_bpf(field, center_offset, bandwidth):
    """Ideal brick-wall band-pass over ``[center - B/2, center + B/2]``."""
    if bandwidth <= 0:
        raise ConfigError("filter bandwidth must be positive")
    if center_offset == 0 and bandwidth >= field.sample_rate:
        return field.with_samples(field.samples.copy())
    if abs(center_offset) + bandwidth / 2 > field.sample_rate / 2:
        raise ConfigError("filter band exceeds the simulation bandwidth")
    f = field.frequencies()
    mask = np.abs(f - center_offset) <= bandwidth / 2
    spec = sfft.fft(field.samples, axis=1)
    spec *= mask
    return field.with_samples(sfft.ifft(spec, axis=1))


def edc(field, total_length, config):
    """Ideal all-pass chromatic dispersion compensation over ``total_length``."""
    if total_length == 0:
        return field.with_samples(field.samples.copy())
    w2 = (2 * np.pi * field.frequencies()) ** 2
    spec = sfft.fft(field.samples, axis=1)
    spec *= np.exp(-0.5j * config.beta2 * w2 * total_length)
    return field.with_samples(sfft.ifft(spec, axis=1))


def _resample(samples, n_out):
    """Spectral resampling of a band-limited periodic signal."""
    n_in = samples.shape[1]
    if n_out == n_in:
        return samples
    spec = sfft.fft(samples, axis=1)
    out = np.zeros((samples.shape[0], n_out), dtype=complex)
    keep = min(n_in, n_out) // 2
    out[:, :keep] = spec[:, :keep]
    out[:, -keep:] = spec[:, -keep:]
    return sfft.ifft(out, axis=1) * (n_out / n_in)


def dbp(field, config, mode):
    """Ideal digital back-propagation of the whole link.

    Spans are undone in reverse order with negated attenuation, dispersion
    and nonlinearity, each preceded by removing the amplifier gain. The step
    plan mirrors the forward link (reversed within each span), so without
    noise the forward integrator is inverted up to round-off.

    ``mode`` is ``"sc"``/``"sc-dbp"`` (input already restricted to the
    center channel) or ``"mc"``/``"mc-dbp"`` (full comb). In single-channel
    mode the band-limited input may be resampled to ``config.dbp_sc_sps``
    samples per symbol for the back-propagation and is returned at the
    original rate.
    """
    mode = str(getattr(mode, "value", mode)).lower()
    if mode in ("sc", "sc-dbp"):
        single = True
    elif mode in ("mc", "mc-dbp"):
        single = False
    else:
        raise ValueError(f"unknown DBP mode {mode!r}")

    samples = field.samples
    sample_rate = field.sample_rate
    n_in = field.n_samples
    if single and config.dbp_sc_sps and config.dbp_sc_sps < config.sps_sim:
        n_work = n_in * config.dbp_sc_sps // config.sps_sim
        samples = _resample(samples, n_work)
        sample_rate = sample_rate * n_work / n_in
    n_work = samples.shape[1]

    steps = step_plan(config)[::-1]
    freqs = sfft.fftfreq(n_work, 1.0 / sample_rate)
    lin = _LinearOperator(freqs, config.alpha, config.beta2, sign=-1.0)
    amp = 10 ** (-config.span_gain_db / 20)
    for i in reversed(range(config.n_spans)):
        samples = _integrate(samples * amp, steps, lin, -config.gamma_eff)
        if not np.all(np.isfinite(samples)):
            raise NumericalDivergenceError(i, f"non-finite field while back-propagating span {i}")
    if n_work != n_in:
        samples = _resample(samples, n_in)
    return field.with_samples(samples)


# electrical domain -----------------------------------------------------------------

def matched_filter_downsample(field, config):
    """RRC matched filter (unit DC gain) and one sample per symbol.

    Filtering is circular in the frequency domain; the TX/RX cascade has
    zero delay, so symbol ``k`` sits at sample ``k * sps``. Returns an
    array of shape ``(2, n_symbols)``.
    """
    sps = config.sps_sim
    h = rrc_response(field.frequencies(), config.rrc_rolloff, config.symbol_rate)
    spec = sfft.fft(field.samples, axis=1)
    spec *= h
    out = sfft.ifft(spec, axis=1)
    return out[:, ::sps].copy()


def normalize_and_align(rx_symbols, tx_record, edge_symbols=0):
    """Data-aided complex least-squares gain per polarization.

    ``rx' = a rx`` with ``a = sum(x conj(y)) / sum(|y|^2)``. The first and
    last ``edge_symbols`` symbols are discarded before fitting.

    Parameters
    ----------
    rx_symbols : array_like
        Shape ``(n_pol, n)``.
    tx_record : TxRecord or (indices, constellation)
        Center-channel indices are used for a ``TxRecord``.
    """
    if hasattr(tx_record, "center_indices"):
        idx, const = tx_record.center_indices(), tx_record.constellation
    else:
        idx, const = tx_record
    rx = np.atleast_2d(np.asarray(rx_symbols, dtype=complex))
    idx = np.atleast_2d(np.asarray(idx))
    if edge_symbols:
        rx = rx[:, edge_symbols:-edge_symbols]
        idx = idx[:, edge_symbols:-edge_symbols]
    x = const.points[idx]
    energy = np.sum(np.abs(rx) ** 2, axis=1)
    if np.any(energy == 0):
        raise DegenerateInputError("received symbols carry zero energy")
    a = np.sum(x * np.conj(rx), axis=1) / energy
    return SymbolBatch(idx, rx * a[:, None], const, gain=a)


def estimate_noise_variance(batch):
    """Data-aided ``mean |y - x|^2`` per polarization.

    Values below ``SIGMA_SQ_FLOOR`` are floored with a warning so that the
    rate estimators stay defined.
    """
    if batch.n == 0:
        raise DegenerateInputError("empty batch")
    s2 = np.mean(np.abs(batch.rx_symbols - batch.tx_symbols) ** 2, axis=1)
    if np.any(s2 < SIGMA_SQ_FLOOR):
        warnings.warn("noise variance below floor, clamped to 1e-12", RuntimeWarning, stacklevel=2)
        s2 = np.maximum(s2, SIGMA_SQ_FLOOR)
    return s2


def receive(field, config, tx_record, mode):
    """Full receiver chain for the center channel.

    EDC and SC-DBP first select the center channel with a spacing-wide
    optical filter; MC-DBP keeps the whole comb.
    """
    mode = DspMode(getattr(mode, "value", mode))
    if mode is DspMode.MC_DBP:
        f = optical_bpf(field, 0.0, config.n_channels * config.channel_spacing)
        f = dbp(f, config, mode)
    else:
        f = optical_bpf(field, 0.0, config.channel_spacing)
        if mode is DspMode.EDC:
            f = edc(f, config.total_length, config)
        else:
            f = dbp(f, config, mode)
    rx = matched_filter_downsample(f, config)
    batch = normalize_and_align(rx, tx_record, config.edge_symbols)
    return batch.with_sigma_sq()
