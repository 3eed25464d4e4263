"""Transmitter, WDM multiplexer and dual-polarization fiber link.

All signal processing is circular over one frame of ``n_symbols`` symbols,
so the FFT-based split-step integrator and the frequency-domain pulse
shaping see a strictly periodic waveform. Channel center frequencies are
rounded to the nearest FFT bin to keep that periodicity exact.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.constants as const
import scipy.fft as sfft

from .constellation import Constellation, symbols_from_bits, symbols_from_pmf
from .errors import ConfigError, NumericalDivergenceError

_DB_TO_NEPER = math.log(10.0) / 10.0


@dataclass(frozen=True)
class LinkConfig:
    """Physical and numerical parameters of the simulated link.

    SI units throughout, except the customary ``alpha_db_per_km``,
    ``dispersion_ps_nm_km``, ``gamma_per_w_km`` and dB/dBm quantities.
    Defaults reproduce the full-scale reference setup.
    """

    symbol_rate: float = 28e9
    rrc_rolloff: float = 0.05
    rrc_span_symbols: int = 32
    sps_sim: int = 32
    n_channels: int = 15
    channel_spacing: float = 30e9
    span_length: float = 100e3
    n_spans: int = 60
    alpha_db_per_km: float = 0.2
    gamma_per_w_km: float = 1.3
    dispersion_ps_nm_km: float = 17.0
    edfa_noise_figure_db: float = 4.0
    center_wavelength: float = 1550e-9
    step_policy: str = "uniform"
    step_linear_m: float = 100.0
    step_nonlinear_m: float = 10.0
    nonlinear_power_threshold_dbm: float = 0.0
    nl_phase_per_step: float = 5e-3
    max_step_m: float = 2000.0
    dbp_sc_sps: int | None = None
    launch_power_dbm_per_channel: float = 0.0
    n_symbols: int = 2**16
    edge_symbols: int = 32
    seed: int = 1

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    # derived quantities -------------------------------------------------
    @property
    def sample_rate(self):
        return self.sps_sim * self.symbol_rate

    @property
    def n_samples(self):
        return self.n_symbols * self.sps_sim

    @property
    def signal_bandwidth(self):
        return (1.0 + self.rrc_rolloff) * self.symbol_rate

    @property
    def carrier_frequency(self):
        return const.c / self.center_wavelength

    @property
    def alpha(self):
        """Power attenuation coefficient in 1/m."""
        return self.alpha_db_per_km * _DB_TO_NEPER / 1e3

    @property
    def beta2(self):
        """Group-velocity dispersion in s^2/m."""
        d = self.dispersion_ps_nm_km * 1e-6  # ps/(nm km) -> s/m^2
        return -d * self.center_wavelength**2 / (2 * np.pi * const.c)

    @property
    def gamma(self):
        return self.gamma_per_w_km / 1e3

    @property
    def gamma_eff(self):
        """Manakov nonlinear coefficient, 8/9 of the fiber gamma."""
        return 8.0 / 9.0 * self.gamma

    @property
    def span_gain_db(self):
        return self.alpha_db_per_km * self.span_length / 1e3

    @property
    def total_length(self):
        return self.n_spans * self.span_length

    @property
    def channel_offsets(self):
        """Integer channel slots, center channel is 0."""
        half = (self.n_channels - 1) // 2
        return list(range(-half, half + 1))

    def validate(self):
        if self.n_channels < 1 or self.n_channels % 2 == 0:
            raise ConfigError("n_channels must be a positive odd number")
        if not 0.0 <= self.rrc_rolloff <= 1.0:
            raise ConfigError("rrc_rolloff must lie in [0, 1]")
        for name in ("symbol_rate", "channel_spacing", "span_length", "center_wavelength",
                     "step_linear_m", "step_nonlinear_m", "nl_phase_per_step", "max_step_m"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("alpha_db_per_km", "gamma_per_w_km"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.n_spans < 0 or self.n_symbols < 1 or self.sps_sim < 1:
            raise ConfigError("n_spans, n_symbols and sps_sim must be positive")
        if self.step_policy not in ("uniform", "nlpr"):
            raise ConfigError(f"unknown step_policy {self.step_policy!r}")
        occupied = (self.n_channels - 1) * self.channel_spacing + self.signal_bandwidth
        if occupied > self.sample_rate:
            raise ConfigError(
                f"WDM comb occupies {occupied / 1e9:.1f} GHz but the simulation "
                f"bandwidth is only {self.sample_rate / 1e9:.1f} GHz"
            )
        if 2 * self.edge_symbols >= self.n_symbols:
            raise ConfigError("edge_symbols trims away the whole frame")
        return self


@dataclass
class FieldFrame:
    """Sampled dual-polarization baseband field in sqrt(W).

    ``samples`` has shape ``(2, n)``: row 0 is the x and row 1 the y
    polarization.
    """

    samples: np.ndarray
    sample_rate: float
    center_frequency_offset: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 2 or s.shape[0] != 2:
            raise ValueError("samples must have shape (2, n)")
        self.samples = s

    @property
    def samples_x(self):
        return self.samples[0]

    @property
    def samples_y(self):
        return self.samples[1]

    @property
    def n_samples(self):
        return self.samples.shape[1]

    def power(self):
        """Mean total power (both polarizations) in W."""
        return float(np.sum(np.mean(np.abs(self.samples) ** 2, axis=1)))

    def energy(self):
        return float(np.sum(np.abs(self.samples) ** 2))

    def with_samples(self, samples):
        return FieldFrame(samples, self.sample_rate, self.center_frequency_offset)

    def frequencies(self):
        return sfft.fftfreq(self.n_samples, 1.0 / self.sample_rate)


@dataclass
class TxRecord:
    """Transmitted symbols of every WDM channel.

    ``indices`` and ``symbols`` have shape ``(n_channels, 2, n_symbols)``
    and are ordered like ``offsets``.
    """

    indices: np.ndarray
    symbols: np.ndarray
    constellations: list
    offsets: list = field(default_factory=list)

    @property
    def center(self):
        return self.offsets.index(0)

    @property
    def constellation(self):
        return self.constellations[self.center]

    def center_indices(self):
        return self.indices[self.center]

    def center_symbols(self):
        return self.symbols[self.center]


def save_field(frame, path):
    """Debug dump: little-endian float64 (re, im) pairs per polarization,
    x then y, plus a ``.json`` sidecar."""
    path = Path(path)
    data = np.empty((2, frame.n_samples, 2), dtype="<f8")
    data[..., 0] = frame.samples.real
    data[..., 1] = frame.samples.imag
    path.write_bytes(data.tobytes())
    meta = {"sample_rate": frame.sample_rate, "n_samples": frame.n_samples}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta))


def load_field(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(2, meta["n_samples"], 2)
    return FieldFrame(raw[..., 0] + 1j * raw[..., 1], meta["sample_rate"])


# pulse shaping ---------------------------------------------------------------

def rrc_response(freq, rolloff, symbol_rate):
    """Root-raised-cosine amplitude response with unit passband gain."""
    f = np.abs(np.asarray(freq, dtype=float))
    f1 = (1.0 - rolloff) * symbol_rate / 2
    f2 = (1.0 + rolloff) * symbol_rate / 2
    h = np.zeros_like(f)
    h[f <= f1] = 1.0
    if rolloff > 0:
        band = (f > f1) & (f <= f2)
        h[band] = np.sqrt(0.5 * (1 + np.cos(np.pi / (rolloff * symbol_rate) * (f[band] - f1))))
    return h


def rrc_taps(rolloff, span_symbols, sps):
    """Unit-energy root-raised-cosine impulse response.

    ``span_symbols * sps + 1`` taps centered on the middle one.
    """
    if not 0 < rolloff <= 1:
        raise ValueError("rolloff must lie in (0, 1]")
    if span_symbols % 2:
        raise ValueError("span_symbols must be even")
    t = np.arange(-span_symbols * sps // 2, span_symbols * sps // 2 + 1) / sps
    b = rolloff
    h = np.empty_like(t)
    center = t == 0
    h[center] = 1.0 - b + 4 * b / np.pi
    edge = np.isclose(np.abs(t), 1.0 / (4 * b))
    h[edge] = b / np.sqrt(2) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
    )
    rest = ~(center | edge)
    tr = t[rest]
    h[rest] = (np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))) / (
        np.pi * tr * (1 - (4 * b * tr) ** 2)
    )
    return h / np.sqrt(np.sum(h**2))


# transmitter -------------------------------------------------------------------

def _stream(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *keys]))


def draw_symbols(constellation, n, rng):
    """Uniform input from a random bit sequence, shaped input by i.i.d. draws."""
    if constellation.pmf.is_uniform:
        bits = rng.integers(0, 2, size=n * constellation.m)
        return symbols_from_bits(bits, constellation)
    return symbols_from_pmf(constellation.pmf, n, rng)


def _channel_bin(offset, config):
    df = config.sample_rate / config.n_samples
    return int(round(offset * config.channel_spacing / df))


def build_wdm_frame(config, constellations, seed=None):
    """Modulate, pulse-shape and multiplex all WDM channels.

    Parameters
    ----------
    config : LinkConfig
    constellations : Constellation or list of Constellation
        One for all channels, or one per channel slot (ordered like
        ``config.channel_offsets``).
    seed : int, optional
        Overrides ``config.seed``. Symbol streams are keyed by channel slot
        and polarization, so the center channel sees the same data for any
        channel count or spacing.

    Returns
    -------
    (FieldFrame, TxRecord)
    """
    config.validate()
    seed = config.seed if seed is None else seed
    offsets = config.channel_offsets
    if isinstance(constellations, Constellation):
        constellations = [constellations] * len(offsets)
    if len(constellations) != len(offsets):
        raise ConfigError("need one constellation per WDM channel")

    n_sym, sps, n = config.n_symbols, config.sps_sim, config.n_samples
    freqs = sfft.fftfreq(n, 1.0 / config.sample_rate)
    # interpolation filter with DC gain sps -> waveform power equals symbol energy
    shaping = sps * rrc_response(freqs, config.rrc_rolloff, config.symbol_rate)
    p_pol = 10 ** (config.launch_power_dbm_per_channel / 10) * 1e-3 / 2

    indices = np.empty((len(offsets), 2, n_sym), dtype=np.int64)
    symbols = np.empty((len(offsets), 2, n_sym), dtype=complex)
    spectrum = np.zeros((2, n), dtype=complex)
    for c, (k, const_k) in enumerate(zip(offsets, constellations)):
        for pol in range(2):
            idx = draw_symbols(const_k, n_sym, _stream(seed, 0, k + 1024, pol))
            indices[c, pol] = idx
            symbols[c, pol] = const_k.points[idx]
            # DFT of the zero-stuffed sequence is the symbol DFT repeated sps times
            spec = np.tile(sfft.fft(symbols[c, pol]), sps) * shaping
            power = np.sum(np.abs(spec) ** 2) / n**2
            if power > 0:
                spec *= np.sqrt(p_pol / power)
            spectrum[pol] += np.roll(spec, _channel_bin(k, config))
    frame = FieldFrame(sfft.ifft(spectrum, axis=1), config.sample_rate)
    return frame, TxRecord(indices, symbols, list(constellations), list(offsets))


# fiber -------------------------------------------------------------------------

def step_plan(config, launch_power_dbm=None):
    """Step lengths (m) for one span.

    ``uniform``: the fine step when the per-channel launch power reaches
    ``nonlinear_power_threshold_dbm``, the coarse one otherwise, rounded so
    an integer number of equal steps fills the span.

    ``nlpr``: each step accumulates at most ``nl_phase_per_step`` rad of
    nonlinear phase for the total launch power decaying along the span,
    capped at ``max_step_m``.
    """
    p_dbm = config.launch_power_dbm_per_channel if launch_power_dbm is None else launch_power_dbm
    L = config.span_length
    if config.step_policy == "uniform":
        fine = p_dbm >= config.nonlinear_power_threshold_dbm
        h = config.step_nonlinear_m if fine else config.step_linear_m
        n = max(1, math.ceil(L / h - 1e-9))
        return np.full(n, L / n)

    p_tot = config.n_channels * 10 ** (p_dbm / 10) * 1e-3
    g = config.gamma_eff * p_tot
    a = config.alpha
    phi = config.nl_phase_per_step
    steps = []
    z = 0.0
    while z < L - 1e-9:
        h = config.max_step_m
        if g > 0:
            if a > 0:
                arg = 1.0 - a * phi * math.exp(a * z) / g
                if arg > 0:
                    h = min(h, -math.log(arg) / a)
            else:
                h = min(h, phi / g)
        h = min(h, L - z)
        steps.append(h)
        z += h
    return np.array(steps)


class _LinearOperator:
    """Frequency-domain dispersion/attenuation factors, cached by length."""

    def __init__(self, freqs, alpha, beta2, sign=1.0, max_cache=64):
        w2 = (2 * np.pi * freqs) ** 2
        self.coef = sign * (-alpha / 2 + 0.5j * beta2 * w2)
        self.cache = {}
        self.max_cache = max_cache

    def __call__(self, length):
        op = self.cache.get(length)
        if op is None:
            op = np.exp(self.coef * length)
            if len(self.cache) < self.max_cache:
                self.cache[length] = op
        return op


def _integrate(samples, steps, lin, gamma_eff):
    """Symmetric split-step over ``steps`` with merged linear half-steps.

    ``samples`` is the (2, n) time-domain field; returns a new array.
    """
    spec = sfft.fft(samples, axis=1)
    spec *= lin(steps[0] / 2)
    for i, h in enumerate(steps):
        e = sfft.ifft(spec, axis=1, overwrite_x=True)
        if gamma_eff != 0.0:
            p = e.real**2 + e.imag**2
            phi = gamma_eff * h * (p[0] + p[1])
            e *= np.exp(1j * phi)
        spec = sfft.fft(e, axis=1, overwrite_x=True)
        nxt = steps[i + 1] / 2 if i + 1 < len(steps) else 0.0
        spec *= lin(h / 2 + nxt)
    return sfft.ifft(spec, axis=1, overwrite_x=True)


def ssfm_span(field, config, span_index=0, steps=None, lin=None):
    """Propagate one fiber span with the Manakov split-step integrator.

    Linear half-steps apply attenuation and dispersion in the frequency
    domain; the nonlinear step rotates both polarizations by
    ``(8/9) gamma (|Ex|^2 + |Ey|^2) h``.

    Raises
    ------
    NumericalDivergenceError
        If the output contains non-finite samples.
    """
    if steps is None:
        steps = step_plan(config)
    if lin is None:
        lin = _LinearOperator(field.frequencies(), config.alpha, config.beta2)
    out = _integrate(field.samples, steps, lin, config.gamma_eff)
    if not np.all(np.isfinite(out)):
        raise NumericalDivergenceError(span_index)
    return field.with_samples(out)


def ase_variance(gain_db, noise_figure_db, bandwidth, frequency):
    """ASE variance per polarization over ``bandwidth``.

    ``(G - 1) h nu n_sp B`` with ``n_sp = 10**(NF/10) / 2``.
    """
    g = 10 ** (gain_db / 10)
    n_sp = 10 ** (noise_figure_db / 10) / 2
    return (g - 1) * const.h * frequency * n_sp * bandwidth


def edfa(field, gain_db, noise_figure_db, rng, frequency=const.c / 1550e-9):
    """Amplify by ``gain_db`` and add circular white Gaussian ASE in both
    polarizations over the full simulation bandwidth."""
    if gain_db < 0:
        raise ValueError("EDFA gain must be >= 0 dB")
    out = field.samples * 10 ** (gain_db / 20)
    var = ase_variance(gain_db, noise_figure_db, field.sample_rate, frequency)
    if var > 0:
        noise = rng.standard_normal((2, 2, field.n_samples))
        out = out + np.sqrt(var / 2) * (noise[0] + 1j * noise[1])
    return field.with_samples(out)


def propagate_link(field, config, seed=None, record_at=None):
    """Run ``n_spans`` x (span + EDFA) with gain equal to the span loss.

    The ASE of span ``i`` is drawn from a stream keyed by ``(seed, i)``, so
    the first ``k`` spans are identical for any total span count.

    Parameters
    ----------
    record_at : iterable of int, optional
        Span counts at which to return a snapshot. When given, a dict
        ``{span_count: FieldFrame}`` is returned instead of one frame.
    """
    seed = config.seed if seed is None else seed
    n_spans = config.n_spans
    wanted = None if record_at is None else sorted(set(int(k) for k in record_at))
    if wanted is not None:
        n_spans = max(wanted, default=0)
    snapshots = {}
    if wanted is not None and 0 in wanted:
        snapshots[0] = field
    if n_spans:
        steps = step_plan(config)
        lin = _LinearOperator(field.frequencies(), config.alpha, config.beta2)
    for i in range(n_spans):
        field = ssfm_span(field, config, span_index=i, steps=steps, lin=lin)
        field = edfa(field, config.span_gain_db, config.edfa_noise_figure_db,
                     _stream(seed, 1, i), config.carrier_frequency)
        if wanted is not None and i + 1 in wanted:
            snapshots[i + 1] = field
    return field if wanted is None else snapshots
