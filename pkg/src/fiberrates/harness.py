"""Sweep orchestration, configuration files and result emission.

A sweep is the Cartesian product of modulation orders, seeds and the
values of one swept axis (launch power, channel spacing or span count).
Each point is simulated once (transmitter, link) and then received with
every requested DSP mode, yielding one ``RateReport`` per mode.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import json
import logging
import math
import os
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constellation import build_qam, maxwell_boltzmann_pmf, optimize_shaping
from .dsp import DspMode, receive
from .errors import ConfigError, FiberRatesError
from .linksim import LinkConfig, build_wdm_frame, propagate_link
from .rates import REPORT_FIELDS, RateReport, estimate_r_sd, per_bit_ber, r_hd_1, r_hd_m, spectral_efficiency

log = logging.getLogger(__name__)

AXES = ("power", "spacing", "n_spans")
COMB_BANDWIDTH = 450e9
DESK_POWER_GRID = tuple(float(p) for p in range(-10, 9, 2))

PROFILES = {
    "paper": {},
    "desk": {
        "n_channels": 3,
        "n_spans": 10,
        "n_symbols": 2**14,
        "sps_sim": 16,
        "step_linear_m": 400.0,
        "step_nonlinear_m": 40.0,
        "dbp_sc_sps": 4,
    },
}

# config-file sections for every LinkConfig field
LINK_SECTIONS = {
    "link.tx": ("symbol_rate", "rrc_rolloff", "rrc_span_symbols", "launch_power_dbm_per_channel",
                "n_symbols", "seed"),
    "link.wdm": ("n_channels", "channel_spacing"),
    "link.fiber": ("span_length", "n_spans", "alpha_db_per_km", "gamma_per_w_km",
                   "dispersion_ps_nm_km", "center_wavelength"),
    "link.edfa": ("edfa_noise_figure_db",),
    "link.numerics": ("sps_sim", "step_policy", "step_linear_m", "step_nonlinear_m",
                      "nonlinear_power_threshold_dbm", "nl_phase_per_step", "max_step_m",
                      "dbp_sc_sps", "edge_symbols"),
}
SWEEP_KEYS = ("axis", "values", "modes", "m", "shaping", "seeds", "workers", "format",
              "comb_bandwidth_ghz", "max_channels")


@dataclass
class SweepSpec:
    """Definition of a sweep.

    Parameters
    ----------
    base : LinkConfig
        Everything not swept.
    axis : {"power", "spacing", "n_spans"}
    values : sequence
        Launch power per channel in dBm, channel spacing in GHz or span
        count, depending on ``axis``.
    modes : sequence of DspMode or str
    m_values : sequence of int
    shaping : "off", "auto" or float
        Uniform input, Maxwell-Boltzmann input optimized for the SNR seen
        at each point, or a fixed ``lambda``.
    seeds : sequence of int
    comb_bandwidth : float
        Total WDM bandwidth in Hz. When spacing is swept the channel count
        becomes the largest odd number fitting into it.
    max_channels : int, optional
        Upper bound on that channel count (desk-scale runs).
    """

    base: LinkConfig = field(default_factory=LinkConfig)
    axis: str = "power"
    values: tuple = (0.0,)
    modes: tuple = (DspMode.EDC,)
    m_values: tuple = (4,)
    shaping: object = "off"
    seeds: tuple = (1,)
    out: str | None = None
    output_format: str = "csv"
    workers: int = 1
    comb_bandwidth: float = COMB_BANDWIDTH
    max_channels: int | None = None

    def __post_init__(self):
        self.values = tuple(self.values)
        self.modes = tuple(DspMode(getattr(md, "value", md)) for md in self.modes)
        self.m_values = tuple(int(m) for m in self.m_values)
        self.seeds = tuple(int(s) for s in self.seeds)

    def validate(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}")
        if not (self.values and self.modes and self.m_values and self.seeds):
            raise ConfigError("a sweep needs at least one point and one DSP mode")
        if not (self.shaping in ("off", "auto") or isinstance(self.shaping, (int, float))):
            raise ConfigError("shaping must be 'off', 'auto' or a number")
        if isinstance(self.shaping, (int, float)) and self.shaping < 0:
            raise ConfigError("shaping lambda must be nonnegative")
        if self.output_format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def points(self):
        """Sweep points in emission order: m, then seed, then axis value."""
        self.validate()
        out = []
        for m in self.m_values:
            for seed in self.seeds:
                for v in self.values:
                    cfg = point_config(self.base, self.axis, v, self.comb_bandwidth, self.max_channels)
                    out.append(SweepPoint(len(out), cfg.replace(seed=seed), m, seed, self.shaping, self.modes))
        return out


@dataclass(frozen=True)
class SweepPoint:
    index: int
    config: LinkConfig
    m: int
    seed: int
    shaping: object
    modes: tuple


def channels_for_spacing(spacing, comb_bandwidth=COMB_BANDWIDTH, max_channels=None):
    """Largest odd channel count with ``n * spacing <= comb_bandwidth``."""
    n = math.floor(comb_bandwidth / spacing * (1 + 1e-12))
    if n % 2 == 0:
        n -= 1
    if max_channels is not None:
        n = min(n, max_channels if max_channels % 2 else max_channels - 1)
    if n < 1:
        raise ConfigError(f"no channel fits {comb_bandwidth / 1e9:g} GHz at {spacing / 1e9:g} GHz spacing")
    return n


def point_config(base, axis, value, comb_bandwidth=COMB_BANDWIDTH, max_channels=None):
    if axis == "power":
        return base.replace(launch_power_dbm_per_channel=float(value))
    if axis == "spacing":
        spacing = float(value) * 1e9
        n = channels_for_spacing(spacing, comb_bandwidth, max_channels)
        return base.replace(channel_spacing=spacing, n_channels=n)
    if axis == "n_spans":
        return base.replace(n_spans=int(value))
    raise ConfigError(f"unknown axis {axis!r}")


# point evaluation -------------------------------------------------------------------

def _report(cfg, mode, batch, m, seed):
    p, p_avg = per_bit_ber(batch)
    raw = estimate_r_sd(batch, clamp=False)
    r_sd = max(raw, 0.0)
    s2 = batch.sigma_sq
    return RateReport(
        power_dbm=cfg.launch_power_dbm_per_channel,
        spacing_ghz=cfg.channel_spacing / 1e9,
        n_spans=cfg.n_spans,
        dsp_mode=mode.value,
        lam=float(batch.constellation.pmf.lam or 0.0),
        r_sd=r_sd,
        r_hd_m=r_hd_m(p),
        r_hd_1=r_hd_1(p_avg, m),
        ber_avg=p_avg,
        sigma_sq_x=float(s2[0]),
        sigma_sq_y=float(s2[-1]),
        se=spectral_efficiency(r_sd, cfg.symbol_rate, cfg.channel_spacing),
        m=m,
        seed=seed,
        per_bit_ber=tuple(float(v) for v in p),
        r_sd_raw=raw,
        gain=tuple(complex(g) for g in batch.gain),
    )


def _simulate(cfg, constellation, modes, seed):
    frame, rec = build_wdm_frame(cfg, constellation, seed=seed)
    rx = propagate_link(frame, cfg, seed=seed)
    return [receive(rx, cfg, rec, mode) for mode in modes]


def _failed(point, mode, exc):
    cfg = point.config
    nan = float("nan")
    return RateReport(cfg.launch_power_dbm_per_channel, cfg.channel_spacing / 1e9, cfg.n_spans,
                      mode.value, nan, nan, nan, nan, nan, nan, nan, nan,
                      m=point.m, seed=point.seed, error=f"{type(exc).__name__}: {exc}")


def evaluate_point(point):
    """All reports of one sweep point; failures become NaN reports with
    ``error`` set instead of raising."""
    cfg = point.config
    try:
        cfg.validate()
        const = build_qam(point.m)
        if point.shaping == "auto":
            # first pass with uniform input gives the effective SNR
            probe = _simulate(cfg, const, point.modes[:1], point.seed)[0]
            snr_db = -10 * math.log10(float(np.mean(probe.sigma_sq)))
            const = const.with_pmf(optimize_shaping(const, snr_db))
        elif point.shaping not in ("off", None):
            const = const.with_pmf(maxwell_boltzmann_pmf(const, float(point.shaping)))
        batches = _simulate(cfg, const, point.modes, point.seed)
        return [_report(cfg, mode, b, point.m, point.seed) for mode, b in zip(point.modes, batches)]
    except (FiberRatesError, ValueError, FloatingPointError, MemoryError) as exc:
        log.warning("sweep point %d failed: %s", point.index, exc)
        return [_failed(point, mode, exc) for mode in point.modes]


# journal ---------------------------------------------------------------------------

def _report_to_json(r):
    d = dataclasses.asdict(r)
    d["gain"] = [[g.real, g.imag] for g in r.gain]
    d["per_bit_ber"] = list(r.per_bit_ber)
    return d


def _report_from_json(d):
    d = dict(d)
    d["gain"] = tuple(complex(re, im) for re, im in d["gain"])
    d["per_bit_ber"] = tuple(d["per_bit_ber"])
    return RateReport(**d)


def journal_path(out):
    return Path(str(out) + ".partial.jsonl")


def _load_journal(path):
    done = {}
    if path.exists():
        for line in path.read_text().splitlines():
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                # torn final line from an interrupted run
                continue
            done[rec["index"]] = [_report_from_json(d) for d in rec["reports"]]
    return done


def _append_journal(path, index, reports):
    with open(path, "a") as fh:
        fh.write(json.dumps({"index": index, "reports": [_report_to_json(r) for r in reports]}) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def run_sweep(spec, journal=None, stop_after=None):
    """Run every sweep point and return the reports in point order.

    Parameters
    ----------
    spec : SweepSpec
    journal : path, optional
        Completed points are appended here as they finish and skipped on
        the next call, so an interrupted sweep can be resumed. Defaults to
        ``<spec.out>.partial.jsonl`` when ``spec.out`` is set.
    stop_after : int, optional
        Stop once this many new points have completed (used to exercise
        resumption).
    """
    points = spec.points()
    if journal is None and spec.out is not None:
        journal = journal_path(spec.out)
    journal = Path(journal) if journal is not None else None
    done = _load_journal(journal) if journal is not None else {}
    todo = [p for p in points if p.index not in done]
    if stop_after is not None:
        todo = todo[:stop_after]

    def record(point, reports):
        done[point.index] = reports
        if journal is not None:
            _append_journal(journal, point.index, reports)

    if spec.workers == 1 or len(todo) <= 1:
        for p in todo:
            record(p, evaluate_point(p))
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for p, reports in zip(todo, pool.map(evaluate_point, todo)):
                record(p, reports)

    return [r for p in points if p.index in done for r in done[p.index]]


# emission --------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def format_results(reports, fmt="csv"):
    """Serialized reports as a string; byte-stable for identical input."""
    rows = [r.as_row() for r in reports]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for row in rows:
            w.writerow([_cell(row[k]) for k in REPORT_FIELDS])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps(rows, indent=1) + "\n"
    raise ConfigError(f"unknown output format {fmt!r}")


def emit_results(reports, fmt, path):
    """Write reports as CSV (header plus one row each) or a JSON array."""
    text = format_results(reports, fmt)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from exc
    return Path(path)


def read_results(path):
    """Inverse of ``emit_results`` for either format."""
    text = Path(path).read_text()
    if text.lstrip().startswith("["):
        rows = json.loads(text)
    else:
        rows = list(csv.DictReader(io.StringIO(text)))
    return [RateReport.from_row(r) for r in rows]


def group_key(report):
    return (report.m, report.seed)


def split_by_group(reports):
    """Reports grouped by (m, seed), preserving order."""
    groups = {}
    for r in reports:
        groups.setdefault(group_key(r), []).append(r)
    return groups


def optimal_power_reports(reports):
    """Best report over launch power for every other coordinate.

    Argmax of ``r_sd`` over the sampled grid without interpolation; the
    lowest power wins ties. Failed points are ignored.
    """
    best = {}
    for r in reports:
        if r.error is not None or not np.isfinite(r.r_sd):
            continue
        key = (r.m, r.seed, r.dsp_mode, r.spacing_ghz, r.n_spans)
        cur = best.get(key)
        if cur is None or r.r_sd > cur.r_sd:
            best[key] = r
    return list(best.values())


def is_unimodal(values):
    """True if the sequence rises to a single maximum and then falls."""
    v = np.asarray(values, dtype=float)
    k = int(np.argmax(v))
    return bool(np.all(np.diff(v[: k + 1]) >= 0) and np.all(np.diff(v[k:]) <= 0))


# configuration files ---------------------------------------------------------------

_LINK_TYPES = typing.get_type_hints(LinkConfig)


def _parse_link_value(name, text):
    kind = _LINK_TYPES[name]
    text = text.strip()
    if text.lower() in ("", "none") and "None" in str(kind):
        return None
    if name == "step_policy":
        return text
    try:
        v = float(text)
        if "int" in str(kind):
            if not v.is_integer():
                raise ValueError
            return int(v)
        return v
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def _parse_list(text, cast):
    try:
        return tuple(cast(t.strip()) for t in text.replace(";", ",").split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"bad list {text!r}") from exc


def load_config(path=None, profile=None, text=None):
    """Build a ``SweepSpec`` from a profile and an optional INI override.

    Defaults come from ``LinkConfig`` (the full-scale setup), then the
    named profile, then the file. See ``LINK_SECTIONS`` and
    ``SWEEP_KEYS`` for the accepted keys.
    """
    if profile is not None and profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    link = dict(PROFILES.get(profile or "paper"))
    sweep = {"values": DESK_POWER_GRID}
    if profile == "desk":
        sweep["max_channels"] = link["n_channels"]

    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(path) as fh:
                parser.read_file(fh)
    except (configparser.Error, OSError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc

    for section in parser.sections():
        if section == "sweep":
            for key, val in parser.items(section):
                if key not in SWEEP_KEYS:
                    raise ConfigError(f"unknown key [sweep] {key}")
                sweep[key] = val
        elif section in LINK_SECTIONS:
            for key, val in parser.items(section):
                if key not in LINK_SECTIONS[section]:
                    raise ConfigError(f"unknown key [{section}] {key}")
                link[key] = _parse_link_value(key, val)
        else:
            raise ConfigError(f"unknown section [{section}]")

    base = LinkConfig(**link)
    axis = str(sweep.get("axis", "power")).strip()
    values = sweep["values"]
    if isinstance(values, str):
        values = _parse_list(values, int if axis == "n_spans" else float)
    shaping = str(sweep.get("shaping", "off")).strip().lower()
    if shaping not in ("off", "auto"):
        try:
            shaping = float(shaping)
        except ValueError as exc:
            raise ConfigError(f"bad shaping {shaping!r}") from exc
    try:
        max_ch = sweep.get("max_channels")
        spec = SweepSpec(
            base=base,
            axis=axis,
            values=values,
            modes=_parse_list(str(sweep.get("modes", "edc")), str),
            m_values=_parse_list(str(sweep.get("m", "4")), int),
            shaping=shaping,
            seeds=_parse_list(str(sweep.get("seeds", str(base.seed))), int),
            workers=int(sweep.get("workers", 1)),
            comb_bandwidth=float(sweep.get("comb_bandwidth_ghz", COMB_BANDWIDTH / 1e9)) * 1e9,
            max_channels=None if max_ch in (None, "", "none") else int(max_ch),
            output_format=str(sweep.get("format", "csv")).strip(),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return spec.validate()
