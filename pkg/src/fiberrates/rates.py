"""Achievable-rate estimators for coherent symbol data.

Noise variance convention used throughout: ``sigma_sq`` is the total
complex noise variance ``E|y - x|^2`` (both quadratures together). The
Gaussian auxiliary channel therefore has kernel
``exp(-|y - x|^2 / (2 s^2))`` with per-quadrature variance
``s^2 = sigma_sq / 2``, i.e. ``exp(-|y - x|^2 / sigma_sq)``.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .constellation import hard_decision
from .errors import DegenerateInputError

MC_SLACK = 0.01
_UNDERFLOW_FLOOR = 1e-290

REPORT_FIELDS = (
    "power_dbm",
    "spacing_ghz",
    "n_spans",
    "dsp_mode",
    "lambda",
    "r_sd",
    "r_hd_m",
    "r_hd_1",
    "ber_avg",
    "sigma_sq_x",
    "sigma_sq_y",
    "se",
)


@dataclass
class RateReport:
    """Rates for one sweep point and receiver DSP mode.

    The twelve serialized fields follow ``REPORT_FIELDS``; ``lam`` is
    serialized as ``lambda``. Everything below ``se`` is diagnostic and
    excluded from equality and from the file formats.
    """

    power_dbm: float
    spacing_ghz: float
    n_spans: int
    dsp_mode: str
    lam: float
    r_sd: float
    r_hd_m: float
    r_hd_1: float
    ber_avg: float
    sigma_sq_x: float
    sigma_sq_y: float
    se: float
    m: int | None = field(default=None, compare=False)
    seed: int | None = field(default=None, compare=False)
    per_bit_ber: tuple = field(default=(), compare=False)
    r_sd_raw: float | None = field(default=None, compare=False)
    gain: tuple = field(default=(), compare=False)
    error: str | None = field(default=None, compare=False)

    def as_row(self):
        """Serialized fields in ``REPORT_FIELDS`` order."""
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        return {k: d[k] for k in REPORT_FIELDS}

    @classmethod
    def from_row(cls, row):
        kw = {k: row[k] for k in REPORT_FIELDS}
        kw["lam"] = float(kw.pop("lambda"))
        for k in ("power_dbm", "spacing_ghz", "r_sd", "r_hd_m", "r_hd_1",
                  "ber_avg", "sigma_sq_x", "sigma_sq_y", "se"):
            kw[k] = float(kw[k])
        kw["n_spans"] = int(kw["n_spans"])
        kw["dsp_mode"] = str(kw["dsp_mode"])
        return cls(**kw)


def _posterior_rows(y, points, prior, sigma_sq):
    """Posterior matrix of shape ``y.shape + (M,)``.

    Exponents are shifted by their row maximum before exponentiation, so
    the nearest point always has weight 1 (times its prior).
    """
    y = np.asarray(y, dtype=complex)
    d2 = np.abs(y[..., None] - points) ** 2
    a = -d2 / sigma_sq
    a -= a.max(axis=-1, keepdims=True)
    w = np.exp(a)
    if prior is not None:
        w *= prior
    total = w.sum(axis=-1, keepdims=True)
    bad = total[..., 0] < _UNDERFLOW_FLOOR
    if np.any(bad):
        # prior mass sits on far points only; redo those rows in log domain
        with np.errstate(divide="ignore"):
            logw = -d2[bad] / sigma_sq + np.log(prior)
        logw -= logw.max(axis=-1, keepdims=True)
        w[bad] = np.exp(logw)
        total[bad] = w[bad].sum(axis=-1, keepdims=True)
    return w / total


def posterior(y, constellation, sigma_sq):
    """Posterior ``q(x|y)`` under the Gaussian auxiliary channel.

    Parameters
    ----------
    y : complex or array_like
        Received sample(s).
    constellation : Constellation
        Points and prior ``P_X``.
    sigma_sq : float
        Total complex noise variance (see module docstring).

    Returns
    -------
    np.ndarray
        Shape ``np.shape(y) + (M,)``; each row sums to one.
    """
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be positive")
    return _posterior_rows(y, constellation.points, constellation.pmf.probabilities, sigma_sq)


def _neg_cond_entropy(q):
    """Per-row sum of q log2 q with 0 log 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(q > 0, q * np.log2(q), 0.0)
    return t.sum(axis=-1)


def r_sd_general(rx, constellation, sigma_sq):
    """Monte-Carlo soft-decision bound for an arbitrary input PMF.

    ``H(X) + mean_n sum_x q(x|y_n) log2 q(x|y_n)``.
    """
    rx = np.asarray(rx, dtype=complex).ravel()
    if rx.size == 0:
        raise DegenerateInputError("empty batch")
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be positive")
    prior = constellation.pmf.probabilities
    q = _posterior_rows(rx, constellation.points, prior, sigma_sq)
    nz = prior[prior > 0]
    h_x = -np.sum(nz * np.log2(nz))
    return float(h_x + np.mean(_neg_cond_entropy(q)))


def r_sd_uniform(rx, constellation, sigma_sq):
    """Soft-decision bound specialized to uniform input (prior cancels)."""
    rx = np.asarray(rx, dtype=complex).ravel()
    if rx.size == 0:
        raise DegenerateInputError("empty batch")
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be positive")
    q = _posterior_rows(rx, constellation.points, None, sigma_sq)
    return float(constellation.m + np.mean(_neg_cond_entropy(q)))


def estimate_r_sd(batch, clamp=True):
    """Soft-decision rate of a ``SymbolBatch``, averaged over polarizations.

    Uses the batch's per-polarization ``sigma_sq``. Returns the value
    clamped at zero unless ``clamp`` is false.
    """
    if batch.sigma_sq is None:
        raise ValueError("batch has no noise variance; run estimate_noise_variance")
    const = batch.constellation
    fn = r_sd_uniform if const.pmf.is_uniform else r_sd_general
    vals = [fn(batch.rx_symbols[p], const, batch.sigma_sq[p]) for p in range(batch.n_pol)]
    raw = float(np.mean(vals))
    return max(raw, 0.0) if clamp else raw


def per_bit_ber(batch):
    """Pre-FEC bit error rate per label position, pooled over polarizations.

    Returns
    -------
    p : np.ndarray
        Shape ``(m,)``.
    p_avg : float
    """
    const = batch.constellation
    tx = np.asarray(batch.tx_indices).ravel()
    if tx.size == 0:
        raise DegenerateInputError("empty batch")
    decided = hard_decision(np.asarray(batch.rx_symbols).ravel(), const)
    bits = const.bits
    errors = bits[tx] != bits[decided]
    p = errors.mean(axis=0)
    return p, float(p.mean())


def binary_entropy(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    return np.where((p <= 0) | (p >= 1), 0.0, h)


def _reflect(p):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("bit error rates must lie in [0, 1]")
    # a BSC with p > 1/2 is the same channel with flipped outputs
    return np.minimum(p, 1.0 - p)


def r_hd_m(p):
    """Hard-decision rate with one binary code per label position."""
    p = _reflect(p)
    return float(np.sum(1.0 - binary_entropy(p)))


def r_hd_1(p_avg, m):
    """Hard-decision rate with a single binary code over all positions."""
    p = _reflect(p_avg)
    return float(m * (1.0 - binary_entropy(p)))


def spectral_efficiency(r_sd, symbol_rate, spacing):
    """Dual-polarization spectral efficiency in bit/s/Hz."""
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    return 2.0 * r_sd * symbol_rate / spacing


def _oracle_at_order(points, prior, sigma_sq, order):
    t, w = np.polynomial.hermite.hermgauss(order)
    noise = np.sqrt(sigma_sq) * (t[:, None] + 1j * t[None, :]).ravel()
    weights = (w[:, None] * w[None, :]).ravel() / np.pi
    noise_energy = np.abs(noise) ** 2
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    total = 0.0
    for x, px in zip(points, prior):
        if px == 0:
            continue
        # y = x + n scored against every candidate x'
        d2 = np.abs((x - points)[:, None] + noise[None, :]) ** 2
        expo = -(d2 - noise_energy) / sigma_sq + log_prior[:, None]
        total += px * (logsumexp(expo, axis=0) @ weights)
    return float(-total / np.log(2))


def awgn_mi_oracle(constellation, sigma_sq, order=20, check_order=None, check_tol=1e-4):
    """Exact mutual information of the constellation over complex AWGN.

    Evaluated with tensor-product Gauss-Hermite quadrature over the noise,
    ``order`` nodes per real dimension. If ``check_order`` is given the
    value is recomputed at that order and a ``RuntimeWarning`` is issued
    when the two differ by more than ``check_tol``; the higher-order value
    is returned whenever a check is requested.

    Parameters
    ----------
    constellation : Constellation
    sigma_sq : float
        Total complex noise variance.
    """
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be positive")
    pts = constellation.points
    prior = constellation.pmf.probabilities
    val = _oracle_at_order(pts, prior, sigma_sq, order)
    if check_order is not None:
        ref = _oracle_at_order(pts, prior, sigma_sq, check_order)
        if abs(ref - val) > check_tol:
            warnings.warn(
                f"quadrature not converged: order {order} -> {val:.6f}, "
                f"order {check_order} -> {ref:.6f}",
                RuntimeWarning,
                stacklevel=2,
            )
        val = ref
    return val
