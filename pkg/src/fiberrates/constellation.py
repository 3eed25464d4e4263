"""Square QAM constellations with Gray labels and (shaped) input distributions.

Points are indexed by their label: point ``k`` carries the ``m``-bit label
``k`` (MSB first). The first ``m/2`` bits select the in-phase level and the
last ``m/2`` bits the quadrature level, each through a binary-reflected
Gray code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedFormatError

PMF_SUM_TOL = 1e-12
ENERGY_TOL = 1e-9


@dataclass(frozen=True)
class Pmf:
    """Probability mass function over constellation points.

    ``lam`` records the Maxwell-Boltzmann parameter when the PMF came from
    that family (``None`` otherwise).
    """

    probabilities: np.ndarray
    lam: float | None = None

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("PMF must be a non-empty 1-D array")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("PMF entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > PMF_SUM_TOL:
            raise ValueError(f"PMF sums to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def uniform(cls, size):
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def from_weights(cls, weights, lam=None):
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum(), lam=lam)

    def __len__(self):
        return self.probabilities.size

    @property
    def is_uniform(self):
        return bool(np.all(self.probabilities == self.probabilities[0]))

    def entropy(self):
        """Entropy in bits, with 0 log 0 = 0."""
        p = self.probabilities[self.probabilities > 0]
        return float(-np.sum(p * np.log2(p)))


@dataclass(frozen=True)
class Constellation:
    """Labeled complex constellation with an attached input PMF.

    ``points`` have unit average energy under ``pmf``.
    """

    m: int
    points: np.ndarray
    labels: np.ndarray
    pmf: Pmf = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        labels = np.asarray(self.labels, dtype=np.int64)
        if pts.shape != (2**self.m,) or labels.shape != pts.shape:
            raise ValueError("need 2**m points and labels")
        if len(self.pmf) != pts.size:
            raise ValueError("PMF length does not match the constellation")
        if sorted(labels.tolist()) != list(range(pts.size)):
            raise ValueError("labels must be a bijection onto {0,1}^m")
        pts.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self):
        return self.points.size

    @property
    def bits(self):
        """(M, m) array of label bits, MSB first."""
        shifts = np.arange(self.m - 1, -1, -1)
        return ((self.labels[:, None] >> shifts) & 1).astype(np.uint8)

    def average_energy(self):
        return float(np.sum(self.pmf.probabilities * np.abs(self.points) ** 2))

    def with_pmf(self, pmf):
        """Same geometry under a new PMF, re-normalized to unit energy."""
        if not isinstance(pmf, Pmf):
            pmf = Pmf(pmf)
        energy = np.sum(pmf.probabilities * np.abs(self.points) ** 2)
        return Constellation(self.m, self.points / np.sqrt(energy), self.labels, pmf)

    def to_dict(self):
        return {
            "m": self.m,
            "points": [[float(p.real), float(p.imag)] for p in self.points],
            "labels": [format(int(lab), f"0{self.m}b") for lab in self.labels],
            "pmf": [float(p) for p in self.pmf.probabilities],
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        pts = np.array([complex(re, im) for re, im in d["points"]])
        labels = np.array([int(s, 2) for s in d["labels"]])
        return cls(int(d["m"]), pts, labels, Pmf(np.array(d["pmf"], dtype=float)))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def gray_encode(n):
    return n ^ (n >> 1)


def gray_decode(g):
    n = np.array(g, dtype=np.int64, copy=True)
    shift = n >> 1
    while np.any(shift):
        n ^= shift
        shift >>= 1
    return n


def qam_grid(m):
    """Unnormalized odd-integer QAM grid, indexed by label."""
    if m < 2 or m % 2:
        raise UnsupportedFormatError(f"square QAM needs an even m >= 2, got m={m}")
    half = m // 2
    levels = 2**half
    labels = np.arange(2**m)
    i_level = gray_decode(labels >> half)
    q_level = gray_decode(labels & (levels - 1))
    amp = 2 * np.arange(levels) - (levels - 1)
    return amp[i_level] + 1j * amp[q_level]


def build_qam(m, pmf="uniform"):
    """Gray-labeled square QAM with unit average energy under ``pmf``.

    Parameters
    ----------
    m : int
        Bits per symbol, even and >= 2.
    pmf : Pmf, array_like or "uniform"
        Input distribution over the points (ordered by label).

    Returns
    -------
    Constellation
    """
    grid = qam_grid(m)
    if isinstance(pmf, str):
        if pmf != "uniform":
            raise ValueError(f"unknown PMF keyword {pmf!r}")
        pmf = Pmf.uniform(grid.size)
    elif not isinstance(pmf, Pmf):
        pmf = Pmf(pmf)
    base = Constellation(m, grid, np.arange(grid.size), Pmf.uniform(grid.size))
    return base.with_pmf(pmf)


def maxwell_boltzmann_pmf(constellation, lam):
    """PMF proportional to ``exp(-lam * |x|^2)`` over the given points.

    The caller re-normalizes the constellation energy afterwards
    (``Constellation.with_pmf`` does this).
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    energy = np.abs(constellation.points) ** 2
    # shift by the minimum energy so the largest weight is exactly 1
    weights = np.exp(-lam * (energy - energy.min()))
    return Pmf.from_weights(weights, lam=float(lam))


def _uniform_geometry(constellation):
    """Points rescaled to unit energy under the uniform PMF."""
    pts = constellation.points
    scale = np.sqrt(np.mean(np.abs(pts) ** 2))
    return Constellation(
        constellation.m, pts / scale, constellation.labels, Pmf.uniform(pts.size)
    )


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def optimize_shaping(constellation, snr_db, lam_max=8.0, tol=1e-4, quad_order=None):
    """Maxwell-Boltzmann PMF maximizing the AWGN mutual information.

    Golden-section search over ``lam`` in ``[0, lam_max]``. ``lam`` is
    applied to the geometry normalized to unit energy under uniform input,
    and every candidate is re-normalized to unit energy before evaluating
    the AWGN oracle at noise variance ``10**(-snr_db/10)``.

    Returns
    -------
    Pmf
        The optimized PMF; ``pmf.lam`` holds the chosen parameter.
    """
    from .rates import awgn_mi_oracle

    geometry = _uniform_geometry(constellation)
    energy = np.abs(geometry.points) ** 2
    if np.ptp(energy) < 1e-12:
        # all points on one circle: the family is constant in lam
        return maxwell_boltzmann_pmf(geometry, 0.0)

    sigma_sq = 10.0 ** (-snr_db / 10.0)
    kwargs = {} if quad_order is None else {"order": quad_order}
    cache = {}

    def mi(lam):
        if lam not in cache:
            shaped = geometry.with_pmf(maxwell_boltzmann_pmf(geometry, lam))
            cache[lam] = awgn_mi_oracle(shaped, sigma_sq, **kwargs)
        return cache[lam]

    a, b = 0.0, float(lam_max)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    while b - a > tol:
        if mi(c) >= mi(d):
            b, d = d, c
            c = b - _INV_PHI * (b - a)
        else:
            a, c = c, d
            d = a + _INV_PHI * (b - a)
    lam = 0.5 * (a + b)
    # lam = 0 is always feasible; never return something worse than uniform
    if mi(0.0) >= mi(lam):
        lam = 0.0
    return maxwell_boltzmann_pmf(geometry, lam)


def hard_decision(y, constellation, chunk=1 << 16):
    """Minimum-distance decisions; ties go to the lowest index.

    Works on scalars or arrays of any shape.
    """
    y = np.asarray(y, dtype=complex)
    flat = y.ravel()
    out = np.empty(flat.size, dtype=np.int64)
    pts = constellation.points
    for start in range(0, flat.size, chunk):
        block = flat[start : start + chunk]
        d2 = np.abs(block[:, None] - pts[None, :]) ** 2
        out[start : start + chunk] = np.argmin(d2, axis=1)
    if y.ndim == 0:
        return int(out[0])
    return out.reshape(y.shape)


def symbols_from_bits(bits, constellation):
    """Map a bit stream (MSB first, ``m`` bits per symbol) to point indices."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    m = constellation.m
    if bits.size % m:
        raise ValueError(f"bit count {bits.size} is not a multiple of m={m}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    weights = 1 << np.arange(m - 1, -1, -1)
    labels = bits.reshape(-1, m) @ weights
    # point index equals label for constellations from build_qam; stay general
    lookup = np.empty(constellation.size, dtype=np.int64)
    lookup[constellation.labels] = np.arange(constellation.size)
    return lookup[labels]


def symbols_from_pmf(pmf, n, rng):
    """Draw ``n`` i.i.d. point indices from ``pmf``."""
    if isinstance(pmf, Constellation):
        pmf = pmf.pmf
    p = pmf.probabilities if isinstance(pmf, Pmf) else np.asarray(pmf, dtype=float)
    return rng.choice(p.size, size=int(n), p=p)
