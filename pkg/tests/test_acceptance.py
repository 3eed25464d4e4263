"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the
terminal summary) or ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
import warnings

import numpy as np
import pytest
from scipy.optimize import brentq

from fiberrates.cli import main as cli_main
from fiberrates.constellation import Pmf, build_qam, optimize_shaping
from fiberrates.dsp import awgn_batch, dbp, edc
from fiberrates.harness import SweepSpec, is_unimodal, load_config, optimal_power_reports, run_sweep
from fiberrates.linksim import FieldFrame, LinkConfig, build_wdm_frame, propagate_link, ssfm_span
from fiberrates.rates import (
    awgn_mi_oracle,
    estimate_r_sd,
    per_bit_ber,
    r_hd_1,
    r_hd_m,
    r_sd_general,
    r_sd_uniform,
    spectral_efficiency,
)

RESULT_LINES = {}


def record(n, title, checks, elapsed, budget=None):
    """Store and print the verdict line, then fail on any failed check."""
    checks = list(checks)
    if budget is None:
        checks.append((f"runtime {elapsed:.1f}s", True))
    else:
        checks.append((f"runtime {elapsed:.1f}s <= {budget:g}s", elapsed <= budget))
    ok = all(passed for _, passed in checks)
    failed = [name for name, passed in checks if not passed]
    detail = "; ".join(name for name, _ in checks) if ok else "failed: " + "; ".join(failed)
    line = f"{'PASS' if ok else 'FAIL'} [{n}] {title} | {detail}"
    RESULT_LINES[n] = line
    print(line)
    assert ok, line


def rel_rms(a, b):
    return float(np.sqrt(np.mean(np.abs(a - b) ** 2) / np.mean(np.abs(b) ** 2)))


def snr_db_for_mi(const, target):
    """SNR at which the uniform-input AWGN MI equals ``target``."""
    return brentq(lambda s: awgn_mi_oracle(const, 10 ** (-s / 10)) - target, -10.0, 40.0, xtol=1e-6)


# 1 -------------------------------------------------------------------------------

def test_c1_estimator_matches_oracle():
    t0 = time.perf_counter()
    checks = []
    for m in (2, 4, 6):
        c = build_qam(m)
        for snr in (0, 5, 10, 15, 20):
            s2 = 10 ** (-snr / 10)
            est = estimate_r_sd(awgn_batch(c, s2, 2**16, seed=100 * m + snr))
            # the order-40 value is returned; a warning only flags that order 20 differed
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                orc = awgn_mi_oracle(c, s2, order=20, check_order=40)
            err = abs(est - orc)
            flag = " (order 20 unconverged)" if caught else ""
            checks.append((f"m={m} {snr}dB |d|={err:.4f}{flag}", err <= 0.01))
    record(1, "estimator vs AWGN oracle", checks, time.perf_counter() - t0, 60)


# 2 -------------------------------------------------------------------------------

def test_c2_shaping_gain_on_awgn():
    t0 = time.perf_counter()
    c = build_qam(6)
    snr = snr_db_for_mi(c, 4.0)
    pmf = optimize_shaping(c, snr)
    s2 = 10 ** (-snr / 10)
    gain = awgn_mi_oracle(c.with_pmf(pmf), s2) - awgn_mi_oracle(c, s2)
    checks = [(f"64-QAM at {snr:.3f} dB lambda={pmf.lam:.3f} gain={gain:.4f} in (0.05, 0.35)",
               0.05 < gain < 0.35)]
    record(2, "shaping gain on AWGN", checks, time.perf_counter() - t0, 60)


# 3 -------------------------------------------------------------------------------

def test_c3_hard_decision_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    checks = [
        ("p=0 gives m", r_hd_m(np.zeros(4)) == 4.0 and r_hd_1(0.0, 4) == 4.0),
        ("p=0.5 gives 0", r_hd_m(np.full(4, 0.5)) == 0.0 and r_hd_1(0.5, 4) == 0.0),
    ]
    jensen = True
    for _ in range(1000):
        m = int(rng.choice([2, 4, 6, 8]))
        p = rng.uniform(0, 0.5, m)
        jensen &= r_hd_1(float(np.mean(p)), m) <= r_hd_m(p)
    checks.append(("Jensen r_hd_1 <= r_hd_m on 1000 vectors", bool(jensen)))
    qpsk = all(r_hd_m([p, p]) == r_hd_1(float(np.mean([p, p])), 2) for p in rng.uniform(0, 0.5, 200))
    checks.append(("QPSK p1 = p2 gives r_hd_m = r_hd_1", qpsk))
    record(3, "hard-decision identities", checks, time.perf_counter() - t0, 1)


# 4 -------------------------------------------------------------------------------

PAPER_GAPS = {2: 0.05, 4: 0.5, 6: 1.0}


def test_c4_sd_hd_gap_grows_with_m():
    t0 = time.perf_counter()
    gaps = {}
    checks = []
    for m in (2, 4, 6):
        c = build_qam(m)
        snr = snr_db_for_mi(c, 0.74 * m)
        batch = awgn_batch(c, 10 ** (-snr / 10), 2**18, seed=40 + m)
        _, p_avg = per_bit_ber(batch)
        r_sd = estimate_r_sd(batch)
        gaps[m] = r_sd - r_hd_1(p_avg, m)
        ref = PAPER_GAPS[m]
        checks.append((f"m={m} at {snr:.2f} dB: R_SD={r_sd:.3f} gap={gaps[m]:.3f} "
                       f"within +-50% of {ref}", 0.5 * ref <= gaps[m] <= 1.5 * ref))
    checks.insert(0, ("gap increasing in m", gaps[2] < gaps[4] < gaps[6]))
    record(4, "SD-HD gap growth", checks, time.perf_counter() - t0, 120)


# 5 -------------------------------------------------------------------------------

def test_c5_ssfm_identities():
    t0 = time.perf_counter()
    base = LinkConfig(sps_sim=16, n_symbols=2**12, n_channels=3, span_length=100e3,
                      step_linear_m=1000, step_nonlinear_m=1000)
    rng = np.random.default_rng(5)
    noise = (rng.standard_normal((2, base.n_samples)) + 1j * rng.standard_normal((2, base.n_samples)))
    frame = FieldFrame(noise * math.sqrt(1e-3 / 4), base.sample_rate)
    checks = []

    cfg = base.replace(alpha_db_per_km=0.0, gamma_per_w_km=0.0)
    back = edc(ssfm_span(frame, cfg), cfg.span_length, cfg)
    err = rel_rms(back.samples, frame.samples)
    checks.append((f"dispersion round trip rel RMS {err:.1e} <= 1e-6", err <= 1e-6))

    cfg = base.replace(alpha_db_per_km=0.0, dispersion_ps_nm_km=0.0)
    p = 2e-3
    cw = FieldFrame(np.full((2, 1024), math.sqrt(p / 2), dtype=complex), cfg.sample_rate)
    out = ssfm_span(cw, cfg)
    phase = float(np.angle(out.samples[0, 0] / cw.samples[0, 0]))
    expected = 8 / 9 * cfg.gamma * p * cfg.span_length
    checks.append((f"CW SPM |dphi|={abs(phase - expected):.1e} rad <= 1e-6", abs(phase - expected) <= 1e-6))

    cfg = base.replace(gamma_per_w_km=0.0, dispersion_ps_nm_km=0.0)
    loss = 10 * math.log10(ssfm_span(frame, cfg).power() / frame.power())
    checks.append((f"100 km loss error {abs(loss + 20):.1e} dB <= 1e-9", abs(loss + 20) <= 1e-9))

    cfg = base.replace(alpha_db_per_km=0.0)
    strong = frame.with_samples(frame.samples * math.sqrt(50))
    drift = abs(ssfm_span(strong, cfg).energy() / strong.energy() - 1)
    checks.append((f"lossless energy drift {drift:.1e} <= 1e-9", drift <= 1e-9))
    record(5, "split-step analytic identities", checks, time.perf_counter() - t0, 60)


# 6 -------------------------------------------------------------------------------

def test_c6_dbp_inversion():
    t0 = time.perf_counter()
    desk = load_config(text="", profile="desk").base
    # the mirrored back-propagation is exact for any step plan; the
    # power-adaptive plan keeps the desk-scale run short
    cfg = desk.replace(n_channels=1, launch_power_dbm_per_channel=6.0, step_policy="nlpr",
                       edfa_noise_figure_db=-math.inf)
    frame, _ = build_wdm_frame(cfg, build_qam(4))
    rx = propagate_link(frame, cfg)
    err_edc = rel_rms(edc(rx, cfg.total_length, cfg).samples, frame.samples)
    err = rel_rms(dbp(rx, cfg, "mc").samples, frame.samples)
    checks = [(f"MC-DBP rel RMS {err:.1e} <= 1e-4 (EDC leaves {err_edc:.1e})", err <= 1e-4)]

    lin = cfg.replace(gamma_per_w_km=0.0)
    rx = propagate_link(frame, lin)
    d = rel_rms(dbp(rx, lin, "mc").samples, edc(rx, lin.total_length, lin).samples)
    checks.append((f"gamma=0: DBP vs EDC rel RMS {d:.1e} <= 1e-9", d <= 1e-9))
    record(6, "DBP inversion", checks, time.perf_counter() - t0, 120)


# 7 -------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def desk_sweeps():
    """Desk-scale sweeps shared by the three orderings of criterion 7."""
    t0 = time.perf_counter()
    spec = load_config(text="", profile="desk")
    base = spec.base.replace(step_policy="nlpr", seed=7)
    grid = spec.values

    def sweep(m, modes, spacing=30e9, values=grid):
        return run_sweep(SweepSpec(base.replace(channel_spacing=spacing), values=values,
                                   modes=modes, m_values=(m,), seeds=(7,), max_channels=3))

    out = {
        "a": sweep(4, ("edc",)),
        "b": sweep(6, ("edc", "sc-dbp", "mc-dbp")),
        "c50": sweep(6, ("edc",), spacing=50e9),
        "c275": sweep(6, ("edc",), spacing=27.5e9, values=(grid[0],)),
    }
    out["elapsed"] = time.perf_counter() - t0
    return out


def _curve(reports, mode):
    rows = sorted((r for r in reports if r.dsp_mode == mode), key=lambda r: r.power_dbm)
    return [r.power_dbm for r in rows], [r.r_sd for r in rows]


def test_c7_desk_scale_orderings(desk_sweeps):
    checks = []
    errors = [r.error for k in ("a", "b", "c50", "c275") for r in desk_sweeps[k] if r.error]
    checks.append((f"{len(errors)} failed points", not errors))

    powers, rates = _curve(desk_sweeps["a"], "edc")
    k = int(np.argmax(rates))
    checks.append((f"(a) 16-QAM EDC unimodal, peak {rates[k]:.4f} at {powers[k]:g} dBm",
                   is_unimodal(rates) and 0 < k < len(rates) - 1))

    best = {r.dsp_mode: r for r in optimal_power_reports(desk_sweeps["b"])}
    e, s, mc = (best[md] for md in ("edc", "sc-dbp", "mc-dbp"))
    checks.append((f"(b) 64-QAM optimum MC {mc.r_sd:.4f}@{mc.power_dbm:g} >= SC {s.r_sd:.4f}"
                   f"@{s.power_dbm:g} >= EDC {e.r_sd:.4f}@{e.power_dbm:g}",
                   mc.r_sd >= s.r_sd >= e.r_sd))

    (b50,) = optimal_power_reports(desk_sweeps["c50"])
    checks.append((f"(c) 50 GHz optimum {b50.r_sd:.4f} >= 30 GHz {e.r_sd:.4f}", b50.r_sd >= e.r_sd))
    low30 = min((r for r in desk_sweeps["b"] if r.dsp_mode == "edc"), key=lambda r: r.power_dbm)
    (low275,) = desk_sweeps["c275"]
    checks.append((f"(c) at {low30.power_dbm:g} dBm 27.5 GHz {low275.r_sd:.4f} < 30 GHz {low30.r_sd:.4f}",
                   low275.r_sd < low30.r_sd))
    record(7, "desk-scale fiber orderings", checks, desk_sweeps["elapsed"], 1800)


# 8 -------------------------------------------------------------------------------

def test_c8_spectral_efficiency():
    t0 = time.perf_counter()
    se = spectral_efficiency(2.95, 28e9, 30e9)
    checks = [(f"2*2.95*28/30 = {se:.6f} -> {round(se, 2)}",
               se == 2 * 2.95 * 28 / 30 and round(se, 2) == 5.51)]
    record(8, "spectral efficiency arithmetic", checks, time.perf_counter() - t0)


# 9 -------------------------------------------------------------------------------

def test_c9_general_and_uniform_paths_agree():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    mismatches = 0
    for i in range(100):
        m = int(rng.choice([2, 4, 6]))
        c = build_qam(m).with_pmf(Pmf.uniform(2**m))
        s2 = float(10 ** rng.uniform(-2.5, 0.5))
        b = awgn_batch(c, s2, int(rng.integers(100, 5000)), seed=i)
        mismatches += r_sd_general(b.rx_symbols, c, b.sigma_sq[0]) != r_sd_uniform(b.rx_symbols, c, b.sigma_sq[0])
    checks = [(f"{mismatches} of 100 batches differ", mismatches == 0)]
    record(9, "general vs uniform-input estimator", checks, time.perf_counter() - t0)


# 10 ------------------------------------------------------------------------------

DETERMINISM_INI = """
[sweep]
values = -10
modes = edc
m = 4
"""


def test_c10_desk_profile_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "desk.ini"
    cfg.write_text(DETERMINISM_INI)
    outs = []
    for run in range(2):
        out = tmp_path / f"run{run}.csv"
        code = cli_main(["run", "--config", str(cfg), "--profile", "desk", "--seed", "11", "--out", str(out)])
        outs.append((code, out.read_bytes() if out.exists() else b""))
    checks = [
        ("both runs exit 0", outs[0][0] == 0 and outs[1][0] == 0),
        (f"byte-identical CSV ({len(outs[0][1])} bytes)", outs[0][1] == outs[1][1] and len(outs[0][1]) > 0),
    ]
    record(10, "desk profile determinism", checks, time.perf_counter() - t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
