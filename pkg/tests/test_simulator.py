"""Monte-Carlo harness: link validation, BER campaigns, determinism."""

import numpy as np
import pytest

from fbmcqam.config import RunConfig
from fbmcqam.simulator import (run_link_validation, run_multiservice,
                               scheme_label, sweep, wilson_halfwidth,
                               wilson_interval)


def _val_cfg(**kw):
    base = dict(n=16, m=4, k=2, channel_taps=4, pdp_decay_db=10.0,
                trials=120, snr_db=(10.0,), seed=5150)
    base.update(kw)
    return RunConfig(**base)


def _ms_cfg(**kw):
    base = dict(n=32, m=4, k=2, channel_taps=4, pdp_decay_db=10.0,
                snr_db=(8.0,), trials=40, seed=902, coded=True)
    base.update(kw)
    return RunConfig(**base)


# ---------------------------------------------------------------------------
# confidence intervals
# ---------------------------------------------------------------------------

def test_wilson_interval_textbook_point():
    lo, hi = wilson_interval(10, 100)
    assert lo == pytest.approx(0.0552, abs=1e-3)
    assert hi == pytest.approx(0.1744, abs=1e-3)


def test_wilson_edge_cases():
    assert np.isnan(wilson_halfwidth(0, 0))
    assert wilson_interval(0, 0) == (0.0, 1.0)
    lo, hi = wilson_interval(0, 500)
    assert lo < 1e-12 and 0.0 < hi < 0.01
    # shrinks with sample size at fixed rate
    assert wilson_halfwidth(50, 1000) < wilson_halfwidth(5, 100)
    lo, hi = wilson_interval(500, 500)
    assert hi == 1.0 and 0.99 < lo < 1.0


# ---------------------------------------------------------------------------
# link validation
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("mode", ["nif", "if"])
def test_validation_components_match_closed_forms(mode):
    pts = run_link_validation(_val_cfg(receiver_mode=mode))
    assert len(pts) == 1
    pt = pts[0]
    names = [c.name for c in pt.checks]
    assert names == ["noise", "ici", "isi", "fd", "ici_sub", "isi_sub"]
    for c in pt.checks:
        assert c.within_3sigma, f"{c.name}: {c.measured} vs {c.predicted}"
    assert pt.total_gap_db < 0.5
    if mode == "if":
        # self-interference is cancelled, not merely small
        for c in pt.checks:
            if c.name in ("ici", "isi", "ici_sub", "isi_sub"):
                assert c.predicted == 0.0
                assert c.measured < 1e-12


def test_validation_with_block_overlap():
    pts = run_link_validation(_val_cfg(overlap_blocks=True))
    names = [c.name for c in pts[0].checks]
    assert names[-1] == "ibi"
    assert all(c.within_3sigma for c in pts[0].checks)


def test_validation_deterministic():
    a = run_link_validation(_val_cfg())[0]
    b = run_link_validation(_val_cfg())[0]
    assert a.total_measured == b.total_measured
    assert [c.measured for c in a.checks] == [c.measured for c in b.checks]
    c = run_link_validation(_val_cfg(seed=5151))[0]
    assert c.total_measured != a.total_measured


def test_validation_interference_floor():
    # with a non-invertible matched filter the residual interference caps the
    # SINR: raising SNR beyond the floor stops moving the total
    pts = run_link_validation(_val_cfg(receiver_mode="nif", snr_db=(50.0, 60.0)))
    flat = 10 * np.log10(pts[1].total_measured / pts[0].total_measured)
    assert abs(flat) < 0.3
    assert pts[0].sinr_db < 35.0


def test_validation_flat_channel_has_no_dispersion():
    pts = run_link_validation(_val_cfg(channel_taps=1, receiver_mode="nif"))
    pt = pts[0]
    fd = next(c for c in pt.checks if c.name == "fd")
    assert fd.predicted == 0.0 and fd.measured < 1e-12
    assert np.all(pt.breakdown.fd == 0.0)
    assert all(c.within_3sigma for c in pt.checks)


# ---------------------------------------------------------------------------
# multi-service campaigns
# ---------------------------------------------------------------------------

def test_scheme_labels():
    assert scheme_label("nif", 0.0) == "fbmc-nif"
    assert scheme_label("nif", 0.5) == "fbmc-nif"
    assert scheme_label("if", 0.0) == "fbmc-if"
    assert scheme_label("if", 0.5) == "fbmc-if+eta0.5"


def test_multiservice_structure():
    res = run_multiservice(_ms_cfg(), chunk_trials=16)
    assert res.schemes == ("fbmc-nif", "fbmc-if", "ofdm")
    assert len(res.points) == 3
    for p in res.points:
        assert p.subband == 1
        assert p.info_bits > 0 and 0.0 <= p.ber <= 1.0
        assert p.ci_halfwidth > 0.0
    assert len(res.curve("ofdm")) == 1
    assert res.at(8.0, "fbmc-if").scheme == "fbmc-if"
    with pytest.raises(KeyError):
        res.at(9.0, "fbmc-if")


def test_multiservice_deterministic_and_worker_independent(monkeypatch):
    cfg = _ms_cfg()
    a = run_multiservice(cfg, chunk_trials=16)
    b = run_multiservice(cfg, chunk_trials=16)
    assert a == b
    monkeypatch.setenv("FBMCQAM_WORKERS", "3")
    c = run_multiservice(cfg, chunk_trials=16)
    assert a == c


def test_multiservice_decision_point_marking():
    # errors at low SNR mark the decision point; a clean high-SNR flat
    # channel leaves it unset
    noisy = run_multiservice(_ms_cfg(coded=False, snr_db=(0.0,), trials=30),
                             chunk_trials=16)
    assert noisy.decision_snr_db == 0.0
    assert all(p.ber > 1e-3 for p in noisy.points)
    # the reference scheme decides the marking; a single Rayleigh tap at
    # 60 dB leaves it error-free even though the matched filter still floors
    clean = run_multiservice(
        _ms_cfg(coded=False, channel_taps=1, snr_db=(60.0,), trials=30),
        chunk_trials=16)
    assert clean.decision_snr_db is None
    assert clean.at(60.0, "ofdm").bit_errors == 0
    assert clean.at(60.0, "fbmc-nif").ber > 0.01


def test_multiservice_ber_falls_with_snr():
    res = run_multiservice(_ms_cfg(coded=False, snr_db=(5.0, 25.0), trials=60),
                           chunk_trials=32)
    for scheme in res.schemes:
        lo, hi = res.at(5.0, scheme), res.at(25.0, scheme)
        assert hi.ber < lo.ber


def test_async_offsets_smoke():
    cfg = _ms_cfg(subband_offsets=(18, 0, 18))
    res = run_multiservice(cfg, chunk_trials=16)
    assert all(np.isfinite(p.ber) for p in res.points)
    assert res == run_multiservice(cfg, chunk_trials=16)


def test_eta_label_and_run():
    res = run_multiservice(_ms_cfg(eta=0.5), modes=("if",), chunk_trials=16)
    assert res.schemes == ("fbmc-if+eta0.5", "ofdm")


def test_sweep_matches_individual_runs():
    cfgs = [_ms_cfg(), _ms_cfg(seed=903)]
    results = sweep(cfgs)
    assert results[0] == run_multiservice(cfgs[0])
    assert results[1] != results[0]


def test_band_count_and_capacity_errors():
    bad = _ms_cfg(subband_width=4, subband_starts=(0, 8),
                  subband_offsets=(0, 0))
    with pytest.raises(ValueError, match="exactly 3"):
        run_multiservice(bad)
    tiny = RunConfig(n=8, m=3, k=2, channel_taps=2, mod_order=4,
                     subband_width=1, subband_starts=(0, 3, 6),
                     snr_db=(10.0,), trials=4, coded=True)
    with pytest.raises(ValueError, match="too small"):
        run_multiservice(tiny)
