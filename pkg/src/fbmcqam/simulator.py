"""Monte-Carlo experiments: link validation and multi-service BER campaigns.

Everything is deterministic given (configuration, master seed): randomness
flows through a spawned seed tree, trial counts are set by staging rules
evaluated only at stage boundaries, and aggregation is a sum of per-chunk
sufficient statistics, so the worker count cannot change any result.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging

import numpy as np

from .analytics import (MseBreakdown, _circconv, conditional_breakdown,
                        displaced_covariances, interference_tables, zeta_factors)
from .channel import (PowerDelayProfile, apply_taps, complex_noise, draw_taps,
                      freq_response, overlap_tail)
from .config import RunConfig, worker_count
from .core import (PrototypeFilter, design_prototype, dft_segments, idft_block,
                   load_prototype_file, qam_demap, qam_llrs, qam_map)
from .fec import conv_encode, viterbi_decode
from .filterbank import (apply_adjoint, apply_filter, apply_inverse, autocorr_bands,
                         gram_stack, inverse_stack, kept_mask, sparsify_inverse,
                         tap_segments, window_length)
from .transceiver import make_equalizer, ofdm_demodulate, ofdm_modulate

__all__ = [
    "build_filter",
    "LinkContext",
    "make_context",
    "ComponentCheck",
    "LinkValidationPoint",
    "run_link_validation",
    "BerPoint",
    "MultiserviceResult",
    "run_multiservice",
    "scheme_label",
    "sweep",
    "wilson_halfwidth",
    "wilson_interval",
]

log = logging.getLogger("fbmcqam")

_Z95 = 1.959963984540054


def build_filter(cfg: RunConfig) -> PrototypeFilter:
    if cfg.filter_file:
        return load_prototype_file(cfg.filter_file, cfg.k, cfg.n)
    return design_prototype(cfg.k, cfg.n)


def _profile(cfg: RunConfig) -> PowerDelayProfile:
    if cfg.pdp_file:
        return PowerDelayProfile.from_file(cfg.pdp_file, cfg.pdp_normalize)
    return PowerDelayProfile.exponential(cfg.channel_taps, cfg.pdp_decay_db)


@dataclass(frozen=True)
class LinkContext:
    """Precomputed filter-bank state shared by every trial of a run."""

    filt: PrototypeFilter
    segs: np.ndarray
    gram: np.ndarray
    inv: np.ndarray          # exact inverse stack
    inv_rx: np.ndarray       # inverse actually applied (masked when eta > 0)
    zeta_m: np.ndarray       # per-symbol enhancement of the applied inverse


def make_context(cfg: RunConfig) -> LinkContext:
    filt = build_filter(cfg)
    segs = tap_segments(filt)
    gram = gram_stack(autocorr_bands(segs), cfg.m)
    inv = inverse_stack(gram)
    inv_rx = sparsify_inverse(inv, kept_mask(cfg.n, cfg.eta)) if cfg.eta > 0 else inv
    return LinkContext(filt, segs, gram, inv, inv_rx, zeta_factors(inv_rx, gram))


def _sigma2(cfg: RunConfig, snr_db: float) -> float:
    return cfg.symbol_power / 10.0 ** (snr_db / 10.0)


def wilson_halfwidth(errors: int, n: int, z: float = _Z95) -> float:
    """Half-width of the Wilson score interval for a binomial proportion."""
    if n <= 0:
        return float("nan")
    p = errors / n
    denom = 1.0 + z * z / n
    return z * np.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom


def wilson_interval(errors: int, n: int, z: float = _Z95) -> tuple[float, float]:
    if n <= 0:
        return (0.0, 1.0)
    p = errors / n
    center = (p + z * z / (2 * n)) / (1.0 + z * z / n)
    hw = wilson_halfwidth(errors, n, z)
    return (max(0.0, center - hw), min(1.0, center + hw))


# ---------------------------------------------------------------------------
# Link validation: isolate error components against the closed forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComponentCheck:
    name: str
    measured: float       # linear power, block average
    predicted: float
    sigma: float          # standard error of the measured mean
    within_3sigma: bool


@dataclass(frozen=True)
class LinkValidationPoint:
    snr_db: float
    checks: tuple[ComponentCheck, ...]
    total_measured: float
    total_predicted: float
    total_gap_db: float
    sinr_db: float
    breakdown: MseBreakdown


def _check(name: str, samples: np.ndarray, predicted: float,
           atol: float = 0.0) -> ComponentCheck:
    measured = float(np.mean(samples))
    sigma = float(np.std(samples, ddof=1) / np.sqrt(len(samples)))
    ok = abs(measured - predicted) <= 3.0 * sigma + atol
    return ComponentCheck(name, measured, predicted, sigma, ok)


def run_link_validation(cfg: RunConfig) -> list[LinkValidationPoint]:
    """Single full-band user: pair measured error components with closed forms.

    One seeded channel realization is held fixed; every trial draws fresh data
    and noise. Components are isolated with controlled feeds: a noise-only
    run, a flat-faded (circular-channel) zero-noise run with one active symbol
    per trial (the active symbol's own error is the same-symbol leakage, the
    other symbols accumulate the cross-symbol leakage over one round-robin
    cycle of stimuli), a matching run with a single active subcarrier whose
    leakage sums are paired with the per-donor profiles, a dispersion-only
    feed (true channel output minus its circular equivalent), and a
    previous-block-only feed when block overlap is enabled. With a sparsified
    inverse (eta > 0) the cancelled-interference predictions are no longer
    exact; validation is meant for eta = 0.
    """
    cfg.validate()
    system = cfg.system
    ctx = make_context(cfg)
    n, m = cfg.n, cfg.m
    delta2 = cfg.symbol_power
    bps = int(np.log2(cfg.mod_order))
    t_len = window_length(n, m, cfg.k)
    with_ibi = cfg.overlap_blocks

    master = np.random.SeedSequence(cfg.seed)
    ss_channel, ss_data, ss_noise = master.spawn(3)
    h = draw_taps(_profile(cfg), np.random.default_rng(ss_channel))
    c = freq_response(h, n)

    trials = cfg.trials or max(int(np.ceil(1e5 / (n * m))), 16 * m)
    trials = int(np.ceil(trials / m)) * m   # whole round-robin cycles
    rng_data = np.random.default_rng(ss_data)
    rng_noise = np.random.default_rng(ss_noise)

    inv_arg = ctx.inv if system.receiver_mode == "if" else None
    cov = displaced_covariances(ctx.segs, m, taps=h, inv=inv_arg)

    def draw_grid():
        bits = rng_data.integers(0, 2, size=trials * n * m * bps)
        S = qam_map(bits, cfg.mod_order, delta2).reshape(trials, m, n)
        return np.moveaxis(S, 0, 2).swapaxes(0, 1)          # (N, M, B)

    S = draw_grid()
    o = apply_filter(ctx.segs, idft_block(S))
    o_circ = apply_filter(ctx.segs, idft_block(c[:, None, None] * S))
    r_lin = apply_taps(h, o)
    r_fd = r_lin - o_circ
    tails = None
    if with_ibi:
        # overlap_tail applies the channel; feed it the unfaded previous block
        tails = overlap_tail(h, apply_filter(ctx.segs, idft_block(draw_grid())), t_len)

    # single-active-symbol stimulus, round robin over block positions
    stim_col = np.arange(trials) % m
    S_stim = np.zeros_like(S)
    sel = (np.arange(n)[:, None], stim_col[None, :], np.arange(trials)[None, :])
    S_stim[sel] = S[sel]
    r_stim = apply_filter(ctx.segs, idft_block(c[:, None, None] * S_stim))

    # single-active-subcarrier stimulus, round robin over subcarriers of the
    # middle symbol; measures per-donor leakage sums
    m0 = m // 2
    sub_q = np.arange(trials) % n
    sub_sel = (sub_q, np.full(trials, m0), np.arange(trials))
    S_sub = np.zeros_like(S)
    S_sub[sub_sel] = S[sub_sel]
    r_sub = apply_filter(ctx.segs, idft_block(c[:, None, None] * S_sub))
    tables = interference_tables(autocorr_bands(ctx.segs), m)

    points = []
    for snr_db in cfg.snr_db:
        sigma2 = _sigma2(cfg, snr_db)
        bd = conditional_breakdown(system, ctx.filt, h, sigma2,
                                   with_ibi=with_ibi, covariances=cov)
        eq = make_equalizer(c, cfg.equalizer, sigma2, delta2)

        def receive(r):
            x = apply_adjoint(ctx.segs, r)
            if system.receiver_mode == "if":
                x = apply_inverse(ctx.inv_rx, x)
            return eq.coeffs[:, None, None] * dft_segments(x, n)

        noise = complex_noise(rng_noise, (t_len, trials), sigma2)
        meas_noise = np.mean(np.abs(receive(noise)) ** 2, axis=(0, 1))

        est_stim = receive(r_stim)
        own = np.abs((est_stim - eq.beta[:, None, None] * S_stim)[sel]) ** 2
        meas_ici = own.mean(axis=0)                          # per trial
        cross = np.abs(est_stim) ** 2
        cross[sel] = 0.0
        # one stimulus cycle accumulates the full cross-symbol error per block
        meas_isi = cross.sum(axis=(0, 1)).reshape(-1, m).sum(axis=1) / (n * m)

        meas_fd = np.mean(np.abs(receive(r_fd)) ** 2, axis=(0, 1))

        est_sub = receive(r_sub)
        col = np.abs(est_sub[:, m0, :]) ** 2
        meas_ici_sub = col.sum(axis=0) - col[sub_q, np.arange(trials)]
        rest = np.abs(est_sub) ** 2
        rest[:, m0, :] = 0.0
        meas_isi_sub = rest.sum(axis=(0, 1))
        # per-donor-subcarrier leakage sums over receivers; the profiles are
        # symmetric in the lag, so the correlation is a circular convolution
        gain2 = np.abs(eq.coeffs) ** 2
        cq2 = delta2 * np.abs(c) ** 2
        if bd.mode == "if":
            pq_ici = np.zeros(n)
            pq_isi = np.zeros(n)
        else:
            pq_ici = cq2 * (_circconv(tables.power[0], gain2)
                            - tables.power[0, 0] * gain2)
            pq_isi = np.zeros(n)
            for d in range(1, cfg.k):
                count = (m0 - d >= 0) + (m0 + d < m)
                pq_isi += count * cq2 * _circconv(tables.power[d], gain2)

        pred_ici_m = bd.ici.mean(axis=1)                     # per stimulus position
        pred_fd = bd.fd_exact if bd.mode == "if" else bd.fd
        atol = 1e-15 * delta2     # exactly-cancelled components measure as roundoff
        checks = [
            _check("noise", meas_noise, float(bd.noise.mean())),
            _check("ici", meas_ici - pred_ici_m[stim_col] + pred_ici_m.mean(),
                   float(pred_ici_m.mean()), atol),
            _check("isi", meas_isi, float(bd.isi.mean()), atol),
            _check("fd", meas_fd, float(pred_fd.mean()), atol),
            _check("ici_sub", meas_ici_sub - pq_ici[sub_q] + pq_ici[sub_q].mean(),
                   float(pq_ici[sub_q].mean()), atol),
            _check("isi_sub", meas_isi_sub - pq_isi[sub_q] + pq_isi[sub_q].mean(),
                   float(pq_isi[sub_q].mean()), atol),
        ]
        pred_total = float((bd.resd + bd.ici + bd.isi + pred_fd + bd.noise).mean())
        if with_ibi:
            pred_ibi = bd.ibi_exact if bd.mode == "if" else bd.ibi
            meas_ibi = np.mean(np.abs(receive(tails)) ** 2, axis=(0, 1))
            checks.append(_check("ibi", meas_ibi, float(pred_ibi.mean()), atol))
            pred_total += float(pred_ibi.mean())

        r_full = r_lin + noise if tails is None else r_lin + tails + noise
        meas_total = np.mean(np.abs(receive(r_full) - S) ** 2, axis=(0, 1))
        total_measured = float(meas_total.mean())
        gap_db = abs(10 * np.log10(total_measured / pred_total))
        points.append(LinkValidationPoint(
            snr_db=snr_db, checks=tuple(checks),
            total_measured=total_measured, total_predicted=pred_total,
            total_gap_db=gap_db,
            sinr_db=float(10 * np.log10(delta2 / total_measured)),
            breakdown=bd))
        log.info("validated snr=%g dB: total %.2f dB measured vs %.2f dB predicted",
                 snr_db, 10 * np.log10(total_measured), 10 * np.log10(pred_total))
    return points


# ---------------------------------------------------------------------------
# Multi-service BER campaigns
# ---------------------------------------------------------------------------

def scheme_label(mode: str, eta: float) -> str:
    if mode == "nif":
        return "fbmc-nif"
    return "fbmc-if" if eta == 0 else f"fbmc-if+eta{eta:g}"


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    scheme: str
    subband: int
    ber: float
    ci_halfwidth: float
    info_bits: int
    bit_errors: int


@dataclass(frozen=True)
class MultiserviceResult:
    points: tuple[BerPoint, ...]
    decision_snr_db: float | None
    schemes: tuple[str, ...]

    def curve(self, scheme: str) -> list[BerPoint]:
        return [p for p in self.points if p.scheme == scheme]

    def at(self, snr_db: float, scheme: str) -> BerPoint:
        for p in self.points:
            if p.snr_db == snr_db and p.scheme == scheme:
                return p
        raise KeyError((snr_db, scheme))


@dataclass
class _Tally:
    errors: int = 0
    bits: int = 0

    def ber(self) -> float:
        return self.errors / self.bits if self.bits else float("nan")


def _band_grid(symbols: np.ndarray, n: int, start: int) -> np.ndarray:
    """Place per-band symbols (width, nsym, B) into a zeroed N-row grid."""
    grid = np.zeros((n,) + symbols.shape[1:], dtype=complex)
    grid[start:start + symbols.shape[0]] = symbols
    return grid


def _shift_window(x: np.ndarray, offset: int) -> np.ndarray:
    """Delay a sample stream by ``offset`` within its own window length."""
    if offset == 0:
        return x
    out = np.zeros_like(x)
    out[offset:] = x[:-offset]
    return out


class _MultiserviceEngine:
    """One scenario's per-chunk trial machinery, vectorized over the batch.

    Three users occupy disjoint sub-bands; the receiver is aligned and
    equalized to the middle user, whose decoded info bits are scored. The
    guard between filter-bank blocks exceeds every configured time offset
    plus the channel memory, so windows do not interact and each chunk can
    synthesize windows independently. The CP-OFDM baseline has no guard
    between its symbols, so interferer trains get one dummy symbol of lead-in
    and tail to keep the measured symbols under steady-state interference.
    """

    def __init__(self, cfg: RunConfig, ctx: LinkContext, modes: tuple[str, ...]):
        cfg.validate()
        starts = cfg.band_starts()
        if len(starts) != 3:
            raise ValueError(f"exactly 3 sub-bands are required, got {len(starts)}")
        self.cfg = cfg
        self.ctx = ctx
        self.modes = modes
        self.n, self.m = cfg.n, cfg.m
        self.width = cfg.band_width()
        self.starts = starts
        self.offsets = cfg.band_offsets()
        self.cp = cfg.cp()
        self.bps = int(np.log2(cfg.mod_order))
        self.t_len = window_length(self.n, self.m, cfg.k)
        self.pdp = _profile(cfg)
        cap_bits = self.width * self.m * self.bps
        if cfg.coded:
            if cap_bits % 2:
                raise ValueError("coded operation needs an even per-band bit capacity")
            self.info_len = cap_bits // 2 - 6
            if self.info_len < 1:
                raise ValueError("sub-band too small for the zero-terminated code")
        else:
            self.info_len = cap_bits

    def _band_symbols(self, rng: np.random.Generator, batch: int):
        """Fresh info bits and mapped symbol grids for all three users."""
        infos, grids = [], []
        for _ in range(3):
            info = rng.integers(0, 2, size=(batch, self.info_len))
            coded = conv_encode(info) if self.cfg.coded else info
            sym = qam_map(coded.ravel(), self.cfg.mod_order, self.cfg.symbol_power)
            sym = sym.reshape(batch, self.m, self.width)
            infos.append(info)
            grids.append(np.moveaxis(sym, 0, 2).swapaxes(0, 1))  # (width, M, B)
        return infos, grids

    def run_chunk(self, seed: np.random.SeedSequence, batch: int,
                  sigma2: float) -> dict[str, _Tally]:
        cfg, ctx = self.cfg, self.ctx
        n, m = self.n, self.m
        rng = np.random.default_rng(seed)
        infos, grids = self._band_symbols(rng, batch)
        taps = draw_taps(self.pdp, rng, (3, batch))          # per user, per trial
        mid_c = freq_response(taps[1], n)                    # (B, N)
        out: dict[str, _Tally] = {}

        r = np.zeros((self.t_len, batch), dtype=complex)
        for u in range(3):
            tx = apply_filter(ctx.segs, idft_block(_band_grid(grids[u], n, self.starts[u])))
            r += _shift_window(apply_taps(taps[u], tx), self.offsets[u])
        r += complex_noise(rng, r.shape, sigma2)

        eq = make_equalizer(mid_c, cfg.equalizer, sigma2, cfg.symbol_power)
        coeffs = eq.coeffs.T                                 # (N, B)
        for mode in self.modes:
            x = apply_adjoint(ctx.segs, r)
            if mode == "if":
                x = apply_inverse(ctx.inv_rx, x)
            est = coeffs[:, None, :] * dft_segments(x, n)
            zeta = ctx.zeta_m if mode == "if" else np.ones(m)
            nv = sigma2 * np.abs(coeffs[:, None, :]) ** 2 * zeta[None, :, None]
            out[scheme_label(mode, cfg.eta)] = self._tally(est, nv, infos[1])

        # CP-OFDM baseline under the same offsets and energy accounting
        step = n + self.cp
        sigma2_ofdm = sigma2 * step / n
        buf = np.zeros(((m + 2) * step, batch), dtype=complex)
        for u in range(3):
            scale = np.sqrt(cfg.symbol_power / 2.0)
            dummy = scale * (rng.standard_normal((self.width, 2, batch))
                             + 1j * rng.standard_normal((self.width, 2, batch)))
            train = np.concatenate([dummy[:, :1], grids[u], dummy[:, 1:]], axis=1)
            stream = ofdm_modulate(_band_grid(train, n, self.starts[u]), self.cp)
            buf += _shift_window(apply_taps(taps[u], stream), self.offsets[u])
        buf += complex_noise(rng, buf.shape, sigma2_ofdm)
        grid_rx = ofdm_demodulate(buf, n, self.cp)[:, 1:m + 1]
        eqo = make_equalizer(mid_c, cfg.equalizer, sigma2_ofdm, cfg.symbol_power)
        esto = eqo.coeffs.T[:, None, :] * grid_rx
        nvo = sigma2_ofdm * np.abs(eqo.coeffs.T[:, None, :]) ** 2 * np.ones((1, m, 1))
        out["ofdm"] = self._tally(esto, nvo, infos[1])
        return out

    def _tally(self, est: np.ndarray, nv: np.ndarray, info: np.ndarray) -> _Tally:
        """Demap the middle band, decode, count info-bit errors."""
        cfg = self.cfg
        start = self.starts[1]
        batch = info.shape[0]

        def to_codeword_order(a):
            band = a[start:start + self.width]               # (width, M, B)
            return np.moveaxis(band.swapaxes(0, 1), 2, 0).reshape(batch, -1)

        flat = to_codeword_order(est)
        if cfg.coded:
            nv_flat = to_codeword_order(np.broadcast_to(nv, est.shape))
            llrs = qam_llrs(flat.ravel(), cfg.mod_order, nv_flat.ravel(),
                            cfg.symbol_power).reshape(batch, -1)
            decoded = viterbi_decode(llrs, "soft")
        else:
            decoded = qam_demap(flat.ravel(), cfg.mod_order,
                                cfg.symbol_power).reshape(batch, -1)
        return _Tally(errors=int(np.count_nonzero(decoded != info)), bits=info.size)


def run_multiservice(cfg: RunConfig, modes: tuple[str, ...] = ("nif", "if"),
                     chunk_trials: int = 256) -> MultiserviceResult:
    """Three-band campaign measuring the middle band's BER for each scheme.

    Trials per SNR point are staged deterministically: a pilot stage, then up
    to two top-ups sized from the running estimates until every scheme with
    enough observed errors meets the confidence target and the point's
    info-bit floor, within a hard cap. ``cfg.trials`` overrides the staging
    with a fixed trial count.
    """
    ctx = make_context(cfg)
    engine = _MultiserviceEngine(cfg, ctx, modes)
    master = np.random.SeedSequence(cfg.seed)
    schemes = tuple(scheme_label(mode, cfg.eta) for mode in modes) + ("ofdm",)
    workers = worker_count()
    pool = ThreadPoolExecutor(workers) if workers > 1 else None

    bits_per_trial = engine.info_len
    floor_bits = max(cfg.min_info_bits, 1)
    pilot_bits = max(floor_bits // 10, 50_000)
    cap_bits = 3 * floor_bits
    points: list[BerPoint] = []
    decision_snr: float | None = None

    try:
        for snr_db in cfg.snr_db:
            sigma2 = _sigma2(cfg, snr_db)
            tallies = {s: _Tally() for s in schemes}

            def run_stage(target_bits: int) -> None:
                pending = target_bits - tallies["ofdm"].bits
                n_trials = max(0, -(-pending // bits_per_trial))
                sizes = [chunk_trials] * (n_trials // chunk_trials)
                if n_trials % chunk_trials:
                    sizes.append(n_trials % chunk_trials)
                seeds = master.spawn(len(sizes))
                jobs = list(zip(seeds, sizes))

                def one(job):
                    return engine.run_chunk(job[0], job[1], sigma2)

                results = pool.map(one, jobs) if pool is not None else map(one, jobs)
                for res in results:
                    for name, t in res.items():
                        tallies[name].errors += t.errors
                        tallies[name].bits += t.bits

            if cfg.trials:
                run_stage(cfg.trials * bits_per_trial)
            else:
                run_stage(pilot_bits)
                for _ in range(2):
                    target = pilot_bits
                    if tallies["ofdm"].ber() >= 1e-4:
                        target = max(target, floor_bits)
                    for t in tallies.values():
                        if t.errors >= 8:   # enough signal to size the interval
                            p = t.errors / t.bits
                            need = _Z95 ** 2 * (1 - p) / (cfg.ci_target ** 2 * p)
                            target = max(target, int(min(need, cap_bits)))
                    if target <= tallies["ofdm"].bits:
                        break
                    run_stage(min(target, cap_bits))

            if tallies["ofdm"].ber() >= 1e-4:
                decision_snr = snr_db if decision_snr is None else max(decision_snr, snr_db)
            for name, t in tallies.items():
                points.append(BerPoint(
                    snr_db=snr_db, scheme=name, subband=1, ber=t.ber(),
                    ci_halfwidth=wilson_halfwidth(t.errors, t.bits),
                    info_bits=t.bits, bit_errors=t.errors))
            log.info("snr=%g dB: %s", snr_db,
                     "  ".join(f"{s}={tallies[s].ber():.3e}" for s in schemes))
    finally:
        if pool is not None:
            pool.shutdown()
    return MultiserviceResult(tuple(points), decision_snr, schemes)


def sweep(cfgs: list[RunConfig],
          modes: tuple[str, ...] = ("nif", "if")) -> list[MultiserviceResult]:
    """Run a list of scenarios; each keeps its own master seed."""
    return [run_multiservice(cfg, modes) for cfg in cfgs]
