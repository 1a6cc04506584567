"""Run configuration: typed parameters, `key = value` files, validation.

A configuration file is a flat list of ``key = value`` lines (``#`` comments
allowed). Flags given on the command line win over file values. Validation
collects every violated field before raising, so a bad config reports all of
its problems at once. Run manifests reuse this format; a handful of manifest
bookkeeping keys are recognized and ignored on load so a manifest can be fed
straight back as a config.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
import os

__all__ = [
    "SystemConfig",
    "RunConfig",
    "ConfigError",
    "parse_config_text",
    "load_config_file",
    "format_config",
    "worker_count",
    "WORKER_ENV_VAR",
]

WORKER_ENV_VAR = "FBMCQAM_WORKERS"

# manifest bookkeeping keys that are not configuration
_META_KEYS = {"master_seed", "tool_version", "wall_time_s", "outputs",
              "command", "created"}


class ConfigError(ValueError):
    """Raised with one message line per violated field."""


@dataclass(frozen=True)
class SystemConfig:
    """Core waveform parameters shared by every chain."""

    n: int = 64                 # subcarriers, power of two
    m: int = 14                 # multicarrier symbols per block
    k: int = 5                  # filter overlap factor
    symbol_power: float = 1.0   # mean QAM symbol power (linear)
    mod_order: int = 16
    eta: float = 0.0            # inverse-filter sparsification fraction
    equalizer: str = "mmse"     # "zf" or "mmse"
    receiver_mode: str = "if"   # "if" (inverse filter) or "nif"

    def violations(self) -> list[str]:
        errs = []
        if self.n < 2 or self.n & (self.n - 1):
            errs.append(f"n: {self.n} is not a power of two >= 2")
        if self.m < 1:
            errs.append(f"m: {self.m} must be >= 1")
        if self.k < 1:
            errs.append(f"k: {self.k} must be >= 1")
        if not (self.symbol_power > 0):
            errs.append(f"symbol_power: {self.symbol_power} must be > 0")
        if self.mod_order not in (4, 16, 64):
            errs.append(f"mod_order: {self.mod_order} not in (4, 16, 64)")
        if not (0.0 <= self.eta <= 1.0):
            errs.append(f"eta: {self.eta} outside [0, 1]")
        if self.equalizer not in ("zf", "mmse"):
            errs.append(f"equalizer: {self.equalizer!r} not 'zf' or 'mmse'")
        if self.receiver_mode not in ("if", "nif"):
            errs.append(f"receiver_mode: {self.receiver_mode!r} not 'if' or 'nif'")
        return errs


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs: system, channel, and experiment knobs."""

    n: int = 64
    m: int = 14
    k: int = 5
    symbol_power: float = 1.0
    mod_order: int = 16
    eta: float = 0.0
    equalizer: str = "mmse"
    receiver_mode: str = "if"

    channel_taps: int = 8          # L
    pdp_decay_db: float = 20.0     # first-to-last tap power drop
    pdp_file: str = ""             # optional `l,rho2` CSV; overrides the exponential
    pdp_normalize: bool = True
    guard_samples: int = -1        # -1 = auto: (K-1)*N + L - 1 (leakage-free)
    overlap_blocks: bool = False   # adjacent blocks leak through the channel tail
    cp_len: int = -1               # OFDM cyclic prefix; -1 = auto: N // 8

    filter_file: str = ""          # optional prototype coefficient file

    snr_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    trials: int = 0                # 0 = adaptive (simulate) / command default
    seed: int = 20260815
    coded: bool = True
    min_info_bits: int = 2_000_000  # floor at the decision SNR point
    ci_target: float = 0.2          # CI half-width / estimate at decision SNR
    theory_draws: int = 1000        # channel draws for averaged closed forms

    subband_width: int = -1                  # -1 = auto: N // 4
    subband_starts: tuple[int, ...] = ()     # empty = auto layout
    subband_offsets: tuple[int, ...] = ()    # empty = all zero (synchronous)

    @property
    def system(self) -> SystemConfig:
        return SystemConfig(self.n, self.m, self.k, self.symbol_power,
                            self.mod_order, self.eta, self.equalizer,
                            self.receiver_mode)

    # resolved (auto-aware) values -----------------------------------------

    def guard(self) -> int:
        if self.guard_samples >= 0:
            return self.guard_samples
        return (self.k - 1) * self.n + self.channel_taps - 1

    def cp(self) -> int:
        return self.cp_len if self.cp_len >= 0 else self.n // 8

    def band_width(self) -> int:
        return self.subband_width if self.subband_width > 0 else self.n // 4

    def band_starts(self) -> tuple[int, ...]:
        if self.subband_starts:
            return self.subband_starts
        # three equal bands, total inter-band guard N/8, margins at the edges
        w = self.band_width()
        gap = max(self.n // 16, 0)
        margin = (self.n - 3 * w - 2 * gap) // 2
        return (margin, margin + w + gap, margin + 2 * (w + gap))

    def band_offsets(self) -> tuple[int, ...]:
        if self.subband_offsets:
            return self.subband_offsets
        return (0, 0, 0)

    def async_offset(self) -> int:
        """Half a symbol interval in samples, CP overhead included."""
        return int(0.5 * (self.n + self.cp()))

    def violations(self) -> list[str]:
        errs = self.system.violations()
        if self.channel_taps < 1:
            errs.append(f"channel_taps: {self.channel_taps} must be >= 1")
        if self.n >= 2 and not (self.n & (self.n - 1)) and self.channel_taps * 2 > self.n:
            errs.append(f"channel_taps: {self.channel_taps} exceeds n/2 = {self.n // 2}")
        if self.pdp_decay_db < 0:
            errs.append(f"pdp_decay_db: {self.pdp_decay_db} must be >= 0")
        if self.cp() < 0:
            errs.append(f"cp_len: {self.cp_len} must be >= 0")
        if not self.snr_db:
            errs.append("snr_db: at least one SNR point required")
        if self.trials < 0:
            errs.append(f"trials: {self.trials} must be >= 0")
        if not (0 < self.ci_target < 1):
            errs.append(f"ci_target: {self.ci_target} outside (0, 1)")
        if self.theory_draws < 1:
            errs.append(f"theory_draws: {self.theory_draws} must be >= 1")
        errs.extend(self._band_violations())
        return errs

    def _band_violations(self) -> list[str]:
        errs = []
        starts, w = self.band_starts(), self.band_width()
        if w < 1:
            errs.append(f"subband_width: {w} must be >= 1")
            return errs
        spans = sorted((s, s + w) for s in starts)
        for s, e in spans:
            if s < 0 or e > self.n:
                errs.append(f"subband_starts: band [{s}, {e}) outside [0, {self.n})")
        for (_, e1), (s2, _) in zip(spans, spans[1:]):
            if s2 < e1:
                errs.append(f"subband_starts: bands overlap at subcarrier {s2}")
        offs = self.band_offsets()
        if len(offs) != len(starts):
            errs.append(f"subband_offsets: {len(offs)} offsets for {len(starts)} bands")
        for o in offs:
            if not (0 <= o < self.n * self.m):
                errs.append(f"subband_offsets: {o} outside [0, {self.n * self.m})")
        return errs

    def validate(self) -> "RunConfig":
        errs = self.violations()
        if errs:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(errs))
        return self


# ---------------------------------------------------------------------------
# key = value parsing
# ---------------------------------------------------------------------------

def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(v) for v in text.split(","))


def _parse_float_tuple(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(v) for v in text.split(","))


def _coerce(name: str, kind, text: str):
    text = text.strip()
    if kind is bool:
        return _parse_bool(text)
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is str:
        return text
    if kind is tuple:
        return text  # resolved per-field below
    raise AssertionError(name)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_TUPLE_PARSERS = {
    "snr_db": _parse_float_tuple,
    "subband_starts": _parse_int_tuple,
    "subband_offsets": _parse_int_tuple,
}


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Apply string key/value overrides with type coercion; unknown keys raise."""
    updates = {}
    errs = []
    for key, raw in overrides.items():
        if key in _META_KEYS:
            continue
        if key not in _FIELD_TYPES:
            errs.append(f"{key}: unknown configuration key")
            continue
        try:
            if key in _TUPLE_PARSERS:
                updates[key] = _TUPLE_PARSERS[key](raw)
            else:
                ftype = type(getattr(cfg, key))
                updates[key] = _coerce(key, ftype, raw)
        except ValueError as exc:
            errs.append(f"{key}: {exc}")
    if errs:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errs))
    return replace(cfg, **updates)


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    overrides: dict[str, str] = {}
    errs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            errs.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, _, value = stripped.partition("=")
        overrides[key.strip()] = value.strip()
    if errs:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errs))
    return apply_overrides(cfg, overrides)


def load_config_file(path, base: RunConfig | None = None) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), base)


def format_config(cfg: RunConfig) -> str:
    """Render every field as `key = value`, tuples as comma lists."""
    lines = []
    for f in fields(RunConfig):
        val = getattr(cfg, f.name)
        if isinstance(val, tuple):
            rendered = ",".join(f"{v:g}" if isinstance(v, float) else str(v)
                                for v in val)
        elif isinstance(val, bool):
            rendered = "true" if val else "false"
        elif isinstance(val, float):
            rendered = f"{val:g}"
        else:
            rendered = str(val)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"


def worker_count(default: int = 1) -> int:
    """Worker pool size, overridable through the environment."""
    raw = os.environ.get(WORKER_ENV_VAR, "").strip()
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        return default
    return max(1, n)
