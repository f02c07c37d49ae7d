"""Signal-generator element model: word conversions, envelopes, frequency entries.

:class:`ElementConfig` is the default (and only shipped) element type. Other
signal-generator types implement the same methods.
"""

from dataclasses import dataclass, fields, replace
import math

import numpy as np

from .errors import (AmplitudeOutOfRange, FrequencyOutOfRange, NonPositiveWidth,
                     UnknownEnvelopeFunction)
from .isa import AMP_BITS, PHASE_BITS

ENV_FUNCS = ("square", "cos_edge_square", "DRAG", "arbitrary")


@dataclass(frozen=True)
class ElementConfig:
    sample_rate: float = 8e9
    interp_ratio: int = 16
    clock_freq: float = 500e6
    freq_bits: int = 32
    nyquist_guard: bool = False
    env_sample_rate: float = None

    def __post_init__(self):
        if self.sample_rate <= 0 or self.interp_ratio <= 0 or self.clock_freq <= 0:
            raise ValueError("element rates must be positive")
        if self.env_sample_rate is None:
            object.__setattr__(self, "env_sample_rate", self.sample_rate / self.interp_ratio)

    @classmethod
    def from_dict(cls, params):
        known = {f.name for f in fields(cls)}
        unknown = set(params) - known
        if unknown:
            raise ValueError(f"unknown element parameters: {sorted(unknown)}")
        return cls(**params)

    def updated(self, params):
        known = {f.name for f in fields(self)}
        params = {k: v for k, v in params.items() if k in known}
        if "sample_rate" in params or "interp_ratio" in params:
            params.setdefault("env_sample_rate", None)
        return replace(self, **params) if params else self

    @property
    def samples_per_clock(self):
        return self.sample_rate / self.clock_freq

    def phase_word(self, phase):
        return convert_phase(phase)

    def amp_word(self, amp):
        return convert_amp(amp)

    def freq_entry(self, freq):
        return compute_freq_entry(freq, self)

    def freq_from_entry(self, entry):
        return entry / (1 << self.freq_bits) * self.sample_rate

    def envelope(self, spec):
        return generate_envelope(spec, self)

    def env_length_cycles(self, spec, n_samples=None):
        """Pulse duration in clock cycles for an envelope spec."""
        if isinstance(spec, dict) and spec.get("env_func", "arbitrary") != "arbitrary":
            twidth = spec.get("paradict", {}).get("twidth")
            return int(math.ceil(twidth * self.clock_freq - 1e-6))
        if n_samples is None:
            n_samples = len(self.envelope(spec))
        return int(math.ceil(n_samples * self.clock_freq / self.env_sample_rate - 1e-6))


def convert_phase(phase):
    """Radians to a 17-bit phase word (full scale = 2*pi), wrapping."""
    if not math.isfinite(phase):
        raise ValueError(f"phase must be finite, got {phase}")
    frac = math.fmod(phase, 2 * math.pi) / (2 * math.pi)
    return int(round(frac * (1 << PHASE_BITS))) % (1 << PHASE_BITS)


def phase_from_word(word):
    return (word % (1 << PHASE_BITS)) / (1 << PHASE_BITS) * 2 * math.pi


def convert_amp(amp):
    """Normalized amplitude in [0, 1] to a 16-bit amplitude word."""
    if not 0.0 <= amp <= 1.0:
        raise AmplitudeOutOfRange(f"amplitude {amp} outside [0, 1]")
    return int(round(amp * ((1 << AMP_BITS) - 1)))


def compute_freq_entry(freq, elem_cfg=None):
    """Per-sample phase increment for ``freq``, quantized to the accumulator width."""
    elem_cfg = elem_cfg or ElementConfig()
    limit = elem_cfg.sample_rate / 2 if elem_cfg.nyquist_guard else elem_cfg.sample_rate
    if not 0 <= freq < limit:
        raise FrequencyOutOfRange(f"frequency {freq} Hz outside [0, {limit})")
    return int(round(freq / elem_cfg.sample_rate * (1 << elem_cfg.freq_bits))) % (1 << elem_cfg.freq_bits)


def _n_samples(twidth, rate):
    if twidth is None or not twidth > 0:
        raise NonPositiveWidth(f"envelope width must be positive, got {twidth}")
    n = int(round(twidth * rate))
    if n < 1:
        raise NonPositiveWidth(f"envelope width {twidth} s is shorter than one sample")
    return n


def _cos_edge_square(n, ramp_fraction, amplitude, phase):
    # raised-cosine ramps over round(ramp_fraction * n) samples at each edge
    n_ramp = int(round(ramp_fraction * n))
    if 2 * n_ramp > n:
        raise ValueError("ramp_fraction too large: ramps overlap")
    env = np.ones(n)
    if n_ramp:
        k = np.arange(n_ramp)
        ramp = 0.5 * (1 - np.cos(np.pi * (k + 1) / (n_ramp + 1)))
        env[:n_ramp] = ramp
        env[n - n_ramp:] = ramp[::-1]
    return amplitude * env * np.exp(1j * phase)


def _drag(n, rate, sigmas, alpha, delta, amplitude):
    t = (np.arange(n) + 0.5) / rate
    t0 = n / rate / 2
    sigma = n / rate / (2 * sigmas)
    gauss = np.exp(-((t - t0) ** 2) / (2 * sigma ** 2))
    dgauss = -(t - t0) / sigma ** 2 * gauss
    quad = alpha * dgauss / delta if alpha else np.zeros(n)
    env = amplitude * (gauss + 1j * quad)
    peak = np.max(np.abs(env))
    return env / peak if peak > 1 else env


def generate_envelope(spec, elem_cfg=None):
    """Sample an envelope spec at the element's envelope rate.

    ``spec`` is either ``{"env_func": name, "paradict": {...}}`` or an explicit
    sequence of complex samples (``[re, im]`` pairs are accepted).
    """
    elem_cfg = elem_cfg or ElementConfig()
    if not isinstance(spec, dict):
        return _explicit_samples(spec)
    func = spec.get("env_func")
    if func == "arbitrary":
        return _explicit_samples(spec.get("samples", spec.get("paradict", {}).get("samples")))
    if func not in ENV_FUNCS:
        raise UnknownEnvelopeFunction(f"unknown envelope function {func!r}")
    p = dict(spec.get("paradict", {}))
    n = _n_samples(p.get("twidth"), elem_cfg.env_sample_rate)
    amplitude = p.get("amplitude", 1.0)
    if func == "square":
        return np.full(n, amplitude * np.exp(1j * p.get("phase", 0.0)), dtype=complex)
    if func == "cos_edge_square":
        return _cos_edge_square(n, p.get("ramp_fraction", 0.25), amplitude, p.get("phase", 0.0))
    return _drag(n, elem_cfg.env_sample_rate, p.get("sigmas", 3), p.get("alpha", 0.0),
                 p.get("delta", 1.0), amplitude)


def _explicit_samples(samples):
    if samples is None or len(samples) == 0:
        raise NonPositiveWidth("explicit envelope has no samples")
    arr = np.asarray([complex(s[0], s[1]) if isinstance(s, (list, tuple)) else complex(s)
                      for s in samples], dtype=complex)
    if np.any(np.abs(arr) > 1 + 1e-12):
        raise AmplitudeOutOfRange("explicit envelope samples must satisfy |s| <= 1")
    return arr
