"""Force-trace processing: PVDF voltage conversion, low-pass filtering,
phase detection and deformation from the commanded feed."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import butter, filtfilt, lfilter

from .errors import DetectionError, DomainError

PVDF_SENSITIVITY = 0.0102   # mN per mV
PHASES = ("approach", "pierce", "breakage", "retract")


@dataclass
class RawTrace:
    sample_rate: float      # Hz
    time: np.ndarray        # s
    voltage: np.ndarray     # mV

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.voltage = np.asarray(self.voltage, dtype=float)
        if self.sample_rate <= 0 or self.time.shape != self.voltage.shape:
            raise DomainError("raw trace needs a positive sample rate and matching columns")


@dataclass
class ForceTrace:
    sample_rate: float
    time: np.ndarray
    force: np.ndarray       # mN
    meta: dict = field(default_factory=dict)
    raw_force: Optional[np.ndarray] = None   # unfiltered samples, kept by the filter

    def __len__(self):
        return len(self.time)


@dataclass(frozen=True)
class PhaseMarkers:
    t_contact: float
    t_puncture: float
    t_relax_end: float
    t_retract: float
    peak_force: float     # mN


@dataclass(frozen=True)
class FeedMotion:
    """Commanded needle feed: v(t) = v0 + a*(t - t_start).  With
    ``t_start=None`` the profile starts at the contact time."""
    v0: float                       # mm/s
    a: float = 0.0                  # mm/s^2
    t_start: Optional[float] = None


def voltage_to_force(raw: RawTrace, sensitivity: float = PVDF_SENSITIVITY) -> ForceTrace:
    if not sensitivity > 0:
        raise DomainError("sensitivity must be positive")
    return ForceTrace(raw.sample_rate, raw.time.copy(), raw.voltage * sensitivity,
                      {"sensitivity_mN_per_mV": sensitivity})


def lowpass_filter(trace: ForceTrace, cutoff: float = 20.0, order: int = 2,
                   zero_phase: bool = True) -> ForceTrace:
    """Butterworth low-pass; forward-backward unless ``zero_phase`` is off."""
    nyq = 0.5 * trace.sample_rate
    if not (0 < cutoff < nyq):
        raise DomainError(f"cutoff must lie in (0, {nyq:g}) Hz")
    b, a = butter(order, cutoff, fs=trace.sample_rate)
    if zero_phase:
        y = filtfilt(b, a, trace.force)
    else:
        y = lfilter(b, a, trace.force - trace.force[0]) + trace.force[0]
    meta = dict(trace.meta, cutoff_Hz=cutoff, filter=f"butterworth-{order}",
                zero_phase=zero_phase)
    raw = trace.raw_force if trace.raw_force is not None else trace.force
    return ForceTrace(trace.sample_rate, trace.time, y, meta, raw)


def _onset(t, f, i_thr, base, peak):
    """Refine the threshold crossing by extrapolating the early rise (10-30%
    of the peak height) back to the baseline level."""
    h = peak - base
    j = i_thr
    seg = np.arange(j, len(f))
    lo = seg[f[seg] >= base + 0.1 * h]
    hi = seg[f[seg] >= base + 0.3 * h]
    if len(lo) == 0 or len(hi) == 0 or hi[0] - lo[0] < 3:
        return t[i_thr]
    k = np.arange(lo[0], hi[0] + 1)
    slope, icpt = np.polyfit(t[k], f[k], 1)
    if slope <= 0:
        return t[i_thr]
    tc = (base - icpt) / slope
    # zero-phase smoothing leaks the corner ahead of the true onset, so the
    # refined time may lie after the raw threshold crossing
    return float(min(max(tc, t[0]), t[lo[0]]))


def detect_phases(trace: ForceTrace, noise_window: float = 0.5, k_sigma: float = 5.0) -> PhaseMarkers:
    """Contact, puncture, end of relaxation and retraction times.

    Contact: first exceedance of mean + k*std of the leading window, refined
    by line extrapolation of the rise.  Puncture: largest force before the
    steepest drop; position and height come from the unfiltered samples
    when the trace carries them.  Relaxation
    ends when the force settles inside the baseline band after the drop;
    retraction starts at the first later excursion below the band.
    """
    t, f = trace.time, np.asarray(trace.force, dtype=float)
    fs = trace.sample_rate
    nb = int(round(noise_window * fs))
    if nb < 10 or nb >= len(f) - 10:
        raise DetectionError("trace too short for the baseline window")
    base = float(np.mean(f[:nb]))
    sd = float(np.std(f[:nb]))
    thr = base + k_sigma * max(sd, 1e-12 * max(1.0, abs(base)))
    above = np.nonzero(f[nb:] > thr)[0]
    if len(above) == 0:
        raise DetectionError("force never leaves the baseline band")
    i_c = nb + int(above[0])
    i_pk = i_c + int(np.argmax(f[i_c:]))
    if i_pk >= len(f) - 2:
        raise DetectionError("no drop after the force peak")
    w = max(3, int(round(fs / float(trace.meta.get("cutoff_Hz", fs / 20.0)))))
    df = np.diff(f[i_pk:min(len(f), i_pk + 4 * w)])
    i_drop = i_pk + int(np.argmin(df))
    if df[i_drop - i_pk] >= 0 or f[i_pk] - f[min(len(f) - 1, i_pk + 4 * w - 1)] < 0.5 * (f[i_pk] - base):
        raise DetectionError("no steep drop after the force peak")
    src = trace.raw_force if trace.raw_force is not None else f
    a0 = max(i_c, i_pk - w)
    i_p = a0 + int(np.argmax(src[a0:i_drop + 2]))
    # zero-phase smoothing flattens a sharp peak, so its height is read
    # from the unfiltered samples
    peak = float(src[i_p])
    t_c = _onset(t, f, i_c, base, peak)
    band = k_sigma * max(sd, 1e-12)
    after = np.arange(i_drop + 1, len(f))
    settled = after[np.abs(f[after] - base) <= band]
    i_d = int(settled[0]) if len(settled) else len(f) - 1
    later = np.arange(i_d, len(f))
    neg = later[f[later] < base - band]
    i_e = int(neg[0]) if len(neg) else len(f) - 1
    return PhaseMarkers(float(t_c), float(t[i_p]), float(t[i_d]), float(t[max(i_e, i_d)]), peak)


def phase_labels(trace: ForceTrace, m: PhaseMarkers) -> np.ndarray:
    t = trace.time
    lab = np.full(len(t), PHASES[0], dtype=object)
    lab[t >= m.t_contact] = PHASES[1]
    lab[t > m.t_puncture] = PHASES[2]
    lab[t > m.t_relax_end] = PHASES[3]
    return lab


def deformation_from_feed(markers: PhaseMarkers, motion: FeedMotion):
    """(d in m, velocity at puncture in mm/s) from the commanded feed."""
    dt = markers.t_puncture - markers.t_contact
    if dt < 0:
        raise DomainError("puncture precedes contact")
    ts = markers.t_contact if motion.t_start is None else motion.t_start
    if ts > markers.t_contact:
        raise DomainError("feed motion starts after contact")
    v_c = motion.v0 + motion.a * (markers.t_contact - ts)
    d_mm = v_c * dt + 0.5 * motion.a * dt * dt
    return d_mm * 1e-3, v_c + motion.a * dt


def synthetic_ramp(fs=1000.0, t_contact=1.0, t_peak=1.5, peak=0.5, noise=1e-3,
                   duration=2.5, seed=0) -> ForceTrace:
    """Baseline noise, linear ramp to ``peak`` (mN), instant drop to zero."""
    t = np.arange(int(round(duration * fs))) / fs
    f = np.where((t >= t_contact) & (t <= t_peak), peak * (t - t_contact) / (t_peak - t_contact), 0.0)
    f = f + noise * np.random.default_rng(seed).standard_normal(len(t))
    return ForceTrace(fs, t, f, {"synthetic": True})
