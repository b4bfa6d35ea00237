"""Single-phase P-Q measurement chain, current reference and RMS metering."""
from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ParameterError, SingularVoltage, UnsupportedQuadrant
from .transfer import ContinuousTF2, DiscreteTF2, discretize_tustin, step_filter

SQRT2 = math.sqrt(2.0)


def _samples_per(f_s: float, f: float, what: str) -> int:
    n = f_s / f
    if abs(n - round(n)) > 1e-9 * n:
        raise ParameterError(f"{what} is not an integer number of samples ({n})")
    return int(round(n))


class QuadratureDelayLine:
    """Ring buffer delaying a signal by a quarter of the grid period.

    The first ``n`` outputs are zero (cold start).
    """

    __slots__ = ("n", "buf", "idx")

    def __init__(self, f_s: float = 72_000.0, f0: float = 60.0):
        self.n = _samples_per(f_s, 4.0 * f0, "quarter cycle")
        self.buf = [0.0] * self.n
        self.idx = 0

    def fill(self, samples: Sequence[float]) -> None:
        """Prime the buffer with the last ``n`` samples, oldest first."""
        if len(samples) != self.n:
            raise ParameterError(f"need exactly {self.n} samples")
        self.buf = [float(x) for x in samples]
        self.idx = 0


def delay_quarter_cycle(line: QuadratureDelayLine, x: float) -> float:
    """Return the sample pushed ``line.n`` calls ago and push ``x``."""
    i = line.idx
    out = line.buf[i]
    line.buf[i] = x
    i += 1
    line.idx = 0 if i == line.n else i
    return out


def compute_pq(v_a: float, v_b: float, i_a: float, i_b: float) -> tuple[float, float]:
    """Instantaneous powers from alpha/beta (present/quarter-delayed) samples."""
    return 0.5 * (v_a * i_a + v_b * i_b), 0.5 * (v_a * i_b - v_b * i_a)


def lowpass(f_s: float, f_c: float = 20.0) -> DiscreteTF2:
    """First-order ``1 / (1 + s / (2 pi f_c))`` discretized with Tustin (unity DC gain)."""
    if f_c <= 0 or f_c >= f_s / 2:
        raise ParameterError("cut-off must lie in (0, f_s/2)")
    wc = 2.0 * math.pi * f_c
    return discretize_tustin(ContinuousTF2((0.0, 0.0, wc), (0.0, 1.0, wc)), f_s)


def lowpass_20hz(state: DiscreteTF2, x: float) -> float:
    return step_filter(state, x)


class CurrentReference(NamedTuple):
    i_ref: float
    i_rms: float
    theta: float


def reference_amplitude(p_ref: float, q_ref: float, v_rms: float) -> tuple[float, float]:
    """RMS current and phase for a (P, Q) setpoint; ``theta > 0`` means leading current."""
    if v_rms <= 0:
        raise SingularVoltage("grid voltage must be positive")
    if p_ref <= 0:
        raise UnsupportedQuadrant("only charging (p_ref > 0) references are supported")
    theta = math.atan(q_ref / p_ref)
    return p_ref / (v_rms * math.cos(theta)), theta


def current_reference(p_ref: float, q_ref: float, v_rms: float, omega0: float,
                      t: float, s_rated: float | None = None) -> CurrentReference:
    """Sinusoidal current reference ``sqrt(2) I_s sin(omega0 t + theta)``."""
    if s_rated is not None and math.hypot(p_ref, q_ref) > s_rated * (1 + 1e-9):
        raise ParameterError(
            f"apparent power {math.hypot(p_ref, q_ref):.1f} VA exceeds rating {s_rated} VA")
    i_rms, theta = reference_amplitude(p_ref, q_ref, v_rms)
    return CurrentReference(SQRT2 * i_rms * math.sin(omega0 * t + theta), i_rms, theta)


def rms_meter(window: Sequence[float]) -> float:
    """Root-mean-square over exactly one fundamental period of samples."""
    a = np.asarray(window, dtype=float)
    if a.size == 0:
        raise ParameterError("empty window")
    return float(math.sqrt(np.dot(a, a) / a.size))


class RmsMeter:
    """One-cycle RMS meter refreshed once per grid cycle.

    ``value`` is ``None`` until the first full cycle has been seen.
    """

    def __init__(self, f_s: float = 72_000.0, f0: float = 60.0):
        self.n = _samples_per(f_s, f0, "grid cycle")
        self._acc = 0.0
        self._count = 0
        self.value: float | None = None

    @property
    def ready(self) -> bool:
        return self.value is not None

    def push(self, x: float) -> float | None:
        self._acc += x * x
        self._count += 1
        if self._count == self.n:
            self.value = math.sqrt(self._acc / self.n)
            self._acc = 0.0
            self._count = 0
        return self.value

    def preset(self, v_rms: float) -> None:
        self.value = v_rms
