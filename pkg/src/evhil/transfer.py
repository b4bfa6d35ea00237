"""Second-order transfer functions: PR synthesis, discretization, analysis.

Continuous transfer functions are stored as coefficient triples in
descending powers of ``s``; discrete ones in descending powers of ``z``
with a monic denominator. Both are enough for everything the charger needs:
the PR current controller, the first-order plant and the measurement filters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from .errors import DiscretizationError, MarginsUndefined, ParameterError

_EPS = 1e-300


def _triple(coeffs) -> tuple[float, float, float]:
    c = [float(x) for x in coeffs]
    if len(c) > 3:
        raise ParameterError(f"at most 3 coefficients allowed, got {len(c)}")
    return tuple([0.0] * (3 - len(c)) + c)


@dataclass(frozen=True)
class ContinuousTF2:
    """``(b2 s^2 + b1 s + b0) / (a2 s^2 + a1 s + a0)``.

    When ``a2`` is nonzero the coefficients are normalized so that ``a2 == 1``.
    """

    num: tuple[float, float, float]
    den: tuple[float, float, float]

    def __post_init__(self):
        num = _triple(self.num)
        den = _triple(self.den)
        if not any(den):
            raise ParameterError("denominator is identically zero")
        if not all(math.isfinite(x) for x in num + den):
            raise ParameterError("non-finite coefficient")
        if den[0] != 0.0:
            k = den[0]
            num = tuple(x / k for x in num)
            den = tuple(x / k for x in den)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def order(self) -> int:
        if self.den[0] != 0.0:
            return 2
        if self.den[1] != 0.0:
            return 1
        return 0

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        b2, b1, b0 = self.num
        a2, a1, a0 = self.den
        return (b2 * s * s + b1 * s + b0) / (a2 * s * s + a1 * s + a0)

    def dc_gain(self) -> float:
        if self.den[2] == 0.0:
            return math.inf
        return self.num[2] / self.den[2]


@dataclass
class DiscreteTF2:
    """Monic second-order IIR section run as Direct-Form-II transposed.

    ``num = (b0, b1, b2)`` and ``den = (1, a1, a2)`` multiply ``z^2, z, 1``.
    ``z1`` and ``z2`` are the two delay registers.
    """

    num: tuple[float, float, float]
    den: tuple[float, float, float]
    f_s: float
    z1: float = 0.0
    z2: float = 0.0
    faults: int = field(default=0, repr=False)

    def __post_init__(self):
        self.num = _triple(self.num)
        self.den = _triple(self.den)
        if self.den[0] != 1.0:
            raise ParameterError("discrete denominator must be monic")
        if self.f_s <= 0:
            raise ParameterError("sample rate must be positive")

    def reset(self, z1: float = 0.0, z2: float = 0.0) -> None:
        self.z1 = z1
        self.z2 = z2

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        b0, b1, b2 = self.num
        _, a1, a2 = self.den
        return (b0 * z * z + b1 * z + b2) / (z * z + a1 * z + a2)

    def dc_gain(self) -> float:
        return float(np.real(self(1.0)))

    def preload(self, x: float) -> None:
        """Set the registers to the steady state for a constant input ``x``."""
        b0, b1, b2 = self.num
        _, a1, a2 = self.den
        y = self.dc_gain() * x
        self.z2 = b2 * x - a2 * y
        self.z1 = b1 * x - a1 * y + self.z2


def step_filter(filt: DiscreteTF2, x: float) -> float:
    """Advance ``filt`` by one sample and return its output.

    A non-finite input is counted in ``filt.faults`` and replaced by zero so
    the registers stay finite.
    """
    if not math.isfinite(x):
        filt.faults += 1
        x = 0.0
    b0, b1, b2 = filt.num
    _, a1, a2 = filt.den
    y = b0 * x + filt.z1
    filt.z1 = b1 * x - a1 * y + filt.z2
    filt.z2 = b2 * x - a2 * y
    return y


def pr_synthesize(k_p: float, k_i: float, omega_c: float, omega0: float,
                  gain: float = 1.0) -> ContinuousTF2:
    """Proportional-resonant controller ``gain * (Kp + 2 Ki wc s / (s^2 + 2 wc s + w0^2))``.

    The resonant branch carries ``s`` in its numerator, which gives
    ``|G(j w0)| = |gain| (Kp + Ki)``.
    """
    if omega_c <= 0 or omega0 <= 0:
        raise ParameterError("omega_c and omega0 must be positive")
    if k_p < 0 or k_i < 0:
        raise ParameterError("k_p and k_i must be non-negative")
    den = (1.0, 2.0 * omega_c, omega0 * omega0)
    num = (
        gain * k_p,
        gain * (2.0 * omega_c * k_p + 2.0 * k_i * omega_c),
        gain * k_p * omega0 * omega0,
    )
    return ContinuousTF2(num, den)


def _check_proper(tf: ContinuousTF2) -> int:
    n = tf.order
    # numerator degree must not exceed denominator degree
    if any(tf.num[: 2 - n]):
        raise DiscretizationError("transfer function is improper")
    return n


def discretize_tustin(tf: ContinuousTF2, f_s: float) -> DiscreteTF2:
    """Bilinear substitution ``s = 2 f_s (z - 1) / (z + 1)``, no prewarping."""
    if f_s <= 0:
        raise ParameterError("sample rate must be positive")
    n = _check_proper(tf)
    k = 2.0 * f_s
    num = np.zeros(n + 1)
    den = np.zeros(n + 1)
    # s^j -> k^j (z-1)^j (z+1)^(n-j) after clearing the common (z+1)^n
    for j in range(n + 1):
        basis = k ** j * np.polymul(np.poly([1.0] * j), np.poly([-1.0] * (n - j)))
        num = num + tf.num[2 - j] * basis
        den = den + tf.den[2 - j] * basis
    if abs(den[0]) < _EPS or not np.all(np.isfinite(den)):
        raise DiscretizationError("degenerate denominator after substitution")
    return DiscreteTF2(_pad(num / den[0], 3), _pad(den / den[0], 3), f_s)


def discretize_zoh(tf: ContinuousTF2, f_s: float) -> DiscreteTF2:
    """Zero-order-hold equivalent (step invariance) via the state-space matrix exponential."""
    if f_s <= 0:
        raise ParameterError("sample rate must be positive")
    n = _check_proper(tf)
    T = 1.0 / f_s
    lead = tf.den[2 - n]
    den = np.array(tf.den[2 - n:]) / lead
    num = np.array(tf.num[2 - n:]) / lead
    if n == 0:
        return DiscreteTF2((float(num[0]), 0.0, 0.0), (1.0, 0.0, 0.0), f_s)
    d = num[0]
    rest = num[1:] - d * den[1:]
    # controllable canonical form
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    if n == 2:
        A[1, 0] = 1.0
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = rest.reshape(1, n)
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A * T
    M[:n, n:] = B * T
    E = expm(M)
    Ad = E[:n, :n]
    Bd = E[:n, n:]
    den_z = np.poly(Ad)
    num_z = np.poly(Ad - Bd @ C) + (d - 1.0) * den_z
    if not np.all(np.isfinite(den_z)):
        raise DiscretizationError("non-finite discrete denominator")
    return DiscreteTF2(_pad(num_z, 3), _pad(den_z, 3), f_s)


def _pad(c: np.ndarray, width: int) -> tuple:
    # right-padding multiplies num and den by the same power of z
    c = [float(x) for x in np.real_if_close(c)]
    return tuple(c + [0.0] * (width - len(c)))


def discretize(tf: ContinuousTF2, f_s: float, method: str = "zoh") -> DiscreteTF2:
    if method == "zoh":
        return discretize_zoh(tf, f_s)
    if method in ("tustin", "bilinear"):
        return discretize_tustin(tf, f_s)
    raise ParameterError(f"unknown discretization method {method!r}")


class Loop:
    """Series connection of transfer functions, evaluated pointwise."""

    def __init__(self, *parts):
        if not parts:
            raise ParameterError("empty loop")
        self.parts = parts

    def __call__(self, s):
        out = 1.0
        for p in self.parts:
            out = out * p(s)
        return out


def _evaluate(tf, omegas: np.ndarray) -> np.ndarray:
    if isinstance(tf, DiscreteTF2):
        return tf(np.exp(1j * omegas / tf.f_s))
    if isinstance(tf, Loop) and any(isinstance(p, DiscreteTF2) for p in tf.parts):
        out = np.ones_like(omegas, dtype=complex)
        for p in tf.parts:
            out = out * _evaluate(p, omegas)
        return out
    return tf(1j * omegas)


def freq_response(tf, omegas: Iterable[float]) -> list[tuple[float, float]]:
    """Magnitude (dB) and unwrapped phase (deg) at each angular frequency.

    Discrete sections are evaluated on the unit circle, ``z = exp(j w / f_s)``.
    Phase is unwrapped along the given ordering of ``omegas``.
    """
    w = np.asarray(list(omegas), dtype=float)
    if isinstance(tf, DiscreteTF2) and np.any(w >= math.pi * tf.f_s):
        raise ParameterError("frequency at or above Nyquist")
    h = _evaluate(tf, w)
    mag = 20.0 * np.log10(np.maximum(np.abs(h), _EPS))
    phase = np.degrees(np.unwrap(np.angle(h)))
    return list(zip(mag.tolist(), phase.tolist()))


@dataclass(frozen=True)
class Margins:
    gain_margin_db: float
    phase_margin_deg: float
    crossover: float
    phase_crossover: float | None = None


def stability_margins(loop, w_min: float = 1e-2, w_max: float = 1e8,
                      points: int = 40_000) -> Margins:
    """Gain/phase margins of an open loop from a dense log grid plus root refinement.

    ``loop`` is any callable of ``s`` (``ContinuousTF2``, ``Loop``).
    The crossover is the highest unity-gain crossing. Gain margin is infinite
    when the unwrapped phase never reaches -180 deg (mod 360).
    """
    w = np.logspace(math.log10(w_min), math.log10(w_max), points)
    h = _evaluate(loop, w)
    logmag = np.log(np.maximum(np.abs(h), _EPS))
    phase = np.unwrap(np.angle(h))
    sign = np.sign(logmag)
    idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    if idx.size == 0:
        raise MarginsUndefined("loop gain never crosses unity on the search grid")
    i = idx[-1]

    def f(lw):
        return math.log(max(abs(complex(_evaluate(loop, np.array([math.exp(lw)]))[0])), _EPS))

    wc = math.exp(brentq(f, math.log(w[i]), math.log(w[i + 1]), xtol=1e-14))
    # phase at wc, continued from the grid's unwrapped branch
    h_c = complex(_evaluate(loop, np.array([wc]))[0])
    ph = math.atan2(h_c.imag, h_c.real)
    ph += 2 * math.pi * round((phase[i] - ph) / (2 * math.pi))
    pm = 180.0 + math.degrees(ph)
    pm = (pm + 180.0) % 360.0 - 180.0

    # phase crossings of -180 deg (mod 360) with |L| evaluated there
    shifted = (phase + math.pi) / (2 * math.pi)
    k = np.floor(shifted)
    jumps = np.nonzero(np.diff(k) != 0)[0]
    gm = math.inf
    w180 = None
    for j in jumps:
        mag = abs(h[j])
        cand = -20.0 * math.log10(max(mag, _EPS))
        if w180 is None or cand < gm:
            gm, w180 = cand, float(w[j])
    return Margins(gm, pm, wc, w180)


def tf_product_coeffs(a: ContinuousTF2, b: ContinuousTF2) -> tuple[np.ndarray, np.ndarray]:
    """Polynomial coefficients of ``a * b`` (descending powers, up to 4th order)."""
    return np.polymul(a.num, b.num), np.polymul(a.den, b.den)


def as_arrays(tfs: Sequence) -> list:
    return [(np.array(t.num), np.array(t.den)) for t in tfs]
