"""Static SVG figures (Agg backend, reproducible bytes)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Date": None, "Creator": "evhil"}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": "evhil", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def plot_bode(omegas, mag_db, phase_deg, path, title="Open loop"):
    fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    a1.semilogx(omegas, mag_db)
    a1.axhline(0.0, color="0.6", lw=0.8)
    a1.set_ylabel("Magnitude (dB)")
    a1.set_title(title)
    a2.semilogx(omegas, phase_deg)
    a2.set_ylabel("Phase (deg)")
    a2.set_xlabel("Frequency (rad/s)")
    for a in (a1, a2):
        a.grid(True, which="both", lw=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_transient(cols: dict, path, window=(-0.05, 0.1)):
    """Grid voltage and current around the step, plus filtered P and Q."""
    t = np.asarray(cols["t_s"])
    sel = (t >= window[0]) & (t <= window[1])
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(7, 5.5), sharex=False)
    a1.plot(t[sel], np.asarray(cols["v_s_V"])[sel], lw=0.8, label="v_s (V)")
    a1.set_ylabel("Voltage (V)")
    b1 = a1.twinx()
    b1.plot(t[sel], np.asarray(cols["i_s_A"])[sel], lw=0.8, color="C1", label="i_s (A)")
    b1.set_ylabel("Current (A)")
    a1.axvline(0.0, color="0.5", lw=0.8, ls="--")
    a1.set_xlabel("Time (s)")
    a2.plot(t, np.asarray(cols["p_W"]) / 1e3, lw=0.8, label="P (kW)")
    a2.plot(t, np.asarray(cols["q_VAR"]) / 1e3, lw=0.8, label="Q (kVAR)")
    a2.set_xlabel("Time (s)")
    a2.set_ylabel("Filtered power")
    a2.legend(loc="best")
    for a in (a1, a2):
        a.grid(True, lw=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_grid(cols: dict, path):
    t = np.asarray(cols["t_s"]) / 60.0
    fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5.5))
    a1.plot(t, cols["node_vrms_V"], lw=0.7)
    a1.set_ylabel("Charger node (V RMS)")
    v_th = np.asarray(cols["v_th_V"], dtype=float)
    if np.any(np.isfinite(v_th)):
        a1.plot(t, v_th, lw=0.7, ls="--", label="threshold")
        a1.legend(loc="best")
    a2.plot(t, np.asarray(cols["p_meas_W"]) / 1e3, lw=0.8, label="delivered")
    a2.plot(t, np.asarray(cols["p_cmd_W"]) / 1e3, lw=0.6, ls=":", label="command")
    a2.set_ylabel("Charger power (kW)")
    a2.set_xlabel("Time (min)")
    a2.legend(loc="best")
    for a in (a1, a2):
        a.grid(True, lw=0.3)
    fig.tight_layout()
    return _save(fig, path)
