"""Regenerate src/evhil/data/default_feeder.txt.

Primary layout follows the public IEEE 37-node test feeder segment list
(lengths in feet); everything else is the documented default of this repo.
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from evhil.grid.feeder import Bus, FeederModel, write_feeder  # noqa: E402

FT = 0.3048e-3  # km per foot
R_KM, X_KM = 0.2, 0.4  # primary line, ohm/km

# (from, to, feet); 709-775 is a transformer in the original, a short line here
SEGMENTS = """
799 701 1850
701 702 960
702 705 400
702 713 360
702 703 1320
703 727 240
703 730 600
704 714 80
704 720 800
705 742 320
705 712 240
706 725 280
707 724 760
707 722 120
708 733 320
708 732 320
709 731 600
709 708 320
710 735 200
710 736 1280
711 741 400
711 740 200
713 704 520
714 718 520
720 707 920
720 706 600
727 744 280
730 709 200
733 734 560
734 737 640
734 710 520
737 738 400
738 711 400
744 728 200
744 729 280
709 775 50
"""

NEIGHBORHOODS = (712, 742, 725, 724, 718, 728, 731, 736, 740, 741)
CHARGER = (741, 16)

V_SUB, V_PRI, V_SEC = 230_000.0, 4_800.0, 240.0
SUB_Z = (0.01, 0.08, 2.5e6)          # r pu, x pu, rating VA
SVC_Z = (0.02, 0.05, 250e3)          # neighborhood service transformer
PEDESTAL_Z = (0.04, 0.02)            # transformer LV bus -> pedestal, ohm
DROP_Z = (0.02, 0.01)                # pedestal -> house, ohm
EV_Z = (0.05, 0.005)                 # house -> EV point, ohm
PEDESTALS, HOMES_PER_PEDESTAL = 4, 4


def pct_to_ohm(r_pu, x_pu, s_va, v):
    zb = v * v / s_va
    return r_pu * zb, x_pu * zb


def build():
    buses = [Bus("sub", None, V_SUB, kind="slack")]
    r, x = pct_to_ohm(*SUB_Z, V_PRI)
    buses.append(Bus("799", "sub", V_PRI, r, x, 1.0, "primary"))
    for line in SEGMENTS.split("\n"):
        if not line.strip():
            continue
        a, b, ft = line.split()
        km = float(ft) * FT
        buses.append(Bus(b, a, V_PRI, R_KM * km, X_KM * km, 1.0, "primary"))
    for nb, bus in enumerate(NEIGHBORHOODS, 1):
        lv = f"n{bus}"
        r, x = pct_to_ohm(*SVC_Z, V_SEC)
        buses.append(Bus(lv, str(bus), V_SEC, r, x, 1.0, "secondary"))
        home = 0
        for p in range(1, PEDESTALS + 1):
            ped = f"{lv}.p{p}"
            buses.append(Bus(ped, lv, V_SEC, *PEDESTAL_Z, 1.0, "secondary"))
            for _ in range(HOMES_PER_PEDESTAL):
                home += 1
                h = f"{lv}.h{home:02d}"
                buses.append(Bus(h, ped, V_SEC, *DROP_Z, 1.0, "house", nb, home))
                buses.append(Bus(h + ".ev", h, V_SEC, *EV_Z, 1.0, "ev", nb, home))
    charger = f"n{CHARGER[0]}.h{CHARGER[1]:02d}.ev"
    return FeederModel(buses, 1.0, charger)


if __name__ == "__main__":
    model = build()
    out = Path(__file__).resolve().parents[1] / "src" / "evhil" / "data" / "default_feeder.txt"
    write_feeder(model, out, header=(
        "Default feeder: 230/4.8 kV 2.5 MVA substation, 37-bus primary\n"
        "(IEEE 37-node segment layout, 0.2+j0.4 ohm/km), 10 neighborhoods of\n"
        "16 homes; each home has a house and an EV end-node.\n"
        "Generated by tools/make_feeder.py"))
    print(out, len(model.buses), "buses")
