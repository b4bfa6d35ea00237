"""Radial feeder description and its line-oriented table format.

Table layout (whitespace separated, ``#`` starts a comment)::

    @base_mva 1.0
    @charger n741.h01.ev
    node  parent  v_nom_V  r_ohm  x_ohm  ratio  kind  nbhd  home

``r_ohm``/``x_ohm`` is the series impedance of the branch into ``node``,
referred to the node's own voltage level. ``ratio`` is the off-nominal tap
of an ideal transformer on the parent side (1.0 for lines and for
transformers at nominal ratio). The slack row has parent ``-``.
``kind`` is one of ``slack``, ``primary``, ``secondary``, ``house``, ``ev``;
``nbhd``/``home`` are ``-`` for nodes that are not end-nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError, TopologyError

KINDS = ("slack", "primary", "secondary", "house", "ev")
END_KINDS = ("house", "ev")


@dataclass
class Bus:
    name: str
    parent: str | None
    v_nom: float
    r: float = 0.0
    x: float = 0.0
    ratio: float = 1.0
    kind: str = "primary"
    nbhd: int | None = None
    home: int | None = None


@dataclass
class FeederModel:
    """Tree of buses, each owning the branch to its parent."""

    buses: list[Bus]
    base_mva: float = 1.0
    charger: str | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.index = {b.name: k for k, b in enumerate(self.buses)}
        if len(self.index) != len(self.buses):
            raise TopologyError("duplicate bus names")
        if self.charger is not None and self.charger not in self.index:
            raise TopologyError(f"charger node {self.charger!r} not in feeder")
        self._order()

    # -- topology ---------------------------------------------------------
    def _order(self) -> None:
        roots = [b for b in self.buses if b.parent is None]
        if len(roots) != 1:
            raise TopologyError(f"need exactly one slack bus, found {len(roots)}")
        children: dict[str, list[str]] = {b.name: [] for b in self.buses}
        for b in self.buses:
            if b.parent is None:
                continue
            if b.parent not in children:
                raise TopologyError(f"bus {b.name!r} has unknown parent {b.parent!r}")
            children[b.parent].append(b.name)
        order = [roots[0].name]
        for name in order:
            order.extend(children[name])
        if len(order) != len(self.buses):
            cyc = sorted(set(self.index) - set(order))
            raise TopologyError(f"buses not reachable from slack (loop?): {cyc[:5]}")
        self.slack = roots[0].name
        self.children = children
        self.order = order
        for b in self.buses:
            if b.r < 0 or b.x < 0:
                raise TopologyError(f"negative impedance on branch into {b.name!r}")
            if b.ratio <= 0:
                raise TopologyError(f"non-positive tap on branch into {b.name!r}")
            if b.kind not in KINDS:
                raise TopologyError(f"unknown kind {b.kind!r} for {b.name!r}")

    def is_tree(self) -> bool:
        return len(self.order) == len(self.buses)

    def path_to_slack(self, name: str) -> list[str]:
        path = [name]
        while self.buses[self.index[path[-1]]].parent is not None:
            path.append(self.buses[self.index[path[-1]]].parent)
        return path

    def count(self, kind: str) -> int:
        return sum(b.kind == kind for b in self.buses)

    @property
    def end_nodes(self) -> dict[str, tuple[int, int, str]]:
        return {b.name: (b.nbhd, b.home, b.kind) for b in self.buses if b.kind in END_KINDS}

    @property
    def n_transformers(self) -> int:
        """Branches that change voltage level, excluding the substation."""
        n = 0
        for b in self.buses:
            if b.parent is None:
                continue
            p = self.buses[self.index[b.parent]]
            if p.v_nom != b.v_nom and p.kind != "slack":
                n += 1
        return n

    # -- per-unit arrays used by the solver ------------------------------
    def arrays(self):
        """Solver arrays in BFS order (cached).

        Returns a dict with ``names`` (BFS order), ``z`` (branch impedance pu,
        entry 0 unused), ``tap``, ``F`` (sparse path-factor matrix, see
        ``powerflow``), ``g`` (product of 1/tap from slack to each bus), and
        ``v_nom``.
        """
        if "arrays" in self._cache:
            return self._cache["arrays"]
        names = self.order
        pos = {n: k for k, n in enumerate(names)}
        nb = len(names)
        z = np.zeros(nb, dtype=complex)
        tap = np.ones(nb)
        v_nom = np.empty(nb)
        parent = np.full(nb, -1, dtype=np.int64)
        for k, n in enumerate(names):
            b = self.buses[self.index[n]]
            v_nom[k] = b.v_nom
            if b.parent is None:
                continue
            z_base = b.v_nom ** 2 / (self.base_mva * 1e6)
            z[k] = complex(b.r, b.x) / z_base
            tap[k] = b.ratio
            parent[k] = pos[b.parent]
        # F[n, b] = prod of 1/tap over branches strictly below b on the path from n
        rows, cols, vals = [], [], []
        g = np.ones(nb)
        for k in range(1, nb):
            g[k] = g[parent[k]] / tap[k]
            f = 1.0
            j = k
            while j > 0:
                rows.append(k)
                cols.append(j)
                vals.append(f)
                f /= tap[j]
                j = parent[j]
        F = sp.csr_matrix((vals, (rows, cols)), shape=(nb, nb))
        out = dict(names=names, pos=pos, z=z, tap=tap, F=F, Ft=F.T.tocsr(), g=g,
                   v_nom=v_nom, parent=parent)
        self._cache["arrays"] = out
        return out


# -- file I/O ---------------------------------------------------------------

def _opt_int(s: str) -> int | None:
    return None if s == "-" else int(s)


def parse_feeder(text: str, source: str = "<string>") -> FeederModel:
    buses = []
    base_mva = 1.0
    charger = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("@"):
                key, _, val = line[1:].partition(" ")
                val = val.strip()
                if key == "base_mva":
                    base_mva = float(val)
                elif key == "charger":
                    charger = val
                else:
                    raise ValueError(f"unknown directive @{key}")
                continue
            f = line.split()
            if len(f) != 9:
                raise ValueError(f"expected 9 columns, got {len(f)}")
            buses.append(Bus(f[0], None if f[1] == "-" else f[1], float(f[2]), float(f[3]),
                             float(f[4]), float(f[5]), f[6], _opt_int(f[7]), _opt_int(f[8])))
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    if not buses:
        raise ConfigError(f"{source}: no buses")
    return FeederModel(buses, base_mva, charger)


def read_feeder(path: str | Path) -> FeederModel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read feeder file: {exc}") from None
    return parse_feeder(text, str(path))


def format_feeder(model: FeederModel, header: str = "") -> str:
    out = [f"# {line}" for line in header.splitlines()]
    out.append(f"@base_mva {model.base_mva:g}")
    if model.charger:
        out.append(f"@charger {model.charger}")
    out.append("# node parent v_nom_V r_ohm x_ohm ratio kind nbhd home")
    for b in model.buses:
        out.append(" ".join([
            b.name, b.parent or "-", f"{b.v_nom:g}", f"{b.r:.6g}", f"{b.x:.6g}",
            f"{b.ratio:g}", b.kind, "-" if b.nbhd is None else str(b.nbhd),
            "-" if b.home is None else str(b.home)]))
    return "\n".join(out) + "\n"


def write_feeder(model: FeederModel, path: str | Path, header: str = "") -> None:
    Path(path).write_text(format_feeder(model, header))


def default_feeder_path() -> Path:
    return Path(str(resources.files("evhil") / "data" / "default_feeder.txt"))


def build_default_feeder() -> FeederModel:
    """The shipped 37-bus primary with 10 neighborhoods of 16 homes."""
    return read_feeder(default_feeder_path())
