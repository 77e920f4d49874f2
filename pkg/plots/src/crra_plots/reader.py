"""CSV readers for the experiment output schema.

Opportunity files carry columns t,path_id,Y,exp_Y,display; strategy files
t,path_id,zeta_1..zeta_n,beta1,beta2,feasible,display. Only the display=true
path is read (the figures show one sample path). Scenarios present in the
directory are discovered from the file names opportunity_<name>.csv /
strategy_<name>.csv; a scenario missing one of the two files is skipped for
the corresponding figure with a warning, never invented.
"""

import csv
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaMismatch

OPPORTUNITY_COLUMNS = ("t", "path_id", "Y", "exp_Y", "display")
STRATEGY_COLUMNS = ("t", "path_id", "beta1", "beta2", "feasible", "display")

CANONICAL_ORDER = ("unconstrained", "var", "tvar", "lel")
LABELS = {"unconstrained": "unconstrained", "var": "VaR", "tvar": "TVaR", "lel": "LEL"}


@dataclass
class ScenarioSeries:
    name: str
    label: str
    t_opportunity: np.ndarray = None
    exp_y: np.ndarray = None
    t_strategy: np.ndarray = None
    zeta: np.ndarray = None  # (steps, n_assets)


@dataclass
class SeriesBundle:
    scenarios: list = field(default_factory=list)

    def with_opportunity(self):
        return [s for s in self.scenarios if s.exp_y is not None]

    def with_strategy(self):
        return [s for s in self.scenarios if s.zeta is not None]


def _read_display_rows(path, required):
    filename = os.path.basename(path)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        fields = reader.fieldnames or []
        for col in required:
            if col not in fields:
                raise SchemaMismatch(filename, col)
        zeta_cols = sorted(
            (c for c in fields if c.startswith("zeta_")),
            key=lambda c: int(c.split("_")[1]),
        )
        if "beta1" in required and not zeta_cols:
            raise SchemaMismatch(filename, "zeta_1")
        rows = [row for row in reader if row["display"] == "true"]
    return rows, zeta_cols


def read_opportunity(path):
    rows, _ = _read_display_rows(path, OPPORTUNITY_COLUMNS)
    t = np.array([float(r["t"]) for r in rows])
    exp_y = np.array([float(r["exp_Y"]) for r in rows])
    return t, exp_y


def read_strategy(path):
    rows, zeta_cols = _read_display_rows(path, STRATEGY_COLUMNS)
    t = np.array([float(r["t"]) for r in rows])
    zeta = np.array([[float(r[c]) for c in zeta_cols] for r in rows])
    return t, zeta


def _scenario_sort_key(name):
    if name in CANONICAL_ORDER:
        return (CANONICAL_ORDER.index(name), name)
    return (len(CANONICAL_ORDER), name)


def load_bundle(in_dir):
    """Discover scenario CSVs in a directory and read their display series."""
    names = set()
    for entry in os.listdir(in_dir):
        for prefix in ("opportunity_", "strategy_"):
            if entry.startswith(prefix) and entry.endswith(".csv"):
                names.add(entry[len(prefix):-4])
    bundle = SeriesBundle()
    for name in sorted(names, key=_scenario_sort_key):
        series = ScenarioSeries(name=name, label=LABELS.get(name, name))
        opp = os.path.join(in_dir, f"opportunity_{name}.csv")
        strat = os.path.join(in_dir, f"strategy_{name}.csv")
        if os.path.exists(opp):
            series.t_opportunity, series.exp_y = read_opportunity(opp)
        else:
            print(f"warning: scenario {name!r} has no opportunity CSV, skipped",
                  file=sys.stderr)
        if os.path.exists(strat):
            series.t_strategy, series.zeta = read_strategy(strat)
        else:
            print(f"warning: scenario {name!r} has no strategy CSV, skipped",
                  file=sys.stderr)
        bundle.scenarios.append(series)
    _check_shared_grid(bundle)
    return bundle


def _check_shared_grid(bundle):
    for attr in ("t_opportunity", "t_strategy"):
        grids = [getattr(s, attr) for s in bundle.scenarios if getattr(s, attr) is not None]
        for g in grids[1:]:
            if len(g) != len(grids[0]) or not np.array_equal(g, grids[0]):
                raise ValueError("scenario CSVs do not share the same time grid")
