import os

import numpy as np
import pytest

from crra_plots import SchemaMismatch, load_bundle, render
from crra_plots.cli import main


def write_scenario(dirpath, name, steps=5, paths=3, n_assets=1, drop=None):
    t = np.linspace(0.0, 1.0, steps + 1)
    opp_cols = ["t", "path_id", "Y", "exp_Y", "display"]
    if drop and drop in opp_cols:
        opp_cols.remove(drop)
    lines = [",".join(opp_cols)]
    for j in range(paths):
        for i, ti in enumerate(t):
            y = 0.1 * (steps - i) * (1 + 0.2 * j)
            row = {
                "t": str(ti), "path_id": str(j), "Y": str(y),
                "exp_Y": str(np.exp(y)), "display": "true" if j == 0 else "false",
            }
            lines.append(",".join(row[c] for c in opp_cols))
    (dirpath / f"opportunity_{name}.csv").write_text("\n".join(lines) + "\n")

    zeta_cols = [f"zeta_{k + 1}" for k in range(n_assets)]
    strat_cols = ["t", "path_id"] + zeta_cols + ["beta1", "beta2", "feasible", "display"]
    if drop and drop in strat_cols:
        strat_cols.remove(drop)
    lines = [",".join(strat_cols)]
    for j in range(paths):
        for i in range(steps):
            row = {"t": str(t[i]), "path_id": str(j), "beta1": "1.0", "beta2": "0.0",
                   "feasible": "true", "display": "true" if j == 0 else "false"}
            for k, c in enumerate(zeta_cols):
                row[c] = str(0.5 + 0.1 * k + 0.05 * i)
            lines.append(",".join(row[c] for c in strat_cols))
    (dirpath / f"strategy_{name}.csv").write_text("\n".join(lines) + "\n")


def test_render_two_scenarios(tmp_path):
    indir = tmp_path / "in"
    indir.mkdir()
    write_scenario(indir, "unconstrained")
    write_scenario(indir, "tvar")
    out = tmp_path / "out"
    report = render(str(indir), str(out))
    assert report["opportunity"]["labels"] == ["unconstrained", "TVaR"]
    assert report["strategy"]["labels"] == ["unconstrained", "TVaR"]
    for stem in ("opportunity", "strategy"):
        for fmt in ("png", "svg"):
            f = out / f"{stem}.{fmt}"
            assert f.exists() and f.stat().st_size > 0
    svg = (out / "opportunity.svg").read_text()
    assert svg.count(">unconstrained<") == 1 and svg.count(">TVaR<") == 1


def test_single_scenario_single_curve(tmp_path):
    indir = tmp_path / "in"
    indir.mkdir()
    write_scenario(indir, "var")
    out = tmp_path / "out"
    report = render(str(indir), str(out), formats=("svg",))
    assert report["opportunity"]["labels"] == ["VaR"]
    assert not (out / "opportunity.png").exists()


def test_multi_asset_strategy_labels(tmp_path):
    indir = tmp_path / "in"
    indir.mkdir()
    write_scenario(indir, "var", n_assets=2)
    report = render(str(indir), str(tmp_path / "out"), formats=("svg",))
    assert report["strategy"]["labels"] == ["VaR zeta_1", "VaR zeta_2"]


def test_display_rows_only(tmp_path):
    indir = tmp_path / "in"
    indir.mkdir()
    write_scenario(indir, "var", steps=7, paths=4)
    bundle = load_bundle(str(indir))
    s = bundle.scenarios[0]
    assert len(s.t_opportunity) == 8  # one display path, N+1 rows
    assert len(s.t_strategy) == 7


def test_empty_directory_fails(tmp_path):
    indir = tmp_path / "in"
    indir.mkdir()
    with pytest.raises(ValueError):
        render(str(indir), str(tmp_path / "out"))
    rc = main(["render", "--in", str(indir), "--out", str(tmp_path / "out")])
    assert rc == 1


def test_schema_mismatch_names_column(tmp_path, capsys):
    indir = tmp_path / "in"
    indir.mkdir()
    write_scenario(indir, "var", drop="exp_Y")
    with pytest.raises(SchemaMismatch) as err:
        render(str(indir), str(tmp_path / "out"))
    assert "exp_Y" in str(err.value)
    rc = main(["render", "--in", str(indir), "--out", str(tmp_path / "out")])
    assert rc == 1
    assert "exp_Y" in capsys.readouterr().err

    indir2 = tmp_path / "in2"
    indir2.mkdir()
    write_scenario(indir2, "var", drop="zeta_1")
    with pytest.raises(SchemaMismatch) as err:
        render(str(indir2), str(tmp_path / "out2"))
    assert "zeta_1" in str(err.value)


def test_mismatched_grids_rejected(tmp_path):
    indir = tmp_path / "in"
    indir.mkdir()
    write_scenario(indir, "var", steps=5)
    write_scenario(indir, "tvar", steps=6)
    with pytest.raises(ValueError):
        render(str(indir), str(tmp_path / "out"))


def test_render_deterministic(tmp_path):
    indir = tmp_path / "in"
    indir.mkdir()
    write_scenario(indir, "var")
    write_scenario(indir, "lel")
    out1 = tmp_path / "o1"
    out2 = tmp_path / "o2"
    render(str(indir), str(out1))
    render(str(indir), str(out2))
    assert (out1 / "opportunity.svg").read_bytes() == (out2 / "opportunity.svg").read_bytes()
    assert (out1 / "strategy.svg").read_bytes() == (out2 / "strategy.svg").read_bytes()


def test_format_validation(tmp_path):
    indir = tmp_path / "in"
    indir.mkdir()
    write_scenario(indir, "var")
    with pytest.raises(ValueError):
        render(str(indir), str(tmp_path / "out"), formats=("pdf",))
    with pytest.raises(ValueError):
        render(str(indir), str(tmp_path / "out"), formats=())
