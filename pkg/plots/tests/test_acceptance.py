"""Acceptance: rendering the reference experiment output.

Produces the experiment CSVs through the runner CLI (the package's only
interface to the solver), renders them, and checks both figures carry exactly
four legend entries; a schema violation must exit nonzero naming the column.
"""

import os
import subprocess
import sys

import pytest

from crra_plots.cli import main

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
SEC5_CONFIG = os.path.join(REPO_ROOT, "configs", "paper_sec5.toml")


@pytest.fixture(scope="module")
def sec5_output(tmp_path_factory):
    out = tmp_path_factory.mktemp("sec5_csv")
    proc = subprocess.run(
        [sys.executable, "-m", "crra_bsde.cli", "run",
         "--config", SEC5_CONFIG, "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return out


def test_criterion_10_render_reference_output(sec5_output, tmp_path, capsys):
    out = tmp_path / "figs"
    rc = main(["render", "--in", str(sec5_output), "--out", str(out),
               "--formats", "png,svg"])
    images = sorted(os.listdir(out))
    ok = rc == 0 and images == [
        "opportunity.png", "opportunity.svg", "strategy.png", "strategy.svg"
    ]
    labels = {"unconstrained", "VaR", "TVaR", "LEL"}
    for stem in ("opportunity", "strategy"):
        svg = (out / f"{stem}.svg").read_text()
        counts = {lab: svg.count(f">{lab}<") for lab in labels}
        ok = ok and all(c == 1 for c in counts.values())
    report_line = f"ACCEPTANCE 10: {'PASS' if ok else 'FAIL'} - render on reference output"
    print("\n" + report_line)
    assert ok, report_line


def test_criterion_10_schema_violation(sec5_output, tmp_path, capsys):
    broken = tmp_path / "broken"
    broken.mkdir()
    for name in os.listdir(sec5_output):
        if name.endswith(".csv"):
            (broken / name).write_text((sec5_output / name).read_text())
    target = broken / "opportunity_var.csv"
    text = target.read_text()
    target.write_text(text.replace("t,path_id,Y,exp_Y,display",
                                   "t,path_id,Y,expY,display", 1))
    rc = main(["render", "--in", str(broken), "--out", str(tmp_path / "figs")])
    err = capsys.readouterr().err
    assert rc != 0
    assert "exp_Y" in err and "opportunity_var.csv" in err
