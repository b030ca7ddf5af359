"""Secondary acceptance: consume real experiment CSVs from the core CLI for
two dimensions and render the four-panel figure with a verifiable reference
line. The core package is driven only through its command line and the
metrics CSV contract."""

import json
import subprocess
import sys

from obmplots import PanelSpec, render


def run_core_cli(tmp_path, d, out_name):
    cfg = {
        "objective": "linear_sq",
        "stream": "state_dep",
        "rho": 0.5,
        "eps": 0.5,
        "sigma": 1.0,
        "d": d,
        "n_iters": 4096,
        "n_reps": 20,
        "n_truth_reps": 50,
        "checkpoints": [256, 512, 1024, 2048, 4096],
        "seed": 0,
    }
    cfg_path = tmp_path / f"cfg_d{d}.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / out_name
    proc = subprocess.run(
        [sys.executable, "-m", "obmsgd.cli", "run", "--config", str(cfg_path), "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return out


def test_four_panel_figure_from_experiment_csvs(tmp_path):
    csv_d2 = run_core_cli(tmp_path, 2, "metrics_d2.csv")
    csv_d5 = run_core_cli(tmp_path, 5, "metrics_d5.csv")
    out = tmp_path / "panels.png"
    spec = PanelSpec(
        csvs=[str(csv_d2), str(csv_d5)],
        labels=["d=2", "d=5"],
        reference_slope=-0.125,
    )
    result = render(spec, out=str(out))
    slope_dev = abs(result.measured_reference_slope + 0.125)
    ok = out.exists() and out.stat().st_size > 0 and len(result.figure.axes) == 4 and slope_dev <= 1e-6
    print(
        f"{'PASS' if ok else 'FAIL'}: four-panel figure from d=2/d=5 experiment CSVs "
        f"(reference slope dev {slope_dev:.2e} <= 1e-6)"
    )
    assert ok
