import numpy as np

from epiworkbench.calibration import SensitivityRow
from epiworkbench.figures import (
    coverage_figure,
    front_figure,
    growth_figure,
    overlay_figure,
    runtime_figure,
    sensitivity_figure,
    sigma_table_figure,
    trajectory_figure,
)


def test_all_figures_render_to_files(tmp_path):
    rows = [{"day": d, "new_infections": 10 * d, "new_deaths": d,
             "q": 5 * d, "a_c": d % 4, "a_v": 1, "a_q": 2}
            for d in range(1, 11)]
    assert trajectory_figure(rows, tmp_path / "traj.png", title="demo").exists()

    observed = np.abs(np.sin(np.linspace(0, 3, 40))) * 100
    simulated = np.vstack([observed * k for k in (0.8, 1.1, 1.3)])
    assert overlay_figure(observed, simulated, tmp_path / "overlay.png").exists()

    fronts = {"reference": np.array([[-10, -1, 0.0], [-5, -2, -50]]),
              "agent": np.array([[-8, -1.5, -10.0]])}
    assert front_figure(fronts, tmp_path / "front.png",
                        highlight=np.array([-6.0, -1.2, -20.0])).exists()

    rates = np.random.default_rng(0).normal(0.06, 0.02, 200)
    assert growth_figure(rates, {0.02: rates + 0.01}, tmp_path / "growth.png").exists()

    import pandas as pd

    table = pd.DataFrame({"sigma": [0.01, 0.02, 0.03],
                          "statistic": [0.9, 0.2, 0.7],
                          "p_value": [0.0, 0.1, 0.0]})
    assert sigma_table_figure(table, tmp_path / "sigma.png").exists()

    rows = [SensitivityRow("parameter", "mu", v, e)
            for v, e in ((9, 0.6), (10, 0.4), (11, 1.5))]
    rows += [SensitivityRow("intervention", "closure", v, e)
             for v, e in ((0, 0.4), (1, 0.8), (3, 1.0))]
    assert sensitivity_figure(rows, tmp_path / "sens.png").exists()

    fit = {"coefficients": [1e-6, 1e-5, 0.001], "target_length": 500,
           "predicted_seconds": 0.26,
           "measurements": [{"length": l, "seconds": 1e-6 * l * l}
                            for l in range(10, 101, 10)]}
    assert runtime_figure(fit, tmp_path / "runtime.png").exists()

    assert coverage_figure({0.95: np.linspace(1, 0.1, 50),
                            0.80: np.linspace(1, 3, 50)},
                           tmp_path / "coverage.png").exists()
