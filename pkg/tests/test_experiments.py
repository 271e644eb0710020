import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlslab import dynamics as dyn
from nlslab.cli import main
from nlslab.experiments import (
    ExperimentConfig,
    fit_loglog,
    load_config,
    load_field,
    run_experiment,
    save_field,
)
from nlslab.ground_state import eval_Q, shift_spectrum
from nlslab.spectral import ConfigurationError, Field, GridSpec, NumericalError

SMALL = [
    "grid.num_modes=128",
    "grid.box_length=20",
    "solver.dt=1e-3",
    "solver.t_end=0.05",
    "solver.record_stride=10",
    "N=[2]",
]


def small_cfg(scenario, tmp_path, extra=()):
    return ExperimentConfig().with_overrides(
        [f"scenario={scenario}", f"out={str(tmp_path)!r}"] + SMALL + list(extra))


def read_csv(text):
    return list(csv.reader(io.StringIO(text)))


# --- config ---------------------------------------------------------------------

def test_yaml_round_trip():
    cfg = ExperimentConfig().with_overrides(["seed=5", "solver.dt=2.5e-4", "N=[4, 8]"])
    back = ExperimentConfig.from_yaml(cfg.to_yaml())
    assert back == cfg
    assert back.N == [4.0, 8.0]
    assert back.solver.dt == 2.5e-4


def test_unknown_keys_rejected():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"grid": {"num_modes": 64, "bogus": 1}})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"nonsense": 1})
    with pytest.raises(ConfigurationError):
        ExperimentConfig().with_overrides(["solver.nothing=1"])
    with pytest.raises(ConfigurationError):
        ExperimentConfig().with_overrides(["no_equals_sign"])


def test_non_mapping_yaml_rejected():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_yaml("- 1\n- 2\n")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(str(tmp_path / "absent.yaml"))


def test_N_above_half_band_rejected():
    # 128 modes on a box of 20 resolve |xi| up to ~20, so N = 16 is too large
    cfg = ExperimentConfig().with_overrides(SMALL + ["N=[16]"])
    with pytest.raises(ConfigurationError):
        cfg.validate()
    ExperimentConfig().with_overrides(SMALL + ["N=[8]"]).validate()


def test_bad_values_rejected():
    for item in ["s=1.2", "workers=0", "scenario=wander", "N=[]"]:
        with pytest.raises(ConfigurationError):
            ExperimentConfig().with_overrides(SMALL + [item]).validate()


def test_presets_validate():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    names = sorted(p.name for p in root.glob("*.yaml"))
    assert names
    for name in names:
        load_config(str(root / name)).validate()


# --- fits -----------------------------------------------------------------------

@given(st.floats(-3, 3), st.floats(-5, 5))
def test_fit_recovers_power_law(p, c):
    x = 2.0 ** np.arange(3, 9)
    fit = fit_loglog(x, math.exp(c) * x ** p, "q")
    assert fit.slope == pytest.approx(p, abs=1e-9)
    assert fit.intercept == pytest.approx(c, abs=1e-8)
    assert fit.residual < 1e-9
    assert (fit.n_points, fit.range_lo, fit.range_hi) == (6, 8.0, 256.0)


def test_fit_trim_drops_end_octaves():
    x = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    y = x ** -1.0
    y[0] *= 10.0
    y[-1] *= 0.01
    fit = fit_loglog(x, y, "q", trim=True)
    assert fit.quantity == "q_trimmed"
    assert fit.n_points == 3
    assert fit.slope == pytest.approx(-1.0)


def test_fit_rejects_nonpositive():
    with pytest.raises(NumericalError):
        fit_loglog([1.0, 2.0], [1.0, 0.0], "q")
    with pytest.raises(NumericalError):
        fit_loglog([1.0], [1.0], "q")


# --- runs -----------------------------------------------------------------------

def test_simulate_soliton_conserves_mass(tmp_path):
    cfg = small_cfg("simulate", tmp_path, ["simulate.initial=soliton", "solver.dealias=false"])
    out = run_experiment(cfg)
    assert out.passed
    rows = read_csv((tmp_path / "ledger.csv").read_text())
    assert rows[0][:3] == ["t", "mass", "H"]
    assert len(rows) == 1 + 6
    assert (tmp_path / "config.yaml").exists()
    assert ExperimentConfig.from_yaml((tmp_path / "config.yaml").read_text()) == cfg


def test_runs_are_byte_identical(tmp_path):
    texts = []
    for k in range(2):
        cfg = small_cfg("simulate", tmp_path / str(k), ["simulate.initial=rough", "seed=3"])
        run_experiment(cfg)
        texts.append((tmp_path / str(k) / "ledger.csv").read_bytes())
    assert texts[0] == texts[1]


def test_seed_changes_output(tmp_path):
    a = run_experiment(small_cfg("simulate", tmp_path / "a", ["simulate.initial=rough", "seed=1"]),
                       write=False)
    b = run_experiment(small_cfg("simulate", tmp_path / "b", ["simulate.initial=rough", "seed=2"]),
                       write=False)
    assert a.files["ledger.csv"] != b.files["ledger.csv"]


def test_growth_of_soliton_is_flat(tmp_path):
    cfg = small_cfg("growth_scan", tmp_path, ["growth_scan.data=soliton", "solver.t_end=0.5",
                                              "growth_scan.t_fit_min=0.1",
                                              "solver.dealias=false"])
    out = run_experiment(cfg, write=False)
    assert out.passed
    assert abs(out.fits[0].slope) < 1e-6


def test_bandlimited_conservation_skips_fit(tmp_path):
    cfg = ExperimentConfig().with_overrides([
        "scenario=conservation_scan", f"out={str(tmp_path)!r}",
        "grid.num_modes=512", "grid.box_length=25.132741228718345",
        "solver.dt=1e-4", "N=[8, 16, 32]",
        "conservation_scan.data=bandlimited", "conservation_scan.kmax=4",
        "conservation_scan.delta=0.02", "conservation_scan.sigma_sweep=false",
    ])
    out = run_experiment(cfg)
    assert out.passed
    assert not out.fits
    assert any("fit skipped" in n for n in out.notes)
    rows = read_csv((tmp_path / "increments.csv").read_text())
    assert rows[0] == ["kind", "window", "N", "sigma", "increment", "floor", "below_floor"]
    assert all(r[-1] == "1" for r in rows[1:])


def test_decompose_stored_field(tmp_path):
    grid = GridSpec(1024, 40 * math.pi)
    q = Field.from_spectrum(grid, shift_spectrum(eval_Q(grid).spectrum, grid, 0.3) * np.exp(0.2j))
    u = dyn.rough_data(grid, 0.5, 4, norm=1e-3) + q
    path = tmp_path / "u.npz"
    save_field(path, u)
    back = load_field(str(path))
    np.testing.assert_array_equal(back.values, u.values)
    cfg = ExperimentConfig().with_overrides([
        "scenario=decompose", f"out={str(tmp_path / 'run')!r}",
        "grid.num_modes=1024", f"grid.box_length={40 * math.pi!r}", "N=[8]",
        f"decompose.field_path={str(path)!r}",
    ])
    out = run_experiment(cfg)
    assert out.passed
    frame = read_csv((tmp_path / "run" / "frame.csv").read_text())
    theta, x0 = float(frame[1][8]), float(frame[1][9])
    assert theta == pytest.approx(0.2, abs=1e-2)
    assert x0 == pytest.approx(0.3, abs=1e-2)
    assert (tmp_path / "run" / "rates.csv").exists()


def test_workers_do_not_change_output(tmp_path):
    extra = ["orbital.sigmas=[1e-3, 2e-3]", "orbital.t_start=0.01", "orbital.t_probe=0.04",
             "solver.dealias=false", "grid.num_modes=512", "grid.box_length=80.0"]
    outs = []
    for w in (1, 2):
        cfg = small_cfg("orbital", tmp_path / str(w), extra + [f"workers={w}"])
        outs.append(run_experiment(cfg, write=False).files)
    for name in outs[0]:
        if name != "config.yaml":
            assert outs[0][name] == outs[1][name]


# --- CLI ------------------------------------------------------------------------

def cli_args(tmp_path, *extra):
    args = ["--out", str(tmp_path)]
    for item in SMALL + list(extra):
        args += ["--override", item]
    return args


def test_cli_exit_pass(tmp_path, capsys):
    assert main(["simulate"] + cli_args(tmp_path, "simulate.initial=soliton",
                                        "solver.dealias=false")) == 0
    assert "overall: PASS" in capsys.readouterr().out
    assert (tmp_path / "report.txt").exists()


def test_cli_exit_fail(tmp_path, capsys):
    code = main(["growth-scan"] + cli_args(tmp_path, "growth_scan.data=soliton",
                                           "growth_scan.t_fit_min=0.01",
                                           "growth_scan.margin=-5"))
    assert code == 1
    assert "FAIL growth_envelope_exponent" in capsys.readouterr().out


def test_cli_exit_config(tmp_path, capsys):
    assert main(["simulate"] + cli_args(tmp_path, "grid.bogus=1")) == 2
    assert main(["simulate", "--seed", "-1"] + cli_args(tmp_path)) == 2
    assert "configuration error" in capsys.readouterr().err


def test_cli_exit_numerical(tmp_path, capsys):
    code = main(["simulate"] + cli_args(tmp_path, "simulate.initial=plane_wave",
                                        "simulate.amplitude=1e150"))
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


def test_cli_print_config(tmp_path, capsys):
    assert main(["symbol-scan", "--print-config", "--seed", "9"]) == 0
    cfg = ExperimentConfig.from_yaml(capsys.readouterr().out)
    assert cfg.scenario == "symbol_scan"
    assert cfg.seed == 9
