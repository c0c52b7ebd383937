import json

import numpy as np
import pytest

from spimisac.array_model import CarrierGrid, deg2dir
from spimisac.cli import main
from spimisac.experiments import (
    METHODS,
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    load_config,
    load_preset,
    preset_names,
    run_arraygain_demo,
    run_experiment,
    run_mismatch_sweep,
    simulate_trial,
)
from spimisac.experiments.plotting import emit_plots, load_result
from spimisac.experiments.runner import SweepResult

TINY = dict(n_t=16, n_r=4, n_subcarriers=4, n_paths=4, n_selected=2, n_targets=1)


def _tiny(**kw):
    base = ExperimentConfig(name="tiny", trials=2, seed=7).replace(system=TINY, sweep=dict(axis="snr_db", values=[-10, 0]))
    return base.replace(**kw)


def test_all_figure_presets_exist_and_load():
    names = preset_names()
    for required in ("fig3", "fig4a", "fig4b", "fig5", "fig6a", "fig6b", "fig6c", "fig7", "fig8", "desk"):
        assert required in names
    for name in names:
        cfg = load_preset(name)
        assert cfg.name == name
    desk = load_preset("desk")
    assert (desk.system.n_t, desk.system.n_r, desk.system.n_subcarriers, desk.trials) == (32, 8, 16, 50)
    fig3 = load_preset("fig3")
    assert fig3.system.n_rf == 5 and fig3.system.n_streams == 3
    fig8 = load_preset("fig8")
    assert fig8.sweep.values == (0.0, 0.3, 0.5, 0.8, 1.0)
    with pytest.raises(ConfigError):
        load_preset("nope")


def test_config_line_precise_errors(tmp_path):
    text = '{\n  "name": "x",\n  "system": {\n    "n_selected": 9\n  },\n  "trials": 3\n}\n'
    p = tmp_path / "bad.json"
    p.write_text(text)
    with pytest.raises(ConfigError, match=r"n_selected \(line 4\)"):
        load_config(p)
    p.write_text('{\n  "name": "x",\n  "bogus": 1\n}\n')
    with pytest.raises(ConfigError, match=r"bogus \(line 3\): unknown key"):
        load_config(p)
    p.write_text('{\n  "name": "x",\n  "trials": 0\n}\n')
    with pytest.raises(ConfigError, match=r"trials \(line 3\)"):
        load_config(p)
    p.write_text('{\n  "name": "x",,\n}\n')
    with pytest.raises(ConfigError, match="line 2"):
        load_config(p)


@pytest.mark.parametrize(
    "data",
    [
        {"epsilon": 1.5},
        {"sweep": {"axis": "nope", "values": [1]}},
        {"sweep": {"axis": "l_s", "values": [9]}},
        {"sweep": {"axis": "mismatch_dod", "values": [-1]}},
        {"se_variant": "other"},
        {"targets_deg": [10, 20, 30]},
        {"seed": -1},
        {"system": {"n_t": 4, "n_selected": 3, "n_targets": 2}},
    ],
)
def test_config_rejects_invalid(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_config_roundtrip_through_json(tmp_path):
    cfg = load_preset("fig8")
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert load_config(p) == cfg


def test_run_experiment_rows_and_methods():
    res = run_experiment(_tiny())
    assert res.methods()[: len(METHODS)] == list(METHODS)
    keys = [(r.sweep_value, r.method, r.metric) for r in res.rows]
    assert len(keys) == len(set(keys))
    for x in (-10.0, 0.0):
        for m in METHODS:
            assert res.value(x, m, "se") > 0
    assert all(r.trials == 2 for r in res.rows)
    assert set(res.metrics()) == {"se", "bf_gain", "comm_error", "radar_error"}


def test_csv_bytes_deterministic_and_worker_invariant(tmp_path):
    cfg = _tiny()
    a = run_experiment(cfg, workers=1).write_csv(tmp_path / "a")[0].read_bytes()
    b = run_experiment(cfg, workers=1).write_csv(tmp_path / "b")[0].read_bytes()
    c = run_experiment(cfg, workers=2).write_csv(tmp_path / "c")[0].read_bytes()
    assert a == b == c
    header = a.decode().splitlines()[0]
    assert header == "sweep_value,method,metric,mean,stderr,trials"


def test_worker_env_variable(monkeypatch, tmp_path):
    cfg = _tiny(trials=2)
    ref = run_experiment(cfg).write_csv(tmp_path / "a")[0].read_bytes()
    monkeypatch.setenv("SPIMISAC_WORKERS", "2")
    assert run_experiment(cfg).write_csv(tmp_path / "b")[0].read_bytes() == ref
    monkeypatch.setenv("SPIMISAC_WORKERS", "0")
    with pytest.raises(ValueError):
        run_experiment(cfg)


def test_trial_independence():
    # trial t's values do not depend on the total trial count
    v_small, _ = simulate_trial(_tiny(trials=2), 1)
    v_large, _ = simulate_trial(_tiny(trials=9), 1)
    assert v_small == v_large


def test_seed_changes_results():
    a, _ = simulate_trial(_tiny(seed=1), 0)
    b, _ = simulate_trial(_tiny(seed=2), 0)
    assert a != b


def test_mismatch_zero_equals_genie():
    cfg = _tiny(snr_db=0.0)
    genie, _ = simulate_trial(cfg.replace(sweep=dict(axis="snr_db", values=[0.0])), 0)
    for which in ("dod", "doa", "target"):
        res = run_mismatch_sweep(cfg.replace(trials=1), which, [0.0, 5.0])
        for m in METHODS:
            assert res.value(0.0, m, "se") == genie[(0.0, m, "se")]
            assert res.value(0.0, m, "bf_gain") == genie[(0.0, m, "bf_gain")]
    with pytest.raises(ValueError):
        run_mismatch_sweep(cfg, "gain", [0.0])


def test_target_mismatch_reduces_beamforming_gain():
    res = run_mismatch_sweep(_tiny(trials=4, epsilon=0.2), "target", [0.0, 10.0])
    for m in ("MIMO-ISAC hybrid", "SPIM hybrid", "SI-AO", "SD-AO"):
        assert res.value(10.0, m, "bf_gain") < res.value(0.0, m, "bf_gain")


def test_fd_unaffected_by_epsilon():
    res = run_experiment(_tiny(trials=1).replace(sweep=dict(axis="epsilon", values=[0.0, 1.0])))
    assert res.value(0.0, "FD", "se") == res.value(1.0, "FD", "se")


def test_l_s_sweep_runs():
    res = run_experiment(_tiny(trials=1).replace(sweep=dict(axis="l_s", values=[1, 4])))
    # L_S = L leaves one pattern, so SPIM and MIMO-ISAC hybrids coincide
    assert res.value(4.0, "SPIM hybrid", "se") == pytest.approx(res.value(4.0, "MIMO-ISAC hybrid", "se"))


def test_estimated_mode_runs():
    cfg = _tiny(trials=1, estimation="estimated", pilot_tx=8, pilot_rx=4)
    res = run_experiment(cfg)
    assert res.value(0.0, "SPIM hybrid", "se") > 0


def test_beampattern_sweep_curves():
    cfg = load_preset("fig8").replace(system=dict(n_t=32, n_subcarriers=8), beampattern_points=91)
    res = run_experiment(cfg)
    assert len(res.curves) == 2 * 5
    x, mean, _ = next(iter(res.curves.values()))
    assert x.size == 91 and np.all(mean >= 0)


def test_arraygain_demo_properties():
    res = run_arraygain_demo()
    phi = float(deg2dir(40.0))
    step = 2 / 2048
    flat = {(r.method, r.metric): r.mean for r in res.rows}
    for f_c, bw in ((3.5e9, 0.1e9), (28e9, 2e9), (300e9, 30e9)):
        tag = f"fc={f_c / 1e9:g}GHz B={bw / 1e9:g}GHz"
        assert flat[(f"{tag} center", "gain_at_physical")] == pytest.approx(1.0, abs=1e-12)
        assert abs(flat[(f"{tag} center", "peak_direction")] - phi) <= step
        eta = CarrierGrid(f_c, bw, 64).eta
        assert abs(flat[(f"{tag} high", "peak_direction")] - eta[-1] * phi) <= step
        assert abs(flat[(f"{tag} low", "peak_direction")] - eta[0] * phi) <= step
    # narrowband: edge peaks within one beamwidth of the center
    tag = "fc=3.5GHz B=0.1GHz"
    assert abs(flat[(f"{tag} high", "peak_direction")] - phi) < 2 / 128
    # THz: edge factors about 1 +- 0.05
    assert CarrierGrid(300e9, 30e9, 64).eta[-1] == pytest.approx(1.05, abs=1e-3)


def test_plots_deterministic_and_series_count(tmp_path):
    res = run_experiment(_tiny(trials=1))
    a = emit_plots(res, tmp_path / "a")
    b = emit_plots(res, tmp_path / "b")
    assert {p.name for p in a} == {"bf_gain.svg", "comm_error.svg", "radar_error.svg", "se.svg"}
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    assert len(res.series("se")) == 6
    with pytest.raises(ValueError):
        emit_plots(SweepResult(res.config, [], {}), tmp_path / "c")


def test_load_result_roundtrip(tmp_path):
    res = run_experiment(_tiny(trials=1))
    res.write_csv(tmp_path)
    back = load_result(tmp_path)
    assert back.rows == res.rows
    with pytest.raises(FileNotFoundError):
        load_result(tmp_path / "missing")


def test_cli_simulate_plot_arraygain(tmp_path, capsys):
    cfg_path = tmp_path / "tiny.json"
    cfg_path.write_text(json.dumps(_tiny(trials=1).to_dict()))
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out), "--seed", "3"]) == 0
    assert (out / "results.csv").is_file() and (out / "config.json").is_file()
    assert load_config(out / "config.json").seed == 3
    assert main(["plot", "--in", str(out)]) == 0
    assert (out / "se.svg").is_file()
    assert main(["arraygain", "--out", str(tmp_path / "ag")]) == 0
    assert len(list((tmp_path / "ag").glob("arraygain_*.csv"))) == 3
    capsys.readouterr()


def test_cli_error_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "epsilon": 3\n}\n')
    assert main(["simulate", "--config", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["simulate", "--preset", "nope"]) == 2
    assert main(["plot", "--in", str(tmp_path / "none")]) == 1
    with pytest.raises(SystemExit):
        main(["simulate"])
