import json
import math

import numpy as np
import pytest

from helmlayer import ConfigError, DegenerateFit
from helmlayer.cli import main
from helmlayer.experiments import (DEFAULT_CONFIG, ExperimentConfig, fit_rate,
                                   run_c1_study, run_validate)


def test_fit_rate_exact_slopes():
    eps = [0.2, 0.1, 0.05, 0.02]
    slope, _, r_sq = fit_rate([(e, 3.0 * e) for e in eps])
    assert slope == pytest.approx(1.0, abs=1e-12)
    assert r_sq == pytest.approx(1.0)
    slope2, _, _ = fit_rate([(e, 0.7 * e * e) for e in eps])
    assert slope2 == pytest.approx(2.0, abs=1e-12)


def test_fit_rate_noisy_power_law():
    rng = np.random.default_rng(321)
    slopes = []
    for _ in range(20):
        eps = np.array([0.2, 0.1, 0.05, 0.02, 0.01])
        err = 2.0 * eps ** 1.5 * (1.0 + 0.2 * (2.0 * rng.random(len(eps)) - 1.0))
        slopes.append(fit_rate(list(zip(eps, err)))[0])
    assert all(1.3 <= s <= 1.7 for s in slopes)


def test_fit_rate_guards():
    with pytest.raises(ValueError):
        fit_rate([(0.1, 1.0), (0.05, 0.5)])
    with pytest.raises(ValueError):
        fit_rate([(0.1, 1.0), (0.05, -0.5), (0.025, 0.2)])
    with pytest.raises(DegenerateFit):
        fit_rate([(0.1, 1.0), (0.08, 0.8), (0.05, 0.5)])


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenarioo": "sweep"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"geometry": {"hh": 3}})


def test_config_epsilon_list_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"epsilon_list": [0.1, 0.2]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"epsilon_list": [0.1, -0.2]})
    cfg = ExperimentConfig.from_dict({"epsilon_list": [0.2, 0.1]})
    assert cfg.epsilon_list == (0.2, 0.1)


def test_config_defaults_and_derived_epsilons():
    cfg = ExperimentConfig.from_dict({})
    assert cfg.scenario == "validate"
    assert cfg.H == cfg.layer.h + 2.0
    targets = [e * cfg.wave.k2 for e in cfg.epsilon_list]
    assert targets == pytest.approx([0.2, 0.1, 0.05, 0.025])


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"n_samples": 0})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenario": "other"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"geometry": {"h": 1.0}})


def _tiny_c1_config(tmp_path, **kw):
    user = {
        "scenario": "c1_study",
        "geometry": {"h": 5.0, "delta": 0.05, "width": 12.0},
        "process": {"kind": "matern2", "rho": 0.3},
        "n_samples": 4,
        "master_seed": 77,
        "output_dir": str(tmp_path / "out"),
    }
    user.update(kw)
    return ExperimentConfig.from_dict(user)


def test_c1_study_outputs_are_thread_invariant(tmp_path):
    cfg_a = _tiny_c1_config(tmp_path / "a")
    cfg_b = _tiny_c1_config(tmp_path / "b")
    run_c1_study(cfg_a, threads=1)
    run_c1_study(cfg_b, threads=4)
    for name in ("c1_history.csv", "c1_width.csv"):
        a = (tmp_path / "a" / "out" / name).read_bytes()
        b = (tmp_path / "b" / "out" / name).read_bytes()
        assert a == b
    # reruns are byte identical too
    cfg_c = _tiny_c1_config(tmp_path / "c")
    run_c1_study(cfg_c, threads=8)
    assert ((tmp_path / "a" / "out" / "c1_history.csv").read_bytes()
            == (tmp_path / "c" / "out" / "c1_history.csv").read_bytes())


def test_validate_suite_passes():
    config = ExperimentConfig.from_dict({"scenario": "validate"})
    checks = run_validate(config)
    names = {c.name for c in checks}
    assert names == {"robin_halfspace_oracle", "shift_identity", "unimodularity",
                     "dtn_spectral_action", "empty_layer_singularity",
                     "farfield_order2_consistency"}
    for check in checks:
        assert check.passed, f"{check.name}: {check.detail}"


def test_validate_insensitive_to_c1_perturbation():
    # shift identity and the order-2 slope are structural: any c1 works
    wave_pairs = []
    from helmlayer import PlaneWave, effective_reflection, farfield_reflection

    wave = PlaneWave(k=1.0, theta=math.pi / 4.0)
    for c1 in (2.3, 2.4):
        pairs = [(e, abs(farfield_reflection(wave, e, 7.0, c1).value
                         - effective_reflection(2, wave, e, 7.0, c1).value))
                 for e in (0.1, 0.05, 0.025, 0.0125)]
        wave_pairs.append(fit_rate(pairs)[0])
    assert abs(wave_pairs[0] - 2.0) <= 0.1 and abs(wave_pairs[1] - 2.0) <= 0.1


def test_cli_sample_and_exit_codes(tmp_path, capsys):
    out = tmp_path / "run"
    config = {"scenario": "sample_only", "geometry": {"width": 12.0},
              "output_dir": str(out)}
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))
    assert main(["--config", str(cfg_path), "sample"]) == 0
    assert (out / "particles.csv").exists()
    assert (out / "provenance.json").exists()


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"bogus_key": 1}))
    assert main(["--config", str(bad), "sample"]) == 3
    missing = tmp_path / "missing.json"
    assert main(["--config", str(missing), "sample"]) == 3


def test_cli_seed_and_out_overrides(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "sample_only", "geometry": {"width": 12.0}}))
    assert main(["--config", str(cfg), "--seed", "5", "--out", str(out_a), "sample"]) == 0
    assert main(["--config", str(cfg), "--seed", "5", "--out", str(out_b), "sample"]) == 0
    assert ((out_a / "particles.csv").read_bytes()
            == (out_b / "particles.csv").read_bytes())
    prov = json.loads((out_a / "provenance.json").read_text())
    assert prov["master_seed"] == 5


def test_cli_corrector_profile(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "corrector_profile",
                               "geometry": {"width": 12.0},
                               "output_dir": str(tmp_path / "out")}))
    assert main(["--config", str(cfg), "corrector-profile"]) == 0
    lines = (tmp_path / "out" / "decay_profile.csv").read_text().splitlines()
    assert lines[0] == "y_d,mean_minus_c1,lateral_variance,mean_grad_sq"
    assert len(lines) > 2


def test_cli_validate_passes(tmp_path, capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 6
    assert "[FAIL]" not in out


def test_cli_reference_writes_field(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "scenario": "sweep",
        "geometry": {"h": 5.0, "delta": 0.05, "width": 12.0},
        "process": {"kind": "matern2", "rho": 0.35},
        "wave": {"k": 1.0, "theta": math.pi / 4.0},
        "epsilon_list": [0.4],
        "output_dir": str(tmp_path / "out"),
    }))
    assert main(["--config", str(cfg), "reference"]) == 0
    field_csv = tmp_path / "out" / "field_eps0.4.csv"
    assert field_csv.exists()
    assert field_csv.read_text().splitlines()[0] == "x,y,re_u,im_u"


def test_cli_report_after_run(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    out = tmp_path / "out"
    cfg.write_text(json.dumps({"scenario": "sample_only",
                               "geometry": {"width": 12.0},
                               "output_dir": str(out)}))
    assert main(["--config", str(cfg), "sample"]) == 0
    capsys.readouterr()
    assert main(["--config", str(cfg), "report"]) == 0
    assert "provenance.json" in capsys.readouterr().out


def test_cli_report_missing_dir(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"output_dir": str(tmp_path / "nope")}))
    assert main(["--config", str(cfg), "report"]) == 3


def test_default_config_document_is_valid():
    cfg = ExperimentConfig.from_dict({})
    assert cfg.raw["grid"]["target_dx"] == DEFAULT_CONFIG["grid"]["target_dx"]
