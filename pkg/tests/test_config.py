import math

import pytest
from hypothesis import given, settings, strategies as st

from fbcool import config, model
from fbcool.config import ConfigError, ExperimentConfig


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    cfg = config.load(p)
    assert cfg == ExperimentConfig()
    cav, drive, fb = cfg.cavity_params, cfg.drive_params, cfg.feedback_params
    assert cav.g0 == pytest.approx(2 * math.pi * 16e6)
    assert cav.kappa == pytest.approx(2 * math.pi * 1.5e6)
    assert cav.gamma == pytest.approx(2 * math.pi * 3e6)
    assert (fb.t_int, fb.threshold, fb.u_high, fb.u_low) == (13.0, 3, 950.0, 400.0)
    assert drive.n_empty == 0.1 and drive.eta_det == 0.23
    assert drive.light_shift == pytest.approx(model.DEFAULT_LIGHT_SHIFT)


@pytest.mark.parametrize("text,key", [
    ("feedback:\n  threshold: 0\n", "feedback.threshold"),
    ("scan:\n  attenuation: [1.5]\n", "scan.attenuation"),
    ("drive:\n  eta_det: 2.0\n", "drive.eta_det"),
    ("feedback:\n  u_low_uk: 990\n", "feedback"),
    ("n_atoms: 0\n", "n_atoms"),
    ("dynamics:\n  dt_us: 0.3\n", "dynamics.dt_us"),
])
def test_validation_names_key(text, key):
    with pytest.raises(ConfigError) as err:
        config.loads(text)
    assert err.value.key.startswith(key)


def test_unknown_key_has_line():
    with pytest.raises(ConfigError) as err:
        config.loads("n_atoms: 5\ndrive:\n  n_empty: 0.2\n  colour: red\n")
    assert err.value.key == "drive.colour" and err.value.line == 4
    assert "line 4" in str(err.value)


def test_type_errors():
    with pytest.raises(ConfigError):
        config.loads("n_atoms: 2.5\n")
    with pytest.raises(ConfigError):
        config.loads("feedback:\n  enabled: 1\n")
    with pytest.raises(ConfigError):
        config.loads("drive:\n  n_empty: lots\n")
    with pytest.raises(ConfigError):
        config.loads("drive: 3\n")


def test_malformed_yaml_line():
    with pytest.raises(ConfigError) as err:
        config.loads("n_atoms: 5\ndrive:\n  n_empty: [0.1\n")
    assert err.value.line is not None


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        config.load(tmp_path / "nope.yaml")


def test_round_trip_defaults(tmp_path):
    cfg = ExperimentConfig()
    p = tmp_path / "c.yaml"
    config.dump(cfg, p)
    assert config.load(p) == cfg


@settings(max_examples=40, deadline=None)
@given(n_atoms=st.integers(1, 10_000), seed=st.integers(0, 2 ** 31),
       n_empty=st.floats(0.0, 5.0), att=st.floats(0.0, 1.0), t_int=st.sampled_from([4.0, 13.0, 32.0]),
       thr=st.integers(1, 20), u_low=st.floats(1.0, 949.0),
       powers=st.lists(st.floats(0.001, 2.0), min_size=1, max_size=6))
def test_round_trip_property(n_atoms, seed, n_empty, att, t_int, thr, u_low, powers):
    cfg = ExperimentConfig().with_values(**{
        "n_atoms": n_atoms, "master_seed": seed, "drive.n_empty": n_empty, "drive.attenuation": att,
        "feedback.t_int_us": t_int, "feedback.threshold": thr, "feedback.u_low_uk": u_low,
        "scan.n_empty": powers})
    assert config.loads(config.dumps(cfg)) == cfg


def test_with_values_unknown():
    with pytest.raises(ConfigError):
        ExperimentConfig().with_values(**{"drive.colour": 1})


def test_hash():
    a = ExperimentConfig()
    b = a.with_values(n_atoms=10, first_atom=5)
    c = a.with_values(master_seed=1)
    assert a.hash() != b.hash()
    assert a.hash(ensemble=True) == b.hash(ensemble=True)
    assert a.hash(ensemble=True) != c.hash(ensemble=True)
    assert a.hash() == ExperimentConfig().hash()
