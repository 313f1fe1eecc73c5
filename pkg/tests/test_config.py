import pytest

from morphsim import config
from morphsim import experiment as ex
from morphsim.errors import ConfigInvalid

MINIMAL = """
name = "tiny"
[[vehicle.configurations]]
index = 1
nominal = [0.0123, 0.0272, 0.0381, -0.0006, 0.0010, 0.0]
[gains]
c = 0.004
[controller]
case = "known"
"""


def test_bundled_scenarios_round_trip():
    names = config.bundled_names()
    assert {"fig3", "fig5_disturbance", "case1_dwell", "mjt", "waypoint"} <= set(names)
    for name in names:
        cfg = config.load_bundled(name)
        again = config.loads(config.dumps(cfg))
        assert again == cfg


def test_minimal_defaults():
    cfg = config.loads(MINIMAL)
    assert cfg.gains.k_R == 0.0424 and cfg.integration.dt == 1e-3
    sc = cfg.build()
    assert sc.controller == "known" and sc.certificate.case == "known"


@pytest.mark.parametrize("text, path", [
    (MINIMAL + "[gains.extra]\n", "gains.extra"),
    (MINIMAL.replace("c = 0.004", 'c = "big"'), "gains.c"),
    (MINIMAL.replace("c = 0.004", "c = -1.0"), "gains.c"),
    (MINIMAL.replace('case = "known"', 'case = "psychic"'), "controller.case"),
    (MINIMAL + "[integration]\nlog_every = 0\n", "integration.log_every"),
    (MINIMAL.replace("nominal = [", "nominal = [1.0, "), "vehicle.configurations[0].nominal"),
    (MINIMAL + "[switching]\nbreakpoints = [[0.0, 1.5]]\n", "switching.breakpoints[0]"),
    (MINIMAL + '[switching]\nmode = "schedule"\n', "switching.mode"),
    (MINIMAL + "[gains]\n", None),
])
def test_invalid_documents_name_the_key(text, path):
    with pytest.raises(ConfigInvalid) as info:
        config.loads(text)
    if path is not None:
        assert info.value.path == path


def test_physically_impossible_inertia_is_rejected():
    bad = MINIMAL.replace("[0.0123, 0.0272, 0.0381", "[-0.0123, 0.0272, 0.0381")
    cfg = config.loads(bad)
    with pytest.raises(ConfigInvalid) as info:
        ex.configurations(cfg)
    assert info.value.path == "vehicle.configurations[0]"


def test_seed_override(monkeypatch):
    monkeypatch.setenv(config.SEED_ENV, "42")
    assert config.loads(MINIMAL).integration.seed == 42
    monkeypatch.setenv(config.SEED_ENV, "x")
    with pytest.raises(ConfigInvalid):
        config.loads(MINIMAL)


def test_random_initial_error_uses_seed():
    cfg = config.loads(MINIMAL + "[initial]\nrandom_error_angle = 0.5\n")
    a = ex.initial_error(cfg)
    assert abs(sum(x * x for x in a) ** 0.5 - 0.5) < 1e-12
    assert (ex.initial_error(cfg) == a).all()


def test_overrides_and_missing_files(tmp_path):
    cfg = config.load_bundled("fig3").with_overrides(dt=2e-3, horizon=5)
    assert cfg.integration.dt == 2e-3 and cfg.integration.horizon == 5.0
    assert config.load_bundled("fig3").integration.dt == 1e-3
    with pytest.raises(ConfigInvalid):
        config.load(tmp_path / "nope.toml")
    with pytest.raises(ConfigInvalid):
        config.load_bundled("nope")
    p = tmp_path / "broken.toml"
    p.write_text("name = ")
    with pytest.raises(ConfigInvalid):
        config.load(p)
