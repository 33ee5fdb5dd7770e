import json

import numpy as np
import pytest

from chaotic_planck.config import RunConfig, build_state, harmonic_split, parse_override
from chaotic_planck.errors import ConfigError


def test_roundtrip_identity():
    cfg = RunConfig(system="ladder", levels=4, seed=7, sweep_values=[1.0, 2.0, 3.0])
    again = RunConfig.from_dict(json.loads(cfg.dumps()))
    assert again == cfg
    assert json.loads(cfg.dumps())["schema_version"] == 1


def test_config_is_flat():
    for v in RunConfig().to_dict().values():
        assert not isinstance(v, dict)


@pytest.mark.parametrize("bad", [
    {"nonsense": 1},
    {"system": "spin_glass"},
    {"sigma": -0.1},
    {"tau_lambda": 0.0},
    {"n_samples": 0},
    {"n_samples": 2.5},
    {"seed": -1},
    {"sigma": "big"},
    {"sweep_values": [1.0, 2.0]},
    {"schema_version": 99},
    {"system": "matrix"},
    {"mode": "SCALED_KINETIC"},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_integral_floats_coerced():
    cfg = RunConfig.from_dict({"n_samples": 100.0, "omega": 3})
    assert cfg.n_samples == 100 and isinstance(cfg.omega, float)


def test_overrides_and_parse():
    assert parse_override("sigma=0.2") == ("sigma", 0.2)
    assert parse_override("system=ladder") == ("system", "ladder")
    assert parse_override("element=[0,2]") == ("element", [0, 2])
    with pytest.raises(ConfigError):
        parse_override("sigma")
    cfg = RunConfig().with_overrides({"sigma": 0.3})
    assert cfg.sigma == 0.3 and RunConfig().sigma == 0.1


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(bad)
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.json")
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        RunConfig.load(arr)


def test_hamiltonians():
    spec = RunConfig(mu=np.log(2.0), omega=3.0).hamiltonian_spec()
    np.testing.assert_allclose(np.diag(spec.base.elements).real, [0.0, 6.0])
    ladder = RunConfig(system="ladder", levels=3).hamiltonian_spec()
    np.testing.assert_allclose(np.diag(ladder.base.elements).real, [0.0, 5.0, 10.0])
    a = RunConfig(system="random", random_dim=5, random_seed=3).hamiltonian_spec().base.elements
    b = RunConfig(system="random", random_dim=5, random_seed=3).hamiltonian_spec().base.elements
    np.testing.assert_array_equal(a, b)


def test_matrix_file(tmp_path):
    path = tmp_path / "h.json"
    path.write_text(json.dumps({"re": [[0, 1], [1, 0]], "im": [[0, 0], [0, 0]]}))
    spec = RunConfig(system="matrix", matrix_file=str(path)).hamiltonian_spec()
    np.testing.assert_allclose(spec.base.elements, [[0, 1], [1, 0]])
    np.save(tmp_path / "h.npy", np.diag([1.0, 2.0]))
    spec = RunConfig(system="matrix", matrix_file=str(tmp_path / "h.npy")).hamiltonian_spec()
    np.testing.assert_allclose(spec.base.elements, np.diag([1.0, 2.0]))


def test_harmonic_split_spectrum():
    kin, pot = harmonic_split(40, 1.0, 2.0)
    e = np.linalg.eigvalsh(kin.elements + pot.elements)
    # truncation only spoils the top of the ladder
    np.testing.assert_allclose(e[:10], 2.0 * (np.arange(10) + 0.5), atol=1e-8)


def test_initial_states():
    spec = RunConfig(system="ladder", levels=3).hamiltonian_spec()
    np.testing.assert_allclose(build_state("uniform", spec).amplitudes, np.ones(3) / np.sqrt(3))
    np.testing.assert_allclose(build_state("basis:2", spec).amplitudes, [0, 0, 1])
    np.testing.assert_allclose(np.abs(build_state([[0, 1], 0, 0], spec).amplitudes), [1, 0, 0])
    for bad in ("basis:3", "eigen:x", [0, 0, 0], [1, 2]):
        with pytest.raises(ConfigError):
            build_state(bad, spec)
