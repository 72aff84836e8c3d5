import csv
import json
from decimal import Decimal
from pathlib import Path

import pytest

from semigibbs import cli
from semigibbs.cli import main
from semigibbs.config import ExperimentConfig
from semigibbs.errors import ConfigError, SemigibbsError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
seed = 3
beta = 1.0

[model]
d = 1
h0 = { "1" = 1.0 }

[sweep]
eps = [0.5, 0.25, 0.125]
moments = [2]

[recovery]
center = [0.3, 0.0]
s = 0.5
eps = [0.5, 0.25]

[lattice]
delta = 1.0
M = [1, 2]
sigma = 0.5

[free_energy]
beta_state = 0.5

[invariants]
n_random = 5

[output]
dir = "unused"
prefix = "small"
"""


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# config -----------------------------------------------------------------------


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.toml")):
        cfg = ExperimentConfig.load(path)
        assert cfg.symbol().d == cfg.d


def test_parse_decimal_and_sweep():
    cfg = ExperimentConfig.from_toml(SMALL)
    assert cfg.eps_list == [Decimal("0.5"), Decimal("0.25"), Decimal("0.125")]
    assert cfg.beta_state == Decimal("0.5")
    k = ExperimentConfig.from_toml('[model]\nh0 = { "1" = 1.0 }\n[sweep]\nk_min = 3\nk_max = 5\n')
    assert k.floats(k.eps_list) == [0.125, 0.0625, 0.03125]
    assert k.recovery_center == [Decimal("0.3")]


def test_two_mode_default_center():
    cfg = ExperimentConfig.from_toml('[model]\nd = 2\nh0 = { "1" = 1.0 }\n')
    assert cfg.center().shape == (2,)


@pytest.mark.parametrize("text", [
    "beta = 1.0\n",  # no model
    '[model]\nh0 = { "1" = 1.0 }\n[bogus]\nx = 1\n',
    '[model]\nh0 = { "1" = -1.0 }\n',
    '[model]\nh0 = { "1" = 1.0 }\n[sweep]\neps = [0.1, 0.2]\n',
    '[model]\nh0 = { "1" = 1.0 }\n[sweep]\neps = [0.0]\n',
    '[model]\nh0 = { "x" = 1.0 }\n',
    'beta = -1.0\n[model]\nh0 = { "1" = 1.0 }\n',
    'beta = "hot"\n[model]\nh0 = { "1" = 1.0 }\n',
    '[model]\nh0 = { "1" = 1.0 }\n[recovery]\ncenter = [0.1, 0.2, 0.3]\n',
    '[model]\nh0 = { "1" = 1.0 }\n[lattice]\ndelta = -1.0\n',
    '[model\nh0 = 1',
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_toml(text)


def test_canonical_roundtrip_and_hash():
    cfg = ExperimentConfig.load(CONFIGS / "two_modes.toml")
    back = ExperimentConfig.from_canonical_json(cfg.canonical_json())
    assert back.canonical_json() == cfg.canonical_json()
    assert back.config_hash() == cfg.config_hash()
    assert len(cfg.config_hash()) == 64
    other = ExperimentConfig.from_toml(SMALL.replace("seed = 3", "seed = 4"))
    assert other.config_hash() != ExperimentConfig.from_toml(SMALL).config_hash()


def test_canonical_json_keeps_decimal_text():
    cfg = ExperimentConfig.from_toml(SMALL)
    raw = json.loads(cfg.canonical_json())
    assert raw["sweep"]["eps"] == ["0.5", "0.25", "0.125"]
    assert raw["output"] == {"dir": "unused", "prefix": "small"}


# cli ----------------------------------------------------------------------------


def test_dry_run(small, capsys):
    assert main(["partition", str(small), "--dry-run"]) == 0
    assert capsys.readouterr().out.startswith("config ok")


def test_bad_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('[model]\nh0 = { "1" = 0.0 }\n')
    assert main(["partition", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["partition", str(tmp_path / "missing.toml")]) == 2


def test_lattice_needs_one_mode(tmp_path):
    cfg = tmp_path / "two.toml"
    cfg.write_text('[model]\nd = 2\nh0 = { "1" = 1.0 }\n')
    assert main(["lattice-divergence", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists() or not any((tmp_path / "o").iterdir())


def test_computation_failure_exit_1(tmp_path, capsys):
    cfg = tmp_path / "tiny.toml"
    cfg.write_text('[model]\nh0 = { "1" = 1.0 }\n[sweep]\neps = [1e-7]\n')
    out = tmp_path / "o"
    assert main(["partition", str(cfg), "--out", str(out)]) == 1
    err = capsys.readouterr().err
    assert "ResourceError" in err and "free_energy" in err
    assert not out.exists() or not any(out.iterdir())


def test_threads_env(small, tmp_path, monkeypatch):
    monkeypatch.setenv("SEMIGIBBS_THREADS", "zero")
    assert main(["partition", str(small), "--out", str(tmp_path)]) == 2
    monkeypatch.setenv("SEMIGIBBS_THREADS", "0")
    assert main(["partition", str(small), "--out", str(tmp_path)]) == 2
    monkeypatch.setenv("SEMIGIBBS_THREADS", "1")
    assert main(["partition", str(small), "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "small_partition.json").read_text())
    assert manifest["threads"] == 1


def test_partition_outputs(small, tmp_path, capsys):
    assert main(["partition", str(small), "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out.split()
    assert sorted(Path(p).name for p in printed) == ["small_partition.csv", "small_partition.json"]
    rows = read_csv(tmp_path / "small_partition.csv")
    assert [float(r["eps"]) for r in rows] == [0.5, 0.25, 0.125]
    errs = [float(r["err"]) for r in rows]
    assert errs[-1] < errs[0]
    manifest = json.loads((tmp_path / "small_partition.json").read_text())
    assert manifest["config_hash"] == ExperimentConfig.from_toml(SMALL).config_hash()
    assert manifest["rows"] == 3
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_atomic_on_failure(small, tmp_path, monkeypatch):
    def boom(cfg):
        raise SemigibbsError("synthetic failure")

    monkeypatch.setitem(cli.RUNNERS, "partition", boom)
    out = tmp_path / "out"
    assert main(["partition", str(small), "--out", str(out)]) == 1
    assert not out.exists() or list(out.iterdir()) == []


def test_atomic_when_second_artifact_fails(small, tmp_path, monkeypatch):
    real_add = cli.Staging.add

    def add(self, name, text):
        if name.endswith(".json"):
            raise OSError("disk full")
        real_add(self, name, text)

    monkeypatch.setattr(cli.Staging, "add", add)
    out = tmp_path / "out"
    with pytest.raises(OSError):
        main(["partition", str(small), "--out", str(out)])
    assert list(out.iterdir()) == []


def test_deterministic_bytes(small, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gamma-upper", str(small), "--out", str(a)]) == 0
    assert main(["gamma-upper", str(small), "--out", str(b)]) == 0
    for name in ("small_gamma_upper.csv", "small_gamma_upper.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_entropy_convergence_errors_shrink(small, tmp_path):
    assert main(["entropy-convergence", str(small), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "small_entropy_convergence.csv")
    assert "A_norm_2" in rows[0]
    for key in ("err_vN", "err_W"):
        assert float(rows[-1][key]) < float(rows[0][key])


def test_free_energy_and_lattice_and_invariants(small, tmp_path):
    assert main(["free-energy", str(small), "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "small_free_energy.json").read_text())
    assert len(manifest["results"]["gamma_lower"]) == 3
    assert main(["lattice-divergence", str(small), "--out", str(tmp_path)]) == 0
    lat = json.loads((tmp_path / "small_lattice_divergence.json").read_text())
    assert lat["results"]["expected_slope"] == pytest.approx(2 * 0.6931471805599453)
    assert main(["check-invariants", str(small), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "small_check_invariants.csv")
    assert all(r["passed"] == "true" for r in rows)
