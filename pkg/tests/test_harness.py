import json

import numpy as np
import pytest

import nlspair as nl
from nlspair.cli import main
from nlspair.errors import CheckpointError, ConfigError
from nlspair.harness import (
    ExperimentConfig,
    SIMULATE_PRESETS,
    data_size_report,
    generate_initial_data,
    get_simulate_preset,
    load_checkpoint,
    load_config,
    persist_checkpoint,
    run_simulate,
    write_csv,
)
from nlspair.spectral import l2_norm


@pytest.fixture()
def grid():
    return nl.make_grid(256, 200.0)


def tiny_config_dict(t_end=120.0):
    return {
        "name": "tiny",
        "seed": 11,
        "solver": {
            "n_points": 256,
            "length": 400.0,
            "t_start": 0.0,
            "t_end": t_end,
            "checkpoint_times": [0.0] + list(np.geomspace(2.0, t_end, 20)),
        },
        "data1": {"kind": "gaussian", "amp": 0.08, "width": 4.0},
        "data2": {"kind": "gaussian", "amp": 0.05, "width": 5.0},
        "save_checkpoints": True,
    }


class TestInitialData:
    def test_copy_is_exactly_symmetric(self, grid):
        pair = generate_initial_data({"kind": "gaussian", "amp": 0.1, "width": 4.0},
                                     {"kind": "copy"}, grid, seed=3)
        assert np.array_equal(pair.u1.values, pair.u2.values)

    def test_mass_asymmetry_gives_positive_difference(self, grid):
        # 2:1 mass ratio guarantees a nonvanishing limit for one component
        pair = generate_initial_data(
            {"kind": "gaussian", "amp": 0.1, "width": 4.0},
            {"kind": "gaussian", "amp": 0.1 / np.sqrt(2.0), "width": 4.0},
            grid, seed=3)
        m1 = l2_norm(pair.u1) ** 2
        m2 = l2_norm(pair.u2) ** 2
        assert m1 == pytest.approx(2.0 * m2, rel=1e-12)
        assert m1 - m2 > 0

    def test_same_seed_bitwise_identical(self, grid):
        spec1 = {"kind": "random", "amp": 0.1, "band": 1.0}
        spec2 = {"kind": "random", "amp": 0.05, "band": 0.5}
        a = generate_initial_data(spec1, spec2, grid, seed=42)
        b = generate_initial_data(spec1, spec2, grid, seed=42)
        assert np.array_equal(a.u1.values, b.u1.values)
        assert np.array_equal(a.u2.values, b.u2.values)
        c = generate_initial_data(spec1, spec2, grid, seed=43)
        assert not np.array_equal(a.u1.values, c.u1.values)

    def test_modulated_gaussian(self, grid):
        pair = generate_initial_data(
            {"kind": "gaussian", "amp": 0.1, "width": 4.0, "velocity": 0.3},
            {"kind": "copy"}, grid, seed=0)
        spec = nl.forward_transform(pair.u1)
        peak = grid.xi[np.argmax(np.abs(spec.values))]
        assert peak == pytest.approx(0.3, abs=2 * grid.dxi)

    def test_unknown_kind_rejected(self, grid):
        with pytest.raises(ConfigError):
            generate_initial_data({"kind": "sinc", "amp": 1.0}, {"kind": "copy"},
                                  grid, seed=0)

    def test_unknown_key_rejected(self, grid):
        with pytest.raises(ConfigError):
            generate_initial_data({"kind": "gaussian", "amp": 1.0, "width": 1.0,
                                   "wdith": 2.0}, {"kind": "copy"}, grid, seed=0)

    def test_size_report(self, grid):
        pair = generate_initial_data({"kind": "gaussian", "amp": 0.1, "width": 4.0},
                                     {"kind": "copy"}, grid, seed=0)
        rep = data_size_report(pair)
        assert rep["l2"] > 0 and rep["h2"] > 0 and rep["h1_1"] > 0


class TestCheckpointFormat:
    def _pair(self, grid):
        rng = np.random.default_rng(5)
        n = grid.n_points
        return nl.FieldPair(
            nl.ComplexField(grid, rng.standard_normal(n) + 1j * rng.standard_normal(n), 3.5),
            nl.ComplexField(grid, rng.standard_normal(n) + 1j * rng.standard_normal(n), 3.5),
        )

    def test_round_trip_bitwise(self, grid, tmp_path):
        pair = self._pair(grid)
        path = tmp_path / "cp.bin"
        persist_checkpoint(pair, path)
        back = load_checkpoint(path)
        assert back.grid == grid
        assert back.time == 3.5
        assert np.array_equal(back.u1.values, pair.u1.values)
        assert np.array_equal(back.u2.values, pair.u2.values)

    def test_version_mismatch_rejected(self, grid, tmp_path):
        path = tmp_path / "cp.bin"
        persist_checkpoint(self._pair(grid), path)
        raw = bytearray(path.read_bytes())
        raw[8] = 99   # version field
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_bad_magic_rejected(self, grid, tmp_path):
        path = tmp_path / "cp.bin"
        path.write_bytes(b"NOTACKPT" + bytes(100))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_truncated_payload_rejected(self, grid, tmp_path):
        path = tmp_path / "cp.bin"
        persist_checkpoint(self._pair(grid), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-16])
        with pytest.raises(CheckpointError, match="payload"):
            load_checkpoint(path)


class TestExperimentConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig.from_dict(tiny_config_dict())
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again.config_hash() == cfg.config_hash()

    def test_unknown_top_level_key(self):
        d = tiny_config_dict()
        d["extra"] = 1
        with pytest.raises(ConfigError, match="unknown keys"):
            ExperimentConfig.from_dict(d)

    def test_unknown_solver_key(self):
        d = tiny_config_dict()
        d["solver"]["dt"] = 0.1
        with pytest.raises(ConfigError, match="unknown keys"):
            ExperimentConfig.from_dict(d)

    def test_seed_mandatory(self):
        d = tiny_config_dict()
        del d["seed"]
        with pytest.raises(ConfigError, match="seed"):
            ExperimentConfig.from_dict(d)

    def test_presets_construct(self):
        for name in SIMULATE_PRESETS:
            cfg = get_simulate_preset(name)
            assert cfg.name == name
        with pytest.raises(ConfigError):
            get_simulate_preset("not-a-preset")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")


class TestCsv:
    def test_schema_line_and_float_formatting(self, tmp_path):
        path = write_csv(tmp_path / "x.csv", "demo", ["a", "b"],
                         [(1.0 / 3.0, 1), (0.1, 2)])
        lines = path.read_text().splitlines()
        assert lines[0] == "# schema=nlspair.demo.v1"
        assert lines[1] == "a,b"
        assert lines[2].split(",")[0] == repr(1.0 / 3.0)


class TestPipelines:
    def test_simulate_pipeline_and_rerun_determinism(self, tmp_path):
        cfg = ExperimentConfig.from_dict(tiny_config_dict())
        res1 = run_simulate(cfg, tmp_path / "a")
        res2 = run_simulate(cfg, tmp_path / "b")
        for name in ("mass_ledger.csv", "profiles.csv", "decoupling.csv",
                     "remainder.csv"):
            assert (tmp_path / "a" / name).read_bytes() == \
                   (tmp_path / "b" / name).read_bytes()
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert manifest["status"] == "ok"
        listed = set(manifest["outputs"])
        on_disk = {p.relative_to(tmp_path / "a").as_posix()
                   for p in (tmp_path / "a").rglob("*") if p.is_file()}
        assert listed == on_disk
        assert len(res1["trajectory"].checkpoints) == 21

    def test_cli_missing_config_exit_2(self, tmp_path):
        rc = main(["simulate", "--config", str(tmp_path / "missing.json"),
                   "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_cli_simulate_and_analyze(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(tiny_config_dict()))
        rc = main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        assert rc == 0
        assert (tmp_path / "o" / "profiles.csv").exists()
        assert (tmp_path / "o" / "checkpoints" / "cp_0000.bin").exists()
        rc = main(["analyze", "--out", str(tmp_path / "o")])
        assert rc == 0

    def test_cli_lemmas(self, tmp_path):
        rc = main(["lemmas", "--out", str(tmp_path / "lem")])
        assert rc == 0
        text = (tmp_path / "lem" / "lemma_certificates.csv").read_text()
        assert "True" in text and "False" not in text

    def test_cli_seed_override(self, tmp_path):
        d = tiny_config_dict()
        d["data1"] = {"kind": "random", "amp": 0.05, "band": 0.8}
        d["solver"]["t_end"] = 110.0
        d["solver"]["checkpoint_times"] = [0.0] + list(np.geomspace(2.0, 110.0, 16))
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(d))
        assert main(["simulate", "--config", str(cfg_path), "--out",
                     str(tmp_path / "s1"), "--seed", "7"]) == 0
        assert main(["simulate", "--config", str(cfg_path), "--out",
                     str(tmp_path / "s2"), "--seed", "8"]) == 0
        a = (tmp_path / "s1" / "mass_ledger.csv").read_bytes()
        b = (tmp_path / "s2" / "mass_ledger.csv").read_bytes()
        assert a != b
