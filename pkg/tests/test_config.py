import numpy as np
import pytest
import yaml

from efftemp.config import (
    ConfigError,
    PRESETS,
    config_snapshot,
    load_config,
    validate_config,
)
from efftemp.optimize import AdamConfig, LBFGSConfig


class TestDefaults:
    def test_empty_config_is_valid(self):
        cfg = validate_config(None)
        assert cfg.data["model"]["lattice"] == "chain"
        assert cfg.data["model"]["Jx"] == 1.0
        assert cfg.data["ansatz"]["kind"] == "vec"
        assert cfg.data["run"]["record_every"] == 25
        assert cfg.data["analysis"]["exclude_ground"] is True

    def test_sector_use_follows_xy_symmetry(self):
        assert validate_config(None).use_sectors()
        cfg = validate_config({"model": {"Jy": 0.7}})
        assert not cfg.use_sectors()
        forced = validate_config({"model": {"Jy": 0.7, "use_sectors": False}})
        assert not forced.use_sectors()

    def test_uniform_and_per_site_fields(self):
        cfg = validate_config({"model": {"Lx": 4, "h": 0.5}})
        assert cfg.xxz_params(cfg.lattice()).h == (0.5,) * 4
        cfg = validate_config({"model": {"Lx": 3, "pbc": False,
                                         "h": [0.1, 0.2, 0.3]}})
        assert cfg.xxz_params(cfg.lattice()).h == (0.1, 0.2, 0.3)

    def test_per_site_field_length_checked(self):
        with pytest.raises(ConfigError):
            validate_config({"model": {"Lx": 4, "h": [0.1, 0.2]}})


class TestSchemaRejections:
    def test_unknown_section_names_allowed(self):
        with pytest.raises(ConfigError) as e:
            validate_config({"modle": {}})
        assert "analysis" in str(e.value) and "run" in str(e.value)

    def test_unknown_key_names_allowed(self):
        with pytest.raises(ConfigError) as e:
            validate_config({"model": {"Jzz": 1.0}})
        assert "Jz" in str(e.value)

    def test_type_errors(self):
        with pytest.raises(ConfigError):
            validate_config({"model": {"Jz": "strong"}})
        with pytest.raises(ConfigError):
            validate_config({"run": {"steps": 1.5}})
        with pytest.raises(ConfigError):
            validate_config({"run": {"steps": True}})
        with pytest.raises(ConfigError):
            validate_config({"model": {"pbc": "yes"}})

    def test_bad_derived_values_fail_at_load(self):
        with pytest.raises(ConfigError):
            validate_config({"ansatz": {"kind": "mps"}})  # chi missing
        with pytest.raises(ConfigError):
            validate_config({"objective": {"kind": "fidelity", "target": "thermal"}})
        with pytest.raises(ConfigError):
            validate_config({"optimizer": {"kind": "sgd"}})
        with pytest.raises(ConfigError):
            validate_config({"run": {"record_every": 0}})


class TestPresets:
    def test_published_rows(self):
        rows = {
            "mps-sm-table": ("exp_halving", 3e-3, 1000, 400),
            "peps-sm-table": ("constant", 8e-3, None, 600),
            "nqs-sm-table": ("warm_then_constant", 1e-3, 200, 3500),
            "vqe-sm-table": ("exp_halving", 1e-2, 2000, 2000),
            "vec-sm-table": ("constant", 2e-3, None, 600),
        }
        assert set(PRESETS) == set(rows)
        for name, (schedule, lr0, period, steps) in rows.items():
            extra = {"ansatz": {"chi": 2, "width": 4, "depth": 2}}
            if name.startswith("peps"):
                extra["model"] = {"lattice": "square", "Lx": 2, "Ly": 2}
            cfg = validate_config(extra, preset=name)
            opt = cfg.optimizer()
            assert isinstance(opt, AdamConfig)
            assert opt.schedule.kind == schedule
            assert opt.schedule.lr0 == lr0
            if period is not None:
                assert opt.schedule.period == period
            assert cfg.data["run"]["steps"] == steps

    def test_nqs_preset_freezes_after_800(self):
        cfg = validate_config({"ansatz": {"width": 4, "depth": 2}},
                              preset="nqs-sm-table")
        assert cfg.optimizer().schedule.warm_steps == 800

    def test_explicit_values_win_over_preset(self):
        cfg = validate_config({"ansatz": {"chi": 4}, "run": {"steps": 7},
                               "optimizer": {"lr0": 9e-3}},
                              preset="mps-sm-table")
        assert cfg.data["run"]["steps"] == 7
        assert cfg.optimizer().schedule.lr0 == 9e-3
        assert cfg.optimizer().schedule.kind == "exp_halving"  # from preset

    def test_unknown_preset(self):
        with pytest.raises(ConfigError) as e:
            validate_config(None, preset="mps")
        assert "mps-sm-table" in str(e.value)


class TestObjectiveAndOptimizer:
    def test_fidelity_ites(self):
        cfg = validate_config({"objective": {"kind": "fidelity", "target": "ites",
                                             "beta": 0.5, "phase_seed": 3}})
        o = cfg.objective()
        assert (o.kind, o.target, o.beta, o.phase_seed) == ("fidelity", "ites", 0.5, 3)

    def test_energy_ignores_target_default(self):
        assert validate_config(None).objective().kind == "energy"

    def test_lbfgs(self):
        cfg = validate_config({"optimizer": {"kind": "lbfgs", "memory": 7,
                                             "max_iter": 50}})
        opt = cfg.optimizer()
        assert isinstance(opt, LBFGSConfig)
        assert opt.memory == 7 and opt.max_iter == 50
        assert opt.value_tol == 1e-22 and opt.grad_tol == 1e-22


class TestBetaGrid:
    def test_explicit_list(self):
        cfg = validate_config({"objective": {"beta_grid": [0.1, 0.5, 1.0]}})
        assert cfg.beta_grid() == [0.1, 0.5, 1.0]

    def test_range_form_hits_endpoints(self):
        cfg = validate_config({"objective": {"beta_grid":
                                             {"start": 0.1, "stop": 1.2, "step": 0.1}}})
        grid = cfg.beta_grid()
        assert grid == pytest.approx(np.arange(1, 13) * 0.1)
        assert grid[2] == 0.3  # no accumulated float drift in the grid values
        assert grid[-1] == 1.2

    def test_missing_or_bad_grid(self):
        with pytest.raises(ConfigError):
            validate_config(None).beta_grid()
        with pytest.raises(ConfigError):
            validate_config({"objective": {"beta_grid": [0.5, 0.2]}}).beta_grid()
        with pytest.raises(ConfigError):
            validate_config({"objective": {"beta_grid": [-0.1, 0.2]}}).beta_grid()
        with pytest.raises(ConfigError):
            validate_config({"objective": {"beta_grid": []}}).beta_grid()
        with pytest.raises(ConfigError):
            validate_config({"objective": {"beta_grid": {"start": 0.1}}})


class TestSnapshotAndFiles:
    def test_snapshot_round_trips(self):
        cfg = validate_config({"model": {"Lx": 6, "Jz": 0.8}})
        assert yaml.safe_load(config_snapshot(cfg)) == cfg.data

    def test_snapshot_is_stable(self):
        a = config_snapshot(validate_config({"model": {"Jz": 0.8, "Lx": 6}}))
        b = config_snapshot(validate_config({"model": {"Lx": 6, "Jz": 0.8}}))
        assert a == b

    def test_load_from_yaml_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("model:\n  Lx: 5\n  pbc: false\nrun:\n  seed: 11\n")
        cfg = load_config(path)
        assert cfg.lattice().nsites == 5
        assert cfg.data["run"]["seed"] == 11

    def test_load_with_preset(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("ansatz:\n  chi: 8\n")
        cfg = load_config(path, preset="mps-sm-table")
        assert cfg.ansatz(cfg.lattice()).chi == 8
        assert cfg.data["run"]["steps"] == 400
