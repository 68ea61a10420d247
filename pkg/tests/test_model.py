import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pidsim.model import (PRESET_IDS, ConfigError, Mode, ShockPulse, apply_overrides, build_preset,
                          config_digest, config_from_dict, config_to_dict, load_config,
                          shock_force, sphere_inertials, validate_config)

# closed-form 4/3 pi R^3 rho evaluated in 50-digit arithmetic (mpmath), frozen here
M_33_2 = 1.20329612229568
M_23_0 = 0.400075331809843


class TestSphereInertials:
    def test_single_granule_mass(self):
        m, inertia = sphere_inertials(7850.0, 33.2e-3)
        assert m == pytest.approx(M_33_2, rel=1e-12)
        assert m == pytest.approx(1.203, abs=1e-3)
        assert inertia == pytest.approx(0.4 * M_33_2 * 33.2e-3**2, rel=1e-12)

    def test_three_granule_mass(self):
        m, _ = sphere_inertials(7850.0, 23e-3)
        assert m == pytest.approx(M_23_0, rel=1e-12)

    def test_zero_radius(self):
        assert sphere_inertials(7850.0, 0.0) == (0.0, 0.0)

    @pytest.mark.parametrize("rho,r", [(-1.0, 0.01), (0.0, 0.01), (7850.0, -1e-3)])
    def test_rejects_bad_input(self, rho, r):
        with pytest.raises(ValueError):
            sphere_inertials(rho, r)


class TestShockForce:
    pulse = ShockPulse(5e3, 1e-3)

    def test_peak_and_sixth(self):
        assert shock_force(0.5e-3, self.pulse) == pytest.approx(5e3, rel=1e-12)
        assert shock_force(1e-3 / 6, self.pulse) == pytest.approx(2.5e3, rel=1e-12)

    def test_endpoints(self):
        assert shock_force(0.0, self.pulse) == 0.0
        assert shock_force(1e-3, self.pulse) == 0.0
        assert shock_force(1.0, self.pulse) == 0.0

    def test_vectorized(self):
        t = np.array([0.0, 0.25e-3, 0.5e-3, 2e-3])
        out = shock_force(t, self.pulse)
        np.testing.assert_allclose(out, [0.0, 5e3 / math.sqrt(2), 5e3, 0.0], atol=1e-9)

    @given(st.floats(1e-3, 1e3))
    def test_exactly_zero_after_pulse(self, t):
        assert shock_force(t, self.pulse) == 0.0

    @given(st.floats(0.0, 1e-3 - 1e-9), st.floats(1e-12, 1e-9))
    def test_continuous(self, t, h):
        # |dF/dt| <= pi F0 / t0
        a, b = shock_force(t, self.pulse), shock_force(t + h, self.pulse)
        assert abs(b - a) <= math.pi * 5e3 / 1e-3 * h * (1 + 1e-9) + 1e-9


class TestPresets:
    @pytest.mark.parametrize("pid", PRESET_IDS)
    def test_every_preset_is_valid(self, pid):
        cfg = build_preset(pid)
        assert [v for v in validate_config(cfg) if v.level == "error"] == []

    @pytest.mark.parametrize("pid", PRESET_IDS)
    def test_deterministic(self, pid):
        assert config_digest(build_preset(pid)) == config_digest(build_preset(pid))

    def test_ps_only(self):
        cfg = build_preset("ps_only")
        assert cfg.layout.count == 0
        assert cfg.ps_mass == 20.0

    @pytest.mark.parametrize("cfg_no,x_mm", [(1, 33.6), (2, 34.0), (3, 33.2)])
    def test_single_granule(self, cfg_no, x_mm):
        cfg = build_preset(f"single_g_config{cfg_no}")
        lay, box = cfg.layout, cfg.container
        assert lay.count == 1 and lay.mode is Mode.ONE_DIMENSIONAL
        assert lay.mass == 1.2
        assert cfg.ps_mass == pytest.approx(18.8, abs=1e-12)
        # d1 = 2R + 2 d0
        assert box.length == pytest.approx(2 * 33.2e-3 + 2 * 0.4e-3, rel=1e-12)
        assert lay.initial_centers[0][0] == pytest.approx(x_mm * 1e-3, rel=1e-12)

    @pytest.mark.parametrize("cfg_no", range(1, 7))
    def test_two_granules_gap_budget(self, cfg_no):
        cfg = build_preset(f"two_g_config{cfg_no}")
        R = cfg.layout.radius
        (x1, _), (x2, _) = cfg.layout.initial_centers
        gaps = (x1 - R, x2 - x1 - 2 * R, cfg.container.length - x2 - R)
        assert min(gaps) >= -1e-12
        assert sum(gaps) == pytest.approx(6e-3, abs=1e-12)
        assert cfg.ps_mass == pytest.approx(18.8, abs=1e-12)

    @pytest.mark.parametrize("pid,count,mass", [
        ("three_g_optimal", 3, 0.4), ("five_g_optimal", 5, 0.24), ("eight_g_optimal", 8, 0.15)])
    def test_multi_granule(self, pid, count, mass):
        cfg = build_preset(pid)
        lay = cfg.layout
        assert lay.count == count and lay.mode is Mode.TWO_DIMENSIONAL
        assert lay.mass == mass
        assert cfg.granule_mass_total == pytest.approx(1.2, abs=1e-12)
        assert cfg.ps_mass == pytest.approx(18.8, abs=1e-12)
        top = max(y for _, y in lay.initial_centers)
        assert cfg.container.height - top - lay.radius == pytest.approx(cfg.container.ceiling_gap)

    def test_mass_ratio(self):
        for pid in PRESET_IDS[1:]:
            cfg = build_preset(pid)
            assert cfg.granule_mass_total / cfg.ps.total_mass == pytest.approx(0.06, abs=1e-12)

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            build_preset("nine_g_optimal")


class TestValidation:
    def test_does_not_fit(self):
        with pytest.raises(ConfigError) as exc:
            build_preset("single_g_config1", {"container.length": 0.05})
        codes = {v.code for v in exc.value.violations}
        assert "layout.does_not_fit" in codes

    def test_overlap(self):
        with pytest.raises(ConfigError):
            build_preset("two_g_config1", {"layout.initial_centers": [[0.03, 0.0263], [0.05, 0.0263]]})

    def test_density_mismatch_is_a_warning(self):
        cfg = build_preset("single_g_config1", {"layout.mass": 1.5})
        warnings = [v for v in validate_config(cfg) if v.level == "warning"]
        assert [w.code for w in warnings] == ["layout.density_mismatch"]

    def test_nominal_masses_do_not_warn(self):
        # 1.203 vs 1.2 kg is inside the 1% allowance
        assert validate_config(build_preset("single_g_config1")) == []

    @pytest.mark.parametrize("key,value", [
        ("ps.damping", 0.0), ("ps.stiffness", -1.0), ("shock.duration", 0.0),
        ("integrator.dt_contact", 1e-4), ("material.poissons_ratio", 0.5),
        ("layout.mass", 25.0)])
    def test_invariants(self, key, value):
        with pytest.raises(ConfigError):
            build_preset("single_g_config1", {key: value})

    def test_one_d_needs_common_height(self):
        with pytest.raises(ConfigError):
            build_preset("two_g_config1", {"layout.initial_centers": [[0.0263, 0.0263], [0.09, 0.02]]})


class TestOverrides:
    def test_dotted_and_nested_agree(self):
        a = build_preset("three_g_optimal", {"shock.amplitude": 100.0})
        b = build_preset("three_g_optimal", {"shock": {"amplitude": 100}})
        assert a == b
        assert a.shock.amplitude == 100.0

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            apply_overrides(build_preset("ps_only"), {"shock.amplitud": 1.0})

    def test_integer_field(self):
        with pytest.raises(ConfigError):
            apply_overrides(build_preset("ps_only"), {"integrator.ramp_steps": 2.5})


class TestSerialization:
    @pytest.mark.parametrize("pid", PRESET_IDS)
    def test_round_trip(self, pid):
        cfg = build_preset(pid)
        doc = json.loads(json.dumps(config_to_dict(cfg)))
        assert config_from_dict(doc) == cfg

    def test_load_preset_document(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"preset": "single_g_config2", "overrides": {"shock.amplitude": 100}}))
        cfg = load_config(path)
        assert cfg == build_preset("single_g_config2", {"shock.amplitude": 100.0})

    def test_malformed(self):
        with pytest.raises(ConfigError):
            config_from_dict({"layout": {}})

    def test_digest_changes_with_parameters(self):
        a = build_preset("ps_only")
        b = build_preset("ps_only", {"shock.amplitude": 100.0})
        assert config_digest(a) != config_digest(b)
        assert len(config_digest(a)) == 64

    @settings(max_examples=25)
    @given(st.floats(1.0, 1e4), st.floats(1e-4, 1e-2))
    def test_round_trip_property(self, f0, t0):
        cfg = build_preset("five_g_optimal", {"shock.amplitude": f0, "shock.duration": t0})
        assert config_from_dict(json.loads(json.dumps(config_to_dict(cfg)))) == cfg
