import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import jostled_states
from pidsim.contact import (WALL, Contact, ContactKind, Wall, contact_forces,
                            contact_potential_energy, detect_contacts, effective_params,
                            normal_contact_force, normal_magnitude, pair_params,
                            tangential_friction_force)
from pidsim.dynamics import SystemState, derivatives
from pidsim.model import MaterialParams, Mode, build_preset, shock_force

STEEL = MaterialParams()
# E/(2(1-nu^2)) and 4/3 E_eff sqrt(R/2) for R = 23 mm, evaluated in mpmath
E_EFF = 109890109890.11
A_23 = 15712535230.4229


def _wall_contact(delta, rate=0.0, slip=0.0, wall=Wall.RIGHT):
    normals = {Wall.LEFT: (-1.0, 0.0), Wall.RIGHT: (1.0, 0.0), Wall.FLOOR: (0.0, -1.0),
               Wall.CEILING: (0.0, 1.0)}
    n = normals[wall]
    return Contact(ContactKind.GRANULE_WALL, 0, wall, delta, rate, n, (-n[1], n[0]), slip)


class TestEffectiveParams:
    def test_steel_pair(self):
        p = effective_params(23e-3, 23e-3, 0.4, 0.4, STEEL)
        assert p.e_eff == pytest.approx(E_EFF, rel=1e-12)
        assert p.r_eff == pytest.approx(11.5e-3, rel=1e-12)
        assert p.m_eff == pytest.approx(0.2, rel=1e-12)
        assert p.hertz_coeff == pytest.approx(A_23, rel=1e-12)
        assert p.hertz_coeff == pytest.approx(1.571e10, rel=1e-3)

    def test_wall_is_an_identical_granule(self):
        assert effective_params(23e-3, WALL, 0.4, WALL, STEEL) == \
            effective_params(23e-3, 23e-3, 0.4, 0.4, STEEL)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            effective_params(0.0, 0.01, 1.0, 1.0, STEEL)

    @given(st.floats(1e-3, 0.1), st.floats(1e-3, 0.1), st.floats(0.01, 5), st.floats(0.01, 5))
    def test_symmetric(self, ra, rb, ma, mb):
        assert effective_params(ra, rb, ma, mb, STEEL) == effective_params(rb, ra, mb, ma, STEEL)


class TestNormalForce:
    p = effective_params(23e-3, WALL, 0.4, WALL, STEEL)
    undamped = MaterialParams(damping_alpha=0.0)

    def test_one_micron(self):
        f = normal_contact_force(_wall_contact(1e-6), self.p, self.undamped)
        # A * (1e-6)^1.5, pointing back into the container
        assert f[0] == pytest.approx(-A_23 * 1e-9, rel=1e-12)
        assert abs(f[0]) == pytest.approx(15.71, rel=1e-3)
        assert f[1] == 0.0

    def test_three_halves_power(self):
        a = normal_magnitude(_wall_contact(1e-6), self.p, self.undamped)
        b = normal_magnitude(_wall_contact(2e-6), self.p, self.undamped)
        assert b / a == pytest.approx(2**1.5, rel=1e-12)

    def test_separated_is_zero(self):
        assert normal_magnitude(_wall_contact(0.0, rate=5.0), self.p, STEEL) == 0.0
        assert normal_magnitude(_wall_contact(-1e-6, rate=5.0), self.p, STEEL) == 0.0

    def test_damping_coefficient(self):
        delta, rate = 4e-6, 0.3
        got = normal_magnitude(_wall_contact(delta, rate), self.p, STEEL) \
            - normal_magnitude(_wall_contact(delta), self.p, STEEL)
        gamma = 6.313e-3 * math.sqrt(0.2 * A_23) * delta**0.25
        assert got == pytest.approx(gamma * rate, rel=1e-12)

    def test_clamp(self):
        c = _wall_contact(1e-8, rate=-5.0)
        assert normal_magnitude(c, self.p, STEEL) < 0
        assert normal_magnitude(c, self.p, STEEL, clamp=True) == 0.0

    @settings(max_examples=20)
    @given(st.floats(1e-8, 1e-4))
    def test_elastic_part_is_conservative(self, dmax):
        # work of A d^1.5 from 0 to dmax equals the stored (2/5) A d^2.5
        work, _ = quad(lambda d: self.p.hertz_coeff * d**1.5, 0.0, dmax, epsabs=0, epsrel=1e-12)
        stored, _ = contact_potential_energy(_wall_contact(dmax), self.p)
        assert stored == pytest.approx(work, rel=1e-9)


class TestFriction:
    p = effective_params(23e-3, WALL, 0.4, WALL, STEEL)

    def test_saturation(self):
        # k_s * slip = 3 -> tanh(3) = 0.99505 of mu |N|
        c = _wall_contact(1e-6, slip=3.0 / 250.0, wall=Wall.FLOOR)
        normal = normal_contact_force(c, self.p, STEEL)
        f, _, _ = tangential_friction_force(c, normal, STEEL, 23e-3)
        assert np.linalg.norm(f) == pytest.approx(0.099 * np.linalg.norm(normal) * 0.99505475368673,
                                                  rel=1e-12)
        # opposes the slip direction
        assert f @ np.asarray(c.tangent) < 0

    def test_zero_in_one_dimension(self):
        c = _wall_contact(1e-6, slip=1.0, wall=Wall.FLOOR)
        normal = normal_contact_force(c, self.p, STEEL)
        f, ti, tj = tangential_friction_force(c, normal, STEEL, 23e-3, mode=Mode.ONE_DIMENSIONAL)
        assert not f.any() and ti == 0.0 and tj == 0.0

    @given(st.floats(1e-9, 1e-4), st.floats(-10, 10), st.floats(-100, 100))
    def test_bounded_by_coulomb(self, delta, rate, slip):
        c = _wall_contact(delta, rate=rate, slip=slip, wall=Wall.FLOOR)
        normal = normal_contact_force(c, self.p, STEEL)
        f, _, _ = tangential_friction_force(c, normal, STEEL, 23e-3)
        assert np.linalg.norm(f) <= 0.099 * np.linalg.norm(normal) * (1 + 1e-12)


class TestPotential:
    def test_wall_contact_all_to_granule(self):
        p = effective_params(23e-3, WALL, 0.4, WALL, STEEL)
        a, b = contact_potential_energy(_wall_contact(1e-6), p)
        assert a == pytest.approx(0.4 * A_23 * 1e-15, rel=1e-12)
        assert a == pytest.approx(6.285e-6, rel=1e-3)
        assert b == 0.0

    def test_pair_split_evenly(self):
        p = effective_params(23e-3, 23e-3, 0.4, 0.4, STEEL)
        c = Contact(ContactKind.GRANULE_GRANULE, 0, 1, 1e-6, 0.0, (1.0, 0.0), (0.0, 1.0), 0.0)
        a, b = contact_potential_energy(c, p)
        assert a == b == pytest.approx(0.2 * A_23 * 1e-15, rel=1e-12)


def _brute_force_overlaps(state, cfg):
    R = cfg.layout.radius
    found = {}
    n = state.count
    for i in range(n):
        for j in range(n):
            if i < j:
                d = math.dist(state.positions[i], state.positions[j])
                if 2 * R - d > 0:
                    found[(i, j)] = 2 * R - d
        x, y = state.positions[i]
        walls = {Wall.LEFT: state.z - (x - R), Wall.RIGHT: (x + R) - (state.z + cfg.container.length)}
        if cfg.layout.mode is Mode.TWO_DIMENSIONAL:
            walls[Wall.FLOOR] = R - y
            walls[Wall.CEILING] = y + R - cfg.container.height
        for w, d in walls.items():
            if d > 0:
                found[(i, w)] = d
    return found


class TestDetection:
    @settings(max_examples=40, deadline=None)
    @given(jostled_states())
    def test_matches_brute_force_2d(self, case):
        cfg, state = case
        got = {(c.i, c.partner): c.penetration for c in detect_contacts(state, cfg)}
        want = _brute_force_overlaps(state, cfg)
        assert got.keys() == want.keys()
        for k in want:
            assert got[k] == pytest.approx(want[k], rel=1e-9, abs=1e-15)

    @settings(max_examples=20, deadline=None)
    @given(jostled_states("two_g_config4", jitter=4e-3))
    def test_matches_brute_force_1d(self, case):
        cfg, state = case
        got = {(c.i, c.partner) for c in detect_contacts(state, cfg)}
        assert got == set(_brute_force_overlaps(state, cfg))

    def test_right_wall_follows_ps(self):
        cfg = build_preset("single_g_config1")
        R, d1 = cfg.layout.radius, cfg.container.length
        z = 0.7e-3
        state = SystemState(0.0, z, 0.2, np.array([[z + d1 - R + 2e-6, 0.0]]),
                            np.array([[0.5, 0.0]]), np.zeros(1), np.zeros(1))
        (c,) = detect_contacts(state, cfg)
        assert c.partner is Wall.RIGHT
        assert c.penetration == pytest.approx(2e-6, rel=1e-6)
        assert c.normal == (1.0, 0.0)
        # approach speed relative to the moving wall
        assert c.penetration_rate == pytest.approx(0.3, rel=1e-12)


class TestNewtonsThirdLaw:
    @settings(max_examples=40, deadline=None)
    @given(jostled_states())
    def test_internal_forces_cancel(self, case):
        """x-momentum rate of PS plus granules equals the external force alone."""
        cfg, state = case
        d = derivatives(state, cfg)
        assert d.contacts, "strategy should produce contacts"
        lay = cfg.layout
        rate = cfg.ps_mass * d.zddot + lay.mass * d.accelerations[:, 0].sum()
        external = (shock_force(state.time, cfg.shock) - cfg.ps.damping * state.zdot
                    - cfg.ps.stiffness * state.z)
        scale = sum(np.abs(f.normal_force).sum() + np.abs(f.tangential_force).sum() for f in d.forces)
        assert abs(rate - external) <= 1e-13 * max(scale, 1.0)

    @settings(max_examples=40, deadline=None)
    @given(jostled_states())
    def test_pair_forces_cancel_in_y(self, case):
        cfg, state = case
        d = derivatives(state, cfg)
        wall_y = sum(float(f.normal_force[1] + f.tangential_force[1])
                     for c, f in zip(d.contacts, d.forces) if c.kind is ContactKind.GRANULE_WALL)
        total_y = cfg.layout.mass * d.accelerations[:, 1].sum()
        scale = sum(np.abs(f.normal_force).sum() for f in d.forces)
        assert abs(total_y - wall_y) <= 1e-13 * max(scale, 1.0)

    @settings(max_examples=30, deadline=None)
    @given(jostled_states())
    def test_viscous_power_equals_contact_dissipation(self, case):
        """Work rate of the damping forces on both bodies equals minus the per-contact
        dissipation, wall motion included."""
        cfg, state = case
        params = pair_params(cfg)
        undamped = replace(cfg, material=replace(cfg.material, damping_alpha=0.0))
        for c in detect_contacts(state, cfg):
            full = contact_forces(c, params, cfg)
            elastic = contact_forces(c, params, undamped)
            f_vis = full.normal_force - elastic.normal_force
            v_i = state.velocities[c.i]
            v_j = state.velocities[c.partner] if c.kind is ContactKind.GRANULE_GRANULE \
                else np.array([state.zdot, 0.0])
            power = f_vis @ v_i - f_vis @ v_j
            # f_vis is a difference of two forces up to ~1e5 N: allow for that roundoff
            roundoff = 8 * np.finfo(float).eps * np.linalg.norm(full.normal_force) \
                * np.linalg.norm(v_i - v_j)
            assert power == pytest.approx(-full.damping_power, rel=1e-9, abs=roundoff + 1e-15)
            assert full.damping_power >= 0
