"""Closed-form checks for kinematics, link and task formulas.

Expected values are hand arithmetic written out next to each case.
"""

import math

import numpy as np
import pytest

from starmec import channel as ch
from starmec import compute as cp
from starmec.config import SystemConfig, dbm_per_hz_to_watts
from starmec.mobility import (FlightPlanState, Position3, apply_displacement,
                              check_return_constraint, flight_energy, path_length)

REL = 1e-9


def plan(x=50.0, y=0.0, **kw):
    base = dict(current=Position3(x, y, 20.0), start=Position3(50.0, 0.0, 20.0),
                slot_duration=2.5, max_speed=7.0, kappa=1.0, slots_total=20)
    base.update(kw)
    return FlightPlanState(**base)


# -- mobility ---------------------------------------------------------------

@pytest.mark.parametrize("delta, expected", [
    ((10.0, 0.0), (60.0, 0.0)),      # 10 m in 2.5 s is 4 m/s, under the limit
    ((0.0, 0.0), (50.0, 0.0)),
    ((35.0, 0.0), (67.5, 0.0)),      # 14 m/s requested, scaled to 7 * 2.5 = 17.5 m
])
def test_apply_displacement(delta, expected):
    out = apply_displacement(plan(), delta)
    assert out.current.x == pytest.approx(expected[0], rel=REL)
    assert out.current.y == pytest.approx(expected[1], abs=1e-12)
    assert out.current.z == 20.0
    assert out.slot_index == 1


def test_apply_displacement_clips_to_area_and_rejects_nan():
    out = apply_displacement(plan(x=99.0, y=1.0), (5.0, -5.0))
    assert (out.current.x, out.current.y) == (100.0, 0.0)
    with pytest.raises(ValueError, match="invalid action"):
        apply_displacement(plan(), (float("nan"), 0.0))


def test_zero_displacement_is_idempotent():
    s = plan(x=12.0, y=34.0)
    once = apply_displacement(s, (0.0, 0.0))
    twice = apply_displacement(once, (0.0, 0.0))
    assert once.current == twice.current == s.current


def test_flight_plan_validation():
    with pytest.raises(ValueError):
        plan(slot_duration=0.0)
    with pytest.raises(ValueError):
        plan(slot_index=21)


@pytest.mark.parametrize("nxt, kappa, exponent, expected", [
    ((60, 0, 20), 1.0, 1, 4.0),
    ((50, 0, 20), 1.0, 1, 0.0),
    ((60, 0, 20), 1.0, 2, 16.0),
    ((53, 4, 20), 0.5, 1, 1.0),      # 5 m in 2.5 s is 2 m/s, times 0.5
])
def test_flight_energy(nxt, kappa, exponent, expected):
    got = flight_energy((50, 0, 20), nxt, 2.5, kappa, exponent)
    assert got == pytest.approx(expected, rel=REL, abs=0.0)


@pytest.mark.parametrize("end, ok", [((50, 0, 20), True), ((52, 0, 20), False), ((50.5, 0, 20), True)])
def test_return_constraint(end, ok):
    track = [(50, 0, 20), (60, 0, 20), end]
    assert check_return_constraint(track, tol=1.0) is ok


def test_return_constraint_needs_complete_track():
    with pytest.raises(ValueError, match="incomplete"):
        check_return_constraint([(50, 0, 20)] * 3, tol=1.0, slots_total=20)


def test_path_length():
    assert path_length([(0, 0, 0), (3, 4, 0), (3, 4, 0), (0, 0, 0)]) == 10.0
    assert path_length([(1, 1, 1)]) == 0.0


# -- channel ------------------------------------------------------------------

def test_star_matrices_examples():
    theta_r, theta_t = ch.make_star_matrices(ch.StarCoefficients.split([1.0], [0.0], [0.0]))
    assert theta_r[0, 0] == 1 + 0j and theta_t[0, 0] == 0
    theta_r, _ = ch.make_star_matrices(ch.StarCoefficients.split([0.5], [math.pi], [0.0]))
    assert theta_r[0, 0].real == pytest.approx(-math.sqrt(0.5), rel=REL)
    assert abs(theta_r[0, 0].imag) < 1e-12
    theta_r, theta_t = ch.make_star_matrices(ch.StarCoefficients.split([0.25], [1.0], [2.0]))
    assert abs(theta_r[0, 0]) ** 2 == pytest.approx(0.25, rel=REL)
    assert abs(theta_t[0, 0]) ** 2 == pytest.approx(0.75, rel=REL)


def test_star_matrices_reject_bad_amplitude():
    bad = ch.StarCoefficients(np.array([1.2]), np.array([-0.2]), np.zeros(1), np.zeros(1))
    with pytest.raises(ValueError, match="beta_r"):
        ch.make_star_matrices(bad)


def test_wrap_phase_range():
    phi = ch.wrap_phase([-1e-18, 2 * math.pi, -math.pi, 7.0])
    assert np.all((phi >= 0) & (phi < 2 * math.pi))
    assert phi[2] == pytest.approx(math.pi)


@pytest.mark.parametrize("h_mb, theta, h_km, expected", [
    ([1], [1], [1], 1),
    ([1, 1], [1, np.exp(1j * np.pi)], [1, 1], 0),
    ([1, 1], np.eye(2), [1, 1], 2),
])
def test_cascaded_gain(h_mb, theta, h_km, expected):
    got = ch.cascaded_gain(np.asarray(h_mb, complex), np.asarray(theta, complex), np.asarray(h_km, complex))
    assert abs(got - expected) < 1e-12


def test_cascaded_gain_conjugates_bs_link_and_checks_shapes():
    assert ch.cascaded_gain(np.array([1j]), np.array([1.0]), np.array([1.0])) == pytest.approx(-1j)
    with pytest.raises(ValueError, match="dimension"):
        ch.cascaded_gain(np.ones(2), np.ones(3), np.ones(2))


def test_sinr_examples():
    assert ch.sinr(0, [np.sqrt(1e-10)], [0.1], 1e-12) == pytest.approx(10.0, rel=REL)
    assert ch.sinr(0, [np.sqrt(1e-10)], [0.0], 1e-12) == 0.0
    two = ch.sinr(0, [np.sqrt(1e-10)] * 2, [0.1, 0.1], 1e-12, mode="sinr", regions=[0, 0])
    assert two == pytest.approx(1e-11 / (1e-11 + 1e-12), rel=REL)
    # the last device in its region sees no interference; other regions never interfere
    last = ch.sinr_all([np.sqrt(1e-10)] * 3, [0.1] * 3, 1e-12, mode="sinr", regions=[0, 0, 1])
    assert last[1] == pytest.approx(10.0, rel=REL) and last[2] == pytest.approx(10.0, rel=REL)


@pytest.mark.parametrize("s, expected", [(0.0, 0.0), (1.0, 1e7), (3.0, 2e7)])
def test_rate(s, expected):
    assert ch.rate(s, 1e7) == pytest.approx(expected, rel=REL, abs=0.0)


def test_noise_power_conversion():
    # -174 dBm/Hz + 70 dB = -104 dBm = 10^(-13.4) W
    assert dbm_per_hz_to_watts(-174.0, 1e7) == pytest.approx(10 ** -13.4, rel=REL)
    assert SystemConfig().noise_power == pytest.approx(3.981071705534969e-14, rel=REL)


def _geometry(M=4):
    return ch.Geometry(ris=np.array([50.0, 0.0, 20.0]), bs=np.array([25.0, 0.0, 0.0]),
                       devices=np.array([[30.0, 40.0, 0.0], [70.0, 60.0, 0.0]]))


def test_rician_limit_is_pure_los():
    geo, M = _geometry(), 4
    real = ch.sample_rician(geo, 1e12, 7, M)
    los_mb = ch.los_vector(geo.bs, geo.ris, M, 0.125) * np.sqrt(real.pathloss_mb)
    assert np.allclose(real.h_mb, los_mb, rtol=1e-5, atol=0)
    los_km = ch.los_vector(geo.devices, geo.ris, M, 0.125) * np.sqrt(real.pathloss_km)[:, None]
    assert np.max(np.abs(real.h_km - los_km) / np.abs(los_km)) < 1e-5


def test_rayleigh_variance_matches_pathloss():
    geo, M = _geometry(M=2), 2
    rng = np.random.default_rng(3)
    draws = np.array([ch.sample_rician(geo, 0.0, rng, M).h_km for _ in range(10_000)])
    rho = ch.pathloss(np.linalg.norm(geo.devices - geo.ris, axis=1))
    var = np.mean(np.abs(draws) ** 2, axis=0)
    assert np.all(np.abs(var / rho[:, None] - 1) < 0.05)


def test_rician_determinism():
    a = ch.sample_rician(_geometry(), 10.0, 11, 4)
    b = ch.sample_rician(_geometry(), 10.0, 11, 4)
    assert np.array_equal(a.h_mb, b.h_mb) and np.array_equal(a.h_km, b.h_km)


def test_pathloss_reference():
    assert ch.pathloss(1.0) == pytest.approx(1e-3)
    assert ch.pathloss(10.0, 1e-3, 2.0) == pytest.approx(1e-5, rel=REL)


def test_device_gains_match_scalar_triple_product():
    real = ch.sample_rician(_geometry(M=3), 10.0, 5, 3)
    coeffs = ch.StarCoefficients.split([0.2, 0.7, 0.5], [0.1, 2.0, 4.0], [3.0, 0.5, 1.0])
    theta_r, theta_t = ch.make_star_matrices(coeffs)
    regions = np.array([0, 1])
    got = ch.device_gains(real, coeffs, regions)
    assert got[0] == pytest.approx(ch.cascaded_gain(real.h_mb, theta_r, real.h_km[0]), rel=1e-12)
    assert got[1] == pytest.approx(ch.cascaded_gain(real.h_mb, theta_t, real.h_km[1]), rel=1e-12)


# -- compute ------------------------------------------------------------------

@pytest.mark.parametrize("lam, expected", [(0.0, 0.8), (1.0, 0.0), (0.5, 0.4)])
def test_local_latency(lam, expected):
    assert cp.local_latency(lam, 1e5, 800, 1e8) == pytest.approx(expected, rel=REL, abs=0.0)


@pytest.mark.parametrize("lam, expected", [(0.0, 8e-5), (1.0, 0.0), (0.5, 4e-5)])
def test_local_energy(lam, expected):
    assert cp.local_energy(lam, 1e5, 800, 1e8, 1e-28) == pytest.approx(expected, rel=REL, abs=0.0)


@pytest.mark.parametrize("lam, expected", [(0.5, 5e-3), (0.0, 0.0), (1.0, 1e-2)])
def test_offload_latency(lam, expected):
    assert cp.offload_latency(lam, 1e5, 1e7) == pytest.approx(expected, rel=REL, abs=0.0)


@pytest.mark.parametrize("p, lam, expected", [(0.1, 0.5, 5e-4), (0.0, 0.5, 0.0), (0.1, 1.0, 1e-3)])
def test_offload_energy(p, lam, expected):
    assert cp.offload_energy(lam, 1e5, 1e7, p) == pytest.approx(expected, rel=REL, abs=0.0)


def test_dead_link_sentinels():
    assert cp.offload_latency(0.5, 1e5, 0.0) == math.inf
    assert cp.offload_energy(0.5, 1e5, 0.0, 0.1) == math.inf
    assert cp.offload_latency(0.0, 1e5, 0.0) == 0.0


def test_fraction_is_checked():
    with pytest.raises(ValueError):
        cp.local_latency(1.5, 1e5, 800, 1e8)


def test_completion_modes():
    assert cp.slot_completion_time(0.0, 0.8, 0.0) == 0.8
    assert cp.slot_completion_time(0.5, 0.4, 5e-3) == pytest.approx(0.2025, rel=REL)
    assert cp.slot_completion_time(0.5, 0.4, 5e-3, mode="parallel") == 0.4
    with pytest.raises(ValueError):
        cp.slot_completion_time(0.5, 0.4, 5e-3, mode="serial")


def test_total_energy_components():
    one = cp.EnergyBreakdown(local=4e-5, offload=5e-4, flight=4.0)
    assert one.total == pytest.approx(4.00054, rel=REL)
    slots = [one, cp.EnergyBreakdown(1.0, 2.0, 3.0)]
    total = cp.total_energy(slots)
    assert total.total == pytest.approx(sum(s.total for s in slots), rel=1e-12)
    assert total.as_dict()["flight"] == 7.0


def test_task_and_device_validation():
    with pytest.raises(ValueError):
        cp.TaskSpec(0.0, 800, 1.0)
    with pytest.raises(ValueError):
        cp.DeviceCompute(cpu_freq=0.0)


def test_energy_split_monotone_in_lambda():
    lam = np.linspace(0, 1, 11)
    loc = cp.local_energy(lam, 1e5, 800, 1e8, 1e-26)
    off = cp.offload_energy(lam, 1e5, 1e7, 0.1)
    assert np.all(np.diff(loc) < 0) and np.all(np.diff(off) > 0)
    assert loc[-1] == 0.0 and off[0] == 0.0
