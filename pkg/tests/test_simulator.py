import math

import numpy as np
import pytest

from conftest import ieee_system, ieee_trip, lone_machine, table1_generators
from pmu_inertia.core import BaseConvention, DisturbanceScenario, FrequencyTrace, GeneratorSpec, SystemSpec, per_unit_imbalance
from pmu_inertia.errors import InvalidParameter, NetworkSolveDiverged
from pmu_inertia.estimator import CoiMethod, WindowSpec, coi_frequency, extract_window, fit_rocof, ground_truth_inertia
from pmu_inertia.simulator import (
    ArtifactModel,
    GovernorModel,
    SimConfig,
    inject_artifacts,
    simulate_aggregate,
    simulate_multimachine,
    simulate_pmu_channels,
    solve_bus,
)

IEEE_PRE = DisturbanceScenario(1.0, 160, 5160)


def test_aggregate_post_event_affine():
    tr = simulate_aggregate(lone_machine(4.3), IEEE_PRE, SimConfig(8.0))
    expected = -60 * per_unit_imbalance(IEEE_PRE, 0.9) / (2 * 4.3)
    assert expected == pytest.approx(-0.19470, abs=5e-6)
    t = tr.times
    post = t >= 1.0 - 1e-9
    assert np.all(tr.samples[~post] == 60.0)
    closed = 60.0 + expected * (t[post] - 1.0)
    assert np.max(np.abs(tr.samples[post] - closed)) < 1e-10
    slope, _, _ = fit_rocof(extract_window(tr, 1.0, WindowSpec(1, 4)))
    assert slope == pytest.approx(expected, rel=10 * 0.001)


def test_aggregate_no_loss_is_flat():
    sc = DisturbanceScenario(1.0, 0.0, 5160)
    tr = simulate_aggregate(lone_machine(4.3, load_damping=1.0), sc, SimConfig(5.0, governor=GovernorModel(True)))
    assert np.all(tr.samples == 60.0)


def test_aggregate_load_damping_equilibrium():
    # dp = 100 / (9000 / 0.9) = 0.01 pu; D = 2 gives a 0.5 % steady deviation.
    system = lone_machine(5.0, mw=9000.0, load_damping=2.0)
    sc = DisturbanceScenario(0.0, 100.0, 9000.0)
    assert per_unit_imbalance(sc, 0.9) == pytest.approx(0.01)
    tr = simulate_aggregate(system, sc, SimConfig(120.0, integration_step=0.01))
    # time constant 2H/D = 5 s; 120 s is 24 time constants
    assert tr.samples[-1] == pytest.approx(60.0 * 0.995, abs=1e-8)


@pytest.mark.parametrize("d", [0.5, 1.0, 4.0])
def test_aggregate_load_damping_general_law(d):
    system = lone_machine(5.0, mw=9000.0, load_damping=d)
    sc = DisturbanceScenario(0.0, 100.0, 9000.0)
    tr = simulate_aggregate(system, sc, SimConfig(40.0 * 10.0 / d, integration_step=0.01))
    assert tr.samples[-1] == pytest.approx(60.0 * (1 - 0.01 / d), abs=1e-8)


def test_aggregate_governor_raises_frequency():
    system = lone_machine(4.3)
    off = simulate_aggregate(system, IEEE_PRE, SimConfig(12.0))
    on = simulate_aggregate(system, IEEE_PRE, SimConfig(12.0, governor=GovernorModel(True)))
    k = round(11.0 / 0.04)  # event + 10 s
    assert on.samples[k] > off.samples[k]
    # governor is idle before its activation delay
    k_idle = round((1.0 + GovernorModel().activation_delay) / 0.04)
    assert np.array_equal(on.samples[:k_idle], off.samples[:k_idle])


def test_aggregate_excludes_tripped_generator_inertia():
    gens = [GeneratorSpec("a", 2.0, 100, 90), GeneratorSpec("b", 6.0, 100, 90)]
    system = SystemSpec(50.0, 200, 0.9, gens, 180)
    sc = DisturbanceScenario(1.0, 90, 180, BaseConvention.PRE_EVENT_TOTAL, "a")
    tr = simulate_aggregate(system, sc, SimConfig(3.0))
    assert tr.metadata["h_total"] == 6.0


def test_aggregate_rejects_short_duration():
    with pytest.raises(InvalidParameter):
        simulate_aggregate(lone_machine(4.3), IEEE_PRE, SimConfig(0.5))


def test_config_invariants():
    with pytest.raises(InvalidParameter):
        SimConfig(10.0, integration_step=0.05, output_dt=0.04)
    with pytest.raises(InvalidParameter):
        SimConfig(0.0)
    with pytest.raises(InvalidParameter):
        GovernorModel(True, droop_r=0.0)
    with pytest.raises(InvalidParameter):
        ArtifactModel(backswing_decay_tau=0.0)
    with pytest.raises(InvalidParameter):
        ArtifactModel(noise_sigma=-1.0)


def test_output_grid_is_40ms():
    tr = simulate_aggregate(lone_machine(4.3), IEEE_PRE, SimConfig(12.0))
    assert tr.dt == 0.04 and len(tr) == 301 and tr.t_start == 0.0


# --- artifacts ----------------------------------------------------------------


def test_artifacts_zero_is_identity():
    tr = FrequencyTrace("a", 0.0, 0.04, np.linspace(60, 59, 100))
    assert np.array_equal(inject_artifacts(tr, ArtifactModel(), 1.0).samples, tr.samples)


def test_uptick_lifts_frequency_at_event():
    tr = simulate_aggregate(lone_machine(4.3), IEEE_PRE, SimConfig(4.0))
    out = inject_artifacts(tr, ArtifactModel(initial_uptick_hz=0.05, backswing_decay_tau=0.3), 1.0)
    k = round(1.0 / 0.04)
    assert out.samples[k] > out.samples[k - 1]
    assert out.samples[k] == pytest.approx(60.05)
    # nothing outside [event, event + 1)
    k_end = round(2.0 / 0.04)
    assert np.array_equal(out.samples[k_end:], tr.samples[k_end:])
    assert np.array_equal(out.samples[:k], tr.samples[:k])


def test_artifacts_deterministic_per_seed_and_channel():
    tr = FrequencyTrace("a", 0.0, 0.04, np.full(200, 50.0))
    art = ArtifactModel(0.02, 0.3, 2.0, 0.03, 0.01, rng_seed=11)
    a = inject_artifacts(tr, art, 1.0)
    b = inject_artifacts(tr, art, 1.0)
    assert a.samples.tobytes() == b.samples.tobytes()
    c = inject_artifacts(tr.replace(channel_id="b"), art, 1.0)
    assert not np.array_equal(a.samples, c.samples)
    d = inject_artifacts(tr, ArtifactModel(0.02, 0.3, 2.0, 0.03, 0.01, rng_seed=12), 1.0)
    assert not np.array_equal(a.samples, d.samples)


def test_pmu_channels_share_clean_response():
    cfg = SimConfig(6.0, artifacts=ArtifactModel(noise_sigma=0.001, rng_seed=2))
    chans = simulate_pmu_channels(lone_machine(4.3), IEEE_PRE, cfg, 5)
    assert [c.channel_id for c in chans] == ["pmu1", "pmu2", "pmu3", "pmu4", "pmu5"]
    mean = np.mean([c.samples for c in chans], axis=0)
    clean = simulate_aggregate(lone_machine(4.3), IEEE_PRE, SimConfig(6.0))
    assert np.max(np.abs(mean - clean.samples)) < 0.003


# --- network solve ------------------------------------------------------------


def closed_form_bus(e, x, delta, p, q):
    """High-voltage solution of the star-bus balance, solved as a quadratic."""
    a = np.sum(e / x * np.exp(1j * delta))
    b = np.sum(1.0 / x)
    c = b / abs(a) ** 2
    disc = 1 - 4 * c * (c * p * p + q)
    re = (1 + math.sqrt(disc)) / (2 * c)
    nu = complex(re, -p) / np.conj(a)
    return abs(nu), np.angle(nu)


@pytest.mark.parametrize("seed", range(5))
def test_solve_bus_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    n = rng.integers(1, 8)
    e = rng.uniform(1.0, 1.1, n)
    x = rng.uniform(0.1, 0.5, n)
    delta = rng.uniform(-0.2, 0.4, n)
    p = float(rng.uniform(0.0, 0.5))
    q = float(rng.uniform(0.0, 0.2))
    v, th, _ = solve_bus(e, x, delta, p, q, 1.0, 0.0)
    v_ref, th_ref = closed_form_bus(e, x, delta, p, q)
    assert v == pytest.approx(v_ref, abs=1e-9)
    assert th == pytest.approx(th_ref, abs=1e-9)


def test_solve_bus_diverges_on_impossible_load():
    e = np.array([1.0])
    x = np.array([0.5])
    with pytest.raises(NetworkSolveDiverged):
        solve_bus(e, x, np.array([0.0]), 5.0, 0.0)


# --- multimachine -------------------------------------------------------------


@pytest.fixture(scope="module")
def ieee_run():
    return simulate_multimachine(ieee_system(), ieee_trip(), SimConfig(7.0))


def test_multimachine_channels_and_flat_start(ieee_run):
    assert [t.channel_id for t in ieee_run] == [
        "G30", "G31", "G32", "G33", "G34", "G35", "G36", "G38", "G39",
    ]
    k_event = round(1.0 / 0.04)
    for tr in ieee_run:
        assert np.max(np.abs(tr.samples[: k_event + 1] - 60.0)) < 1e-9
        assert tr.metadata["loss_of_synchronism"] is False


def test_multimachine_coi_obeys_aggregate_swing(ieee_run):
    gens = table1_generators()
    h_total = ground_truth_inertia(gens, {"G37"})
    dp = per_unit_imbalance(ieee_trip(), 0.9)
    expected = -60 * dp / (2 * h_total)
    weighted = coi_frequency(ieee_run, CoiMethod.from_generators(gens))
    plain = coi_frequency(ieee_run)
    for coi in (weighted, plain):
        slope, _, _ = fit_rocof(extract_window(coi, 1.0, WindowSpec(1.0, 4.0)))
        assert abs(slope - expected) <= 0.03 * abs(expected)
    # mean slope over 2 s .. 5 s of simulation time
    slope, _, _ = fit_rocof(extract_window(plain, 1.0, WindowSpec(1.0, 4.0)))
    assert abs(slope - expected) / abs(expected) < 0.03


def test_multimachine_single_balanced_machine():
    g = GeneratorSpec("g", 5.0, 100.0, 90.0)
    system = SystemSpec(50.0, 100.0, 0.9, [g], 90.0)
    sc = DisturbanceScenario(1.0, 0.0, 90.0)
    (tr,) = simulate_multimachine(system, sc, SimConfig(3.0))
    assert np.max(np.abs(tr.samples - 50.0)) < 1e-9


def test_multimachine_load_step_without_trip():
    system = ieee_system()
    sc = DisturbanceScenario(1.0, 160, 5160, BaseConvention.PRE_EVENT_TOTAL)
    traces = simulate_multimachine(system, sc, SimConfig(4.0))
    assert len(traces) == 10
    coi = coi_frequency(traces, CoiMethod.from_generators(system.generators))
    slope, _, _ = fit_rocof(extract_window(coi, 1.0, WindowSpec(1.0, 3.0)))
    h = ground_truth_inertia(system.generators)
    assert slope == pytest.approx(-60 * 160 / (5160 / 0.9) / (2 * h), rel=1e-6)


def test_multimachine_validation():
    system = ieee_system()
    with pytest.raises(InvalidParameter):
        simulate_multimachine(system, DisturbanceScenario(1.0, 160, 5160, tripped_generator="G99"), SimConfig(3.0))
    unbalanced = SystemSpec(60.0, 5733.3, 0.9, table1_generators(), 5000.0)
    with pytest.raises(InvalidParameter):
        simulate_multimachine(unbalanced, ieee_trip(), SimConfig(3.0))
    lone = SystemSpec(60.0, 100, 0.9, [GeneratorSpec("g", 4, 100, 90)], 90)
    with pytest.raises(InvalidParameter):
        simulate_multimachine(lone, DisturbanceScenario(1.0, 90, 90, tripped_generator="g"), SimConfig(3.0))


def test_multimachine_explicit_angles():
    gens = [GeneratorSpec("a", 4.0, 100, 50, delta0=0.05), GeneratorSpec("b", 4.0, 100, 50, delta0=0.05)]
    system = SystemSpec(60.0, 100.0, 1.0, gens, 100.0)
    traces = simulate_multimachine(system, DisturbanceScenario(0.5, 0.0, 100.0), SimConfig(1.0))
    assert len(traces) == 2
    mixed = [GeneratorSpec("a", 4.0, 100, 50, delta0=0.1), GeneratorSpec("b", 4.0, 100, 50)]
    with pytest.raises(InvalidParameter):
        simulate_multimachine(SystemSpec(60.0, 100.0, 1.0, mixed, 100.0), DisturbanceScenario(0.5, 0.0, 100.0), SimConfig(1.0))


def test_multimachine_loss_of_synchronism_flagged():
    # A weakly coupled machine near its transfer limit slips a pole after a large trip.
    def run(x_weak):
        gens = [
            GeneratorSpec("a", 2.0, 100, 95.0, x_reactance=0.05),
            GeneratorSpec("w", 2.0, 100, 70.0, x_reactance=x_weak),
            GeneratorSpec("t", 2.0, 100, 95.0, x_reactance=0.05),
        ]
        system = SystemSpec(60.0, 100.0, 1.0, gens, 260.0)
        sc = DisturbanceScenario(0.2, 95.0, 260.0, tripped_generator="t")
        return simulate_multimachine(system, sc, SimConfig(3.0))[0].metadata

    lost = run(1.0)
    assert lost["loss_of_synchronism"] is True
    assert 0.2 < lost["loss_of_synchronism_time"] < 3.0
    assert run(0.3)["loss_of_synchronism"] is False


def test_multimachine_deterministic():
    cfg = SimConfig(2.0, artifacts=ArtifactModel(0.01, 0.3, 2.0, 0.02, 0.001, rng_seed=4))
    a = simulate_multimachine(ieee_system(), ieee_trip(), cfg)
    b = simulate_multimachine(ieee_system(), ieee_trip(), cfg)
    for x, y in zip(a, b):
        assert x.samples.tobytes() == y.samples.tobytes()


def test_step_halving_aggregate():
    system = lone_machine(4.3, load_damping=1.0)
    gov = GovernorModel(True)
    a = simulate_aggregate(system, IEEE_PRE, SimConfig(12.0, governor=gov))
    b = simulate_aggregate(system, IEEE_PRE, SimConfig(12.0, integration_step=0.0005, governor=gov))
    assert np.max(np.abs(a.samples - b.samples)) < 1e-6
