import random

import pytest

from citymesh.core import GuidanceState, Mode, SensorKind, light_id
from citymesh.light import (
    AllClear,
    CrisisAlert,
    CrisisCause,
    DetectionRule,
    EnvironmentTrace,
    GuidanceError,
    LightNode,
    Ramp,
    RuleKind,
    SamplingPolicy,
    SchedulingError,
    VisionMark,
    evaluate_rules,
    morph,
    next_sample_time,
    sample,
    set_guidance,
)
from citymesh.core import CENTER, device_id

L3 = light_id(3)


def make_node(**kwargs):
    return LightNode(id=L3, **kwargs)


def fire_trace():
    # fire starting at 40 s: CO2 proxy to 2000 and temperature to 45 over 20 s
    return (
        EnvironmentTrace.from_values(
            {SensorKind.CO2: 400.0, SensorKind.TEMPERATURE: 20.0}
        )
        .with_ramp(Ramp(SensorKind.CO2, start=40_000, duration_ms=20_000, target=2000.0))
        .with_ramp(Ramp(SensorKind.TEMPERATURE, start=40_000, duration_ms=20_000, target=45.0))
    )


# --- sampling cadence ---------------------------------------------------------


def test_next_sample_everyday_default():
    assert next_sample_time(make_node()) == 30_000


def test_next_sample_emergency_default():
    node = make_node(mode=Mode.EMERGENCY)
    assert next_sample_time(node) == 5_000


def test_next_sample_shifts_with_last_sample():
    node = make_node(mode=Mode.EMERGENCY, last_sample=12_000)
    assert next_sample_time(node) == 17_000


def test_policy_validation():
    with pytest.raises(ValueError):
        SamplingPolicy(interval_everyday_ms=5_000, interval_emergency_ms=5_000)
    with pytest.raises(ValueError):
        SamplingPolicy(interval_everyday_ms=0, interval_emergency_ms=-1)


def test_cadence_over_window():
    # frame count over a fixed-mode window is floor(window / interval) +- 1
    for mode, interval in ((Mode.EVERYDAY, 30_000), (Mode.EMERGENCY, 5_000)):
        node = make_node(mode=mode)
        count = 0
        window = 600_000
        while next_sample_time(node) <= window:
            _, node = sample(node, next_sample_time(node))
            count += 1
        assert abs(count - window // interval) <= 1


# --- sampling values ----------------------------------------------------------


def test_sample_before_due_rejected():
    node = make_node()
    with pytest.raises(SchedulingError):
        sample(node, 29_999)


def test_constant_trace_zero_noise_reproduces_trace():
    trace = EnvironmentTrace.from_values(
        {SensorKind.TEMPERATURE: 20.0, SensorKind.HUMIDITY: 55.0}
    )
    node = make_node(environment=trace)
    frame, node = sample(node, 30_000)
    assert frame.reading(SensorKind.TEMPERATURE) == 20.0
    assert frame.reading(SensorKind.HUMIDITY) == 55.0
    assert frame.reading(SensorKind.CO2) == 0.0
    assert node.last_sample == 30_000


def test_same_seed_same_frame():
    trace = EnvironmentTrace.from_values(
        {SensorKind.TEMPERATURE: 20.0}, {SensorKind.TEMPERATURE: 0.5}
    )
    node = make_node(environment=trace)
    f1, _ = sample(node, 30_000, random.Random(99))
    f2, _ = sample(node, 30_000, random.Random(99))
    f3, _ = sample(node, 30_000, random.Random(100))
    assert f1 == f2
    assert f1 != f3


def test_scripted_fire_trace_exceeds_thresholds_at_60s():
    # hand evaluation: by 60 s both ramps have completed, so CO2 = 2000 and
    # temperature = 45; against a 20 degree baseline the rule must trip
    trace = fire_trace()
    assert trace.value_at(SensorKind.CO2, 60_000) == 2000.0
    assert trace.value_at(SensorKind.TEMPERATURE, 60_000) == 45.0
    assert trace.value_at(SensorKind.CO2, 50_000) == pytest.approx(1200.0)
    node = make_node(environment=trace, last_sample=30_000)
    frame, _ = sample(node, 60_000)
    rule = DetectionRule()
    assert frame.reading(SensorKind.CO2) > rule.particulate_threshold
    assert frame.reading(SensorKind.TEMPERATURE) - 20.0 > rule.temp_rise_threshold


# --- detection rules ------------------------------------------------------------


def frames_for(node, times_and_values):
    frames = []
    for t, co2, temp in times_and_values:
        frames.append(
            sample(
                LightNode(
                    id=node.id,
                    environment=EnvironmentTrace.from_values(
                        {SensorKind.CO2: co2, SensorKind.TEMPERATURE: temp}
                    ),
                    last_sample=max(0, t - 30_000),
                ),
                t,
            )[0]
        )
    return frames


def test_all_zero_readings_no_alert():
    node = make_node()
    frames = frames_for(node, [(30_000, 0, 0), (60_000, 0, 0)])
    assert evaluate_rules(node, frames) is None


def test_rule_truth_table():
    # enumerate the fire-rule truth table: (co2 high?, temp rise high?) -> alert
    node = make_node()
    cases = [
        (400.0, 0.0, False),  # neither
        (2000.0, 0.0, False),  # co2 only, flat temperature
        (400.0, 25.0, False),  # temp rise only
        (2000.0, 25.0, True),  # both
    ]
    for co2, rise, expect in cases:
        frames = frames_for(node, [(30_000, 400.0, 20.0), (60_000, co2, 20.0 + rise)])
        alert = evaluate_rules(node, frames)
        if expect:
            assert alert == CrisisAlert(node.id, 60_000, CrisisCause.FIRE_RULE)
        else:
            assert alert is None


def test_temp_rise_outside_window_ignored():
    node = make_node(rules=(DetectionRule(RuleKind.FIRE_RULE, window_ms=60_000),))
    # the cold frame is 90 s old: outside the 60 s window at t=120 s
    frames = frames_for(
        node, [(30_000, 400.0, 20.0), (90_000, 2000.0, 44.0), (120_000, 2000.0, 45.0)]
    )
    assert evaluate_rules(node, frames) is None


def test_vision_event_alert():
    trace = EnvironmentTrace().with_vision(VisionMark(start=50_000, duration_ms=30_000))
    node = make_node(environment=trace)
    frames = frames_for(node, [(30_000, 0, 0), (60_000, 0, 0)])
    alert = evaluate_rules(node, frames)
    assert alert == CrisisAlert(node.id, 60_000, CrisisCause.VISION_EVENT)
    # inactive before the mark
    early = frames_for(node, [(30_000, 0, 0)])
    assert evaluate_rules(node, early) is None


def test_unsorted_history_rejected():
    node = make_node()
    frames = frames_for(node, [(60_000, 0, 0), (30_000, 0, 0)])
    with pytest.raises(Exception):
        evaluate_rules(node, frames)


def test_foreign_frames_rejected():
    node = make_node()
    other = LightNode(id=light_id(7))
    frames = [sample(other, 30_000)[0]]
    with pytest.raises(Exception):
        evaluate_rules(node, frames)


# --- morphing ----------------------------------------------------------------------


def alert_at(t=60_000):
    return CrisisAlert(source=L3, time=t, cause=CrisisCause.FIRE_RULE)


def test_morph_to_emergency_pushes_connected_devices():
    node = make_node()
    devices = [device_id(0), device_id(1)]
    morphed, pushes = morph(node, alert_at(), devices)
    assert morphed.mode is Mode.EMERGENCY
    assert next_sample_time(morphed) == morphed.last_sample + 5_000
    assert [p.device for p in pushes] == devices
    assert all(p.light == L3 and p.cause is CrisisCause.FIRE_RULE for p in pushes)


def test_morph_idempotent_per_trigger():
    node = make_node()
    once, _ = morph(node, alert_at(), [device_id(0)])
    twice, pushes = morph(once, alert_at(), [device_id(0)])
    assert twice == once
    assert pushes == []
    clear = AllClear(source=CENTER, time=100_000)
    back, _ = morph(once, clear)
    again, _ = morph(back, clear)
    assert again == back


def test_all_clear_restores_everyday():
    node = make_node()
    emergency, _ = morph(node, alert_at(), [])
    emergency = set_guidance(emergency, GuidanceState.SAFE_DIRECTION)
    restored, pushes = morph(emergency, AllClear(source=CENTER, time=90_000))
    assert restored.mode is Mode.EVERYDAY
    assert next_sample_time(restored) == restored.last_sample + 30_000
    assert restored.guidance is GuidanceState.OFF
    assert pushes == []


def test_alert_in_everyday_is_noop_for_all_clear():
    node = make_node()
    same, _ = morph(node, AllClear(source=CENTER, time=10))
    assert same == node


def test_crisis_alert_source_validation():
    with pytest.raises(ValueError):
        CrisisAlert(source=device_id(1), time=0, cause=CrisisCause.FIRE_RULE)


# --- guidance -------------------------------------------------------------------------


def test_guidance_in_emergency():
    node, _ = morph(make_node(), alert_at(), [])
    lit = set_guidance(node, GuidanceState.SAFE_DIRECTION)
    assert lit.guidance is GuidanceState.SAFE_DIRECTION


def test_guidance_blocked_in_everyday_rejected():
    with pytest.raises(GuidanceError):
        set_guidance(make_node(), GuidanceState.BLOCKED)


def test_guidance_charging_in_everyday():
    node = set_guidance(make_node(), GuidanceState.CHARGING)
    assert node.guidance is GuidanceState.CHARGING
