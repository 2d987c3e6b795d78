import json

import pytest

from geoequiv.verification import ORDER, run_battery


def test_trig2_quick_passes(m2):
    rep = run_battery(m2, 0, "quick")
    assert rep.passed
    assert [c.name for c in rep.checks] == list(ORDER)


def test_const2_runs_killing_check(mc):
    rep = run_battery(mc, 0, "quick")
    assert rep.passed
    assert not rep.get("killing_J").note.startswith("skipped")


def test_deterministic(m3):
    a = run_battery(m3, 5, "quick").to_json()
    b = run_battery(m3, 5, "quick").to_json()
    assert a == b
    d = json.loads(a)
    assert d["schema_version"] and d["overall_pass"]


def test_broken_pair_fails(broken):
    rep = run_battery(broken, 0, "quick")
    assert not rep.passed
    assert {"nijenhuis", "brackets"} <= set(rep.failed)
    dyn = run_battery(broken, 0, "quick", only=["nijenhuis", "conservation"])
    assert set(dyn.failed) == {"nijenhuis", "conservation"}


def test_proportional_pair(prop):
    rep = run_battery(prop, 0, "quick", only=["strict_nonprop", "nijenhuis", "brackets", "conservation",
                                               "independence", "geodesic_equivalence"])
    assert rep.failed == ["strict_nonprop"]
    assert "degenerate: proportional" in rep.get("strict_nonprop").note
    assert rep.get("independence").note.startswith("skipped")


@pytest.mark.slow
def test_full_depth_and_monotone(m2, broken):
    assert run_battery(m2, 0, "full").passed
    quick = set(run_battery(broken, 0, "quick").failed)
    full = set(run_battery(broken, 0, "full").failed)
    assert quick <= full
    assert {"nijenhuis", "conservation"} <= full


def test_unknown_check(m2):
    with pytest.raises(ValueError):
        run_battery(m2, 0, "quick", only=["nope"])
