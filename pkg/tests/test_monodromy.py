from __future__ import annotations

import json

import mpmath
import pytest
from mpmath import mp

from theta_lab.core_eval import theta_jet
from theta_lab.errors import PathCollision
from theta_lab.monodromy import (
    MonodromyRecord,
    TrackControls,
    base_labels,
    collision_label,
    continue_radial,
    rational_direction_report,
    records_to_json,
)


@pytest.fixture(autouse=True)
def _dps():
    with mp.workdps(40):
        yield


def test_base_labels_increase_in_modulus_and_are_zeros():
    lab = base_labels(0, 6)
    mods = [abs(z) for _, z in lab.labels]
    assert [k for k, _ in lab.labels] == list(range(1, 7))
    assert mods == sorted(mods)
    for _, z in lab.labels:
        assert abs(theta_jet(lab.base_point, z).value) < 1e-25
    # the k-th zero sits near -q**-k for small q
    for k, z in lab.labels[1:]:
        assert abs(z * mpmath.mpf("0.1") ** k + 1) < 0.01


def test_base_labels_on_negative_ray_alternate():
    lab = base_labels(mpmath.pi, 4)
    assert lab.base_point.real < 0
    signs = [mpmath.sign(z.real) for _, z in lab.labels]
    assert all(a != b for a, b in zip(signs, signs[1:]))


def test_strict_tracking_reports_collision_on_path():
    lab = base_labels(0, 4)
    with pytest.raises(PathCollision):
        continue_radial(lab, mpmath.mpf("0.35"), TrackControls(strict=True))


def test_lenient_tracking_records_dropped_pair():
    res = continue_radial(base_labels(0, 4), mpmath.mpf("0.35"))
    assert [(a, b) for a, b, _ in res.dropped] == [(1, 2)]
    assert abs(res.dropped[0][2] - mpmath.mpf("0.3092493386")) < 1e-6


def test_wrong_ray_rejected():
    with pytest.raises(ValueError):
        continue_radial(base_labels(0, 3), mpmath.mpc(0, "0.3"))


def test_first_real_point_swaps_first_two_labels():
    rec = collision_label(mpmath.mpf("0.309249338600077480027483387771"),
                          mpmath.mpf("-7.50325596424419236565431456809"))
    assert rec.transposition == (1, 2)
    assert rec.forward == rec.backward == (1, 2)
    doc = json.loads(records_to_json([rec]))
    assert doc[0]["i"] == 1 and doc[0]["j"] == 2
    assert isinstance(doc[0]["q_star"][0], str)


def _rec(q, i, j):
    q = mpmath.mpc(q)
    return MonodromyRecord(q, mpmath.mpc(0), i, j, "both", 0, mpmath.mpf(1), 0.1 * q / abs(q))


def test_direction_report_on_positive_ray():
    recs = [_rec(0.3, 1, 2), _rec(0.5, 3, 4), _rec(mpmath.mpc(0.4, 0.1), 2, 3)]
    rep = rational_direction_report(0, 1, recs)
    assert sorted(rep.matches) == [(1, 2), (3, 4)]
    assert rep.mismatches == []


def test_direction_report_negative_ray_pattern():
    recs = [_rec(-0.72, 2, 4), _rec(-0.78, 3, 5)]
    rep = rational_direction_report(1, 2, recs)
    assert rep.matches == [(2, 4), (3, 5)]
    assert rep.classes == {0: [(2, 4)], 1: [(3, 5)]}


def test_direction_report_empty_direction():
    rep = rational_direction_report(1, 4, [_rec(0.3, 1, 2)])
    assert rep.notice
    with pytest.raises(ValueError):
        rational_direction_report(2, 4, [])
