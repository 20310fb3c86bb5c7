"""Empirical delta estimator and membership experiment."""

import csv
import json
import math

import numpy as np
import pytest

from anisopriv.audit import (
    AuditConfig,
    _adjacent_pair,
    audit_report_to_dict,
    clamped_log_ratios,
    estimate_delta,
    membership_experiment,
    membership_report_to_dict,
    write_audit_json,
    write_membership_csv,
)
from anisopriv.errors import TrainingDivergedWarning
from anisopriv.models import AnisotropicPerParam, NO_NOISE, synth_blobs
from anisopriv.rng import tagged_stream


@pytest.fixture
def small_blobs():
    return synth_blobs(2, 8, 2, 2.0, seed=3)


def small_config(ds, **overrides):
    base = dict(
        epsilon=0.1,
        outer_rounds=2,
        inner_rounds=3,
        scheme=AnisotropicPerParam(0.5),
        lr=0.5,
        iters=30,
        batch=8,
        hidden=4,
        dataset=ds,
        seed=17,
    )
    base.update(overrides)
    return AuditConfig(**base)


def test_clamped_log_ratios_hand_values():
    p = np.array([1e-20, 0.5, 1.0, 2.0])
    q = np.array([0.5, 1e-20, 0.25, 1.0])
    out = clamped_log_ratios(p, q)
    assert np.all(np.isfinite(out))
    assert out[0] == pytest.approx(math.log(1e-12) - math.log(0.5), rel=1e-14)
    assert out[1] == pytest.approx(math.log(0.5) - math.log(1e-12), rel=1e-14)
    assert out[2] == pytest.approx(math.log(4.0), rel=1e-14)
    # values above 1 clamp down to 1
    assert out[3] == 0.0


def test_null_adjacency_gives_zero_delta(small_blobs):
    report = estimate_delta(small_config(small_blobs, adjacency="null"))
    assert report.delta == 0.0
    assert all(c == 0 for c in report.counts_per_outer)
    assert report.excluded_rounds == 0
    assert report.total_comparisons == 2 * 3 * small_blobs.size


def test_huge_epsilon_gives_zero_delta(small_blobs):
    # clamping bounds |log ratio| by 12 ln 10, far below this threshold
    report = estimate_delta(small_config(small_blobs, epsilon=1e6))
    assert report.delta == 0.0


def test_estimate_delta_deterministic(small_blobs):
    a = estimate_delta(small_config(small_blobs))
    b = estimate_delta(small_config(small_blobs))
    assert a.delta == b.delta
    assert a.delta_per_outer == b.delta_per_outer
    assert a.counts_per_outer == b.counts_per_outer
    assert a.worst_loss == b.worst_loss


def test_delta_nonincreasing_in_epsilon(small_blobs):
    reports = [
        estimate_delta(small_config(small_blobs, epsilon=eps))
        for eps in (0.01, 0.1, 1.0)
    ]
    # identical trainings, so the per-outer counts shrink as the bar rises
    for lo, hi in zip(reports, reports[1:]):
        assert all(a >= b for a, b in zip(lo.counts_per_outer, hi.counts_per_outer))
        assert lo.delta >= hi.delta
    assert reports[0].delta > 0.0


def test_divergent_rounds_are_excluded(small_blobs):
    cfg = small_config(
        small_blobs, scheme=NO_NOISE, lr=1e8, iters=40,
        outer_rounds=2, inner_rounds=2, activation="relu",
    )
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.warns(TrainingDivergedWarning):
            report = estimate_delta(cfg)
    assert 1 <= report.excluded_rounds <= 4


def test_adjacent_pair_modes(small_blobs):
    ds = small_blobs
    rng = tagged_stream(0, 5)
    removed = _adjacent_pair(ds, "remove", rng)
    assert removed.size == ds.size - 1

    null = _adjacent_pair(ds, "null", rng)
    assert np.array_equal(null.features, ds.features)
    assert np.array_equal(null.labels, ds.labels)

    rep = _adjacent_pair(ds, "replace", rng)
    assert rep.size == ds.size
    diff = np.flatnonzero(np.any(rep.features != ds.features, axis=1))
    assert diff.shape == (1,)
    j = diff[0]
    # the new record is a copy of some other original record
    matches = np.flatnonzero(np.all(ds.features == rep.features[j], axis=1))
    assert matches.size == 1 and matches[0] != j


def test_audit_config_validation(small_blobs):
    with pytest.raises(ValueError):
        small_config(small_blobs, epsilon=0.0)
    with pytest.raises(ValueError):
        small_config(small_blobs, outer_rounds=0)
    with pytest.raises(ValueError):
        small_config(small_blobs, inner_rounds=0)
    with pytest.raises(ValueError):
        small_config(small_blobs, adjacency="swap")
    with pytest.raises(ValueError):
        small_config(small_blobs, hidden=0)


def test_audit_json_roundtrip(tmp_path, small_blobs):
    report = estimate_delta(small_config(small_blobs, outer_rounds=1, inner_rounds=1))
    path = tmp_path / "audit.json"
    write_audit_json(report, path)
    with open(path) as fh:
        doc = json.load(fh)
    assert doc == audit_report_to_dict(report)
    assert doc["total_comparisons"] == small_blobs.size
    assert math.isfinite(doc["worst_loss"])


def test_membership_null_control_has_zero_gap(small_blobs):
    report = membership_experiment(
        small_blobs, 0, 3, AnisotropicPerParam(0.5),
        lr=0.5, iters=30, batch=8, hidden=4, seed=9, null_control=True,
    )
    assert np.array_equal(report.losses_with, report.losses_without)
    assert report.mean_gap == 0.0


def test_membership_arms_differ_without_control(small_blobs):
    report = membership_experiment(
        small_blobs, 0, 3, AnisotropicPerParam(0.5),
        lr=0.5, iters=30, batch=8, hidden=4, seed=9,
    )
    assert not np.array_equal(report.losses_with, report.losses_without)
    assert report.mean_gap >= 0.0
    assert np.all(np.isfinite(report.losses_with))
    assert np.all(np.isfinite(report.losses_without))


def test_membership_csv_layout(tmp_path, small_blobs):
    report = membership_experiment(
        small_blobs, 2, 4, NO_NOISE,
        lr=0.5, iters=20, batch=8, hidden=4, seed=1,
    )
    path = tmp_path / "hist.csv"
    write_membership_csv(report, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["run", "arm", "loss_on_target"]
    body = rows[1:]
    assert len(body) == 8
    assert [r[1] for r in body] == ["D"] * 4 + ["Dprime"] * 4
    got_with = np.array([float(r[2]) for r in body[:4]])
    assert np.array_equal(got_with, report.losses_with)

    doc = membership_report_to_dict(report)
    assert doc["runs"] == 4
    assert doc["mean_gap"] == report.mean_gap


def test_membership_validation(small_blobs):
    with pytest.raises(ValueError):
        membership_experiment(
            small_blobs, 0, 0, NO_NOISE, lr=0.5, iters=5, batch=8, hidden=4, seed=0,
        )
