from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stpp_imitation.events import (
    EventSequence,
    ScalingTransform,
    SpaceRegion,
    StaticFeatures,
    common_horizon,
    fit_scaling,
    read_sequence_csv,
    read_sequence_dir,
    require_valid,
    validate_sequence,
    write_sequence_csv,
    write_sequence_dir,
)


def test_empty_sequence_is_valid():
    assert validate_sequence(EventSequence.empty(2.0)) is None


def test_duplicate_time_reported_at_second_event():
    seq = EventSequence.from_events([(0.5, 0, 0), (0.5, 1, 1)], 2.0)
    bad = validate_sequence(seq)
    assert bad.index == 1 and bad.kind == "order" and "duplicate" in bad.message


def test_decreasing_time():
    bad = validate_sequence(EventSequence.from_events([(0.7, 0, 0), (0.2, 0, 0)], 2.0))
    assert bad.index == 1 and "decreasing" in bad.message


def test_horizon_violation():
    bad = validate_sequence(EventSequence.from_events([(2.5, 0, 0)], 2.0))
    assert bad.kind == "horizon" and bad.index == 0


@pytest.mark.parametrize("row,kind", [((np.nan, 0, 0), "nonfinite"), ((0.1, np.inf, 0), "nonfinite"),
                                      ((-0.1, 0, 0), "negative_time")])
def test_other_violations(row, kind):
    assert validate_sequence(EventSequence.from_events([row], 2.0)).kind == kind


def test_require_valid_raises():
    with pytest.raises(ValueError, match="duplicate"):
        require_valid(EventSequence.from_events([(0.5, 0, 0), (0.5, 0, 0)], 2.0))


def test_sequence_is_read_only():
    seq = EventSequence.from_events([(0.1, 0, 0)], 1.0)
    with pytest.raises(ValueError):
        seq.data[0, 0] = 3.0


def test_event_accessors():
    seq = EventSequence.from_events([(0.1, 1.0, 2.0), (0.3, -1.0, 0.5)], 1.0)
    assert len(seq) == 2
    assert seq.events[1].location == (-1.0, 0.5)
    np.testing.assert_array_equal(seq.times, [0.1, 0.3])


def test_common_horizon_mismatch():
    with pytest.raises(ValueError):
        common_horizon([EventSequence.empty(1.0), EventSequence.empty(2.0)])


def test_time_scaling_730_days():
    seqs = [EventSequence.from_events([(0, 0, 0), (730, 1, 1)], 730.0)]
    tr = fit_scaling(seqs)
    assert tr.time_scale == pytest.approx(2 / 730)
    assert tr.scale_time(730.0) == pytest.approx(2.0)


def test_scaled_data_is_near_identity():
    seqs = [EventSequence.from_events([(0.0, -2, -2), (1.0, 0, 1), (1.9, 2, 2)], 2.0)]
    tr = fit_scaling(seqs)
    assert tr.time_offset == 0 and tr.time_scale == pytest.approx(1.0)
    np.testing.assert_allclose(tr.space_offsets, 0, atol=1e-15)
    np.testing.assert_allclose(tr.space_scales, 1, rtol=1e-15)


def test_latlon_box_corners():
    seqs = [EventSequence.from_events([(0, 40, -74), (1, 41, -73), (2, 40.5, -73.5)], 3.0)]
    tr = fit_scaling(seqs)
    np.testing.assert_allclose(tr.scale_location([40, -74]), [-2, -2], atol=1e-12)
    np.testing.assert_allclose(tr.scale_location([41, -73]), [2, 2], atol=1e-12)


def test_constant_axis_gets_unit_scale(caplog):
    seqs = [EventSequence.from_events([(0, 3, 1), (1, 3, 2)], 2.0)]
    tr = fit_scaling(seqs)
    assert tr.space_scales[0] == 1.0 and "constant" in caplog.text


def test_fit_scaling_needs_events():
    with pytest.raises(ValueError):
        fit_scaling([EventSequence.empty(2.0)])


finite = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(t=st.floats(0, 1e4), x=finite, y=finite, ts=st.floats(1e-3, 1e3), sx=st.floats(1e-3, 1e3),
       sy=st.floats(1e-3, 1e3), ox=finite, oy=finite)
def test_scale_roundtrip(t, x, y, ts, sx, sy, ox, oy):
    tr = ScalingTransform(0.0, ts, (ox, oy), (sx, sy))
    back = tr.unscale_events(tr.scale_events([t, x, y]))[0]
    np.testing.assert_allclose(back, [t, x, y], rtol=1e-12, atol=1e-12 * (1 + abs(ox) + abs(oy) + 1e-6 * max(abs(x), abs(y))))


def test_scaling_dict_roundtrip():
    tr = ScalingTransform(0.0, 0.5, (1.0, -2.0), (3.0, 4.0))
    assert ScalingTransform.from_dict(tr.to_dict()) == tr


def test_csv_roundtrip(tmp_path):
    seq = EventSequence.from_events([(0.1, 0.2, 0.3), (1 / 3, -1e-17, 2.0)], 2.0, features=[1.0, -1.0])
    write_sequence_csv(seq, tmp_path / "a.csv")
    assert read_sequence_csv(tmp_path / "a.csv") == seq


def test_csv_dir_roundtrip(tmp_path):
    seqs = [EventSequence.from_events([(0.1 * i, 0, 0)], 1.0) for i in range(1, 4)] + [EventSequence.empty(1.0)]
    write_sequence_dir(seqs, tmp_path)
    assert read_sequence_dir(tmp_path) == seqs


def test_csv_header_checked(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError, match="header"):
        read_sequence_csv(tmp_path / "bad.csv", horizon=2.0)


def test_region_contains():
    r = SpaceRegion()
    assert r.area == 16
    np.testing.assert_array_equal(r.contains([[0, 0], [2.5, 0]]), [True, False])


def test_static_features_validate():
    with pytest.raises(ValueError):
        StaticFeatures([1.0, np.nan])
    assert len(StaticFeatures([1.0, 2.0], ("a", "b"))) == 2
