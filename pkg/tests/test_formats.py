import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings

from eventviews import (
    AttentionHead,
    DenseMap,
    EncoderConfig,
    EventInvariantError,
    EventStream,
    FormatError,
    ToyBranch,
    ViewAxis,
    encode_view,
    sample_plan,
)
from eventviews.formats import (
    EVENT_HEADER_SIZE,
    MAP_HEADER_SIZE,
    export_map_image,
    read_branch,
    read_events,
    read_events_binary,
    read_events_csv,
    read_head,
    read_map,
    read_pgm,
    read_plan,
    resize_nearest,
    write_branch,
    write_events,
    write_events_binary,
    write_events_csv,
    write_head,
    write_map,
    write_plan,
)
from helpers import random_stream, streams


def write_text(tmp_path, text, name="ev.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


# -- csv ----------------------------------------------------------------------

def test_csv_two_events(tmp_path):
    s = read_events_csv(write_text(tmp_path, "0,1,2,1\n5,3,4,-1"), 10, 10)
    assert len(s) == 2
    assert s.t.tolist() == [0, 5] and s.x.tolist() == [1, 3] and s.y.tolist() == [2, 4]
    assert s.p.tolist() == [1, -1]


def test_csv_regression_reports_line(tmp_path):
    with pytest.raises(EventInvariantError, match="line 2"):
        read_events_csv(write_text(tmp_path, "5,1,2,1\n0,3,4,1"), 10, 10)


def test_csv_zero_polarity_maps_to_negative(tmp_path):
    assert read_events_csv(write_text(tmp_path, "0,1,2,0"), 10, 10).p.tolist() == [-1]


def test_csv_header_comments_and_inferred_size(tmp_path):
    s = read_events_csv(write_text(tmp_path, "t,x,y,p\n# comment\n\n0,4,1,1\n3,2,6,0\n"))
    assert (s.width, s.height) == (5, 7)
    assert len(s) == 2


@pytest.mark.parametrize("text, line", [("0,1,2,1\n1,a,2,1", 2), ("0,1,2\n", 1), ("0,1,2,1\n\n4,1,2,7", 3)])
def test_csv_bad_lines(tmp_path, text, line):
    with pytest.raises((FormatError, EventInvariantError), match=f"line {line}"):
        read_events_csv(write_text(tmp_path, text), 10, 10)


def test_csv_bounds_violation(tmp_path):
    with pytest.raises(EventInvariantError, match="line 1"):
        read_events_csv(write_text(tmp_path, "0,10,2,1"), 10, 10)


def test_csv_roundtrip(tmp_path):
    s = random_stream(np.random.default_rng(0), n=200)
    path = tmp_path / "s.csv"
    write_events_csv(s, path)
    assert read_events_csv(path, s.width, s.height) == s


def test_missing_file_is_format_error(tmp_path):
    with pytest.raises(FormatError):
        read_events_csv(tmp_path / "missing.csv")
    with pytest.raises(FormatError):
        read_events_binary(tmp_path / "missing.evs")


# -- binary events ---------------------------------------------------------------

def test_empty_stream_file_is_header_only(tmp_path):
    path = tmp_path / "empty.evs"
    write_events_binary(EventStream.empty(346, 260), path)
    assert path.stat().st_size == EVENT_HEADER_SIZE == 16
    s = read_events_binary(path)
    assert len(s) == 0 and (s.width, s.height) == (346, 260)


def test_event_record_size(tmp_path):
    path = tmp_path / "s.evs"
    write_events_binary(EventStream([1, 2], [0, 1], [0, 2**40], [1, -1], 4, 4), path)
    assert path.stat().st_size == 16 + 2 * 16
    assert read_events_binary(path).t.tolist() == [0, 2**40]


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(streams())
def test_binary_roundtrip(tmp_path, s):
    path = tmp_path / "s.evs"
    write_events_binary(s, path)
    back = read_events_binary(path)
    assert back == s
    assert back.t.dtype == s.t.dtype and back.p.dtype == s.p.dtype


def test_corrupted_magic(tmp_path):
    path = tmp_path / "s.evs"
    write_events_binary(EventStream([1], [1], [1], [1], 4, 4), path)
    raw = bytearray(path.read_bytes())
    raw[0:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="magic"):
        read_events_binary(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "s.evs"
    write_events_binary(EventStream([1, 2], [1, 1], [1, 2], [1, 1], 4, 4), path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(FormatError):
        read_events_binary(path)
    path.write_bytes(b"EVS1")
    with pytest.raises(FormatError):
        read_events_binary(path)


def test_binary_invariant_violation(tmp_path):
    path = tmp_path / "s.evs"
    write_events_binary(EventStream([1, 2], [1, 1], [1, 2], [1, 1], 4, 4), path)
    raw = bytearray(path.read_bytes())
    raw[16 + 8] = 9  # x of the first record beyond width 4
    path.write_bytes(bytes(raw))
    with pytest.raises(EventInvariantError):
        read_events_binary(path)


def test_dispatch_by_suffix(tmp_path):
    s = random_stream(np.random.default_rng(1), n=50)
    for name in ("a.csv", "a.evs", "a.bin"):
        write_events(s, tmp_path / name)
        assert read_events(tmp_path / name, s.width, s.height) == s
    assert (tmp_path / "a.evs").read_bytes()[:4] == b"EVS1"


# -- maps ----------------------------------------------------------------------------

def test_map_roundtrip_and_size(tmp_path):
    rng = np.random.default_rng(2)
    dense = DenseMap(rng.normal(size=(2, 224, 346)))
    path = tmp_path / "m.dmp"
    write_map(dense, path)
    assert path.stat().st_size == MAP_HEADER_SIZE + 2 * 224 * 346 * 8
    raw = path.read_bytes()
    assert raw[:4] == b"DMP1"
    assert int.from_bytes(raw[4:8], "little") == dense.channels
    back = read_map(path)
    assert back == dense
    assert back.data.tobytes() == dense.data.tobytes()


def test_map_roundtrip_special_values(tmp_path):
    data = np.array([[[0.0, -0.0, 1e-308, np.finfo(float).max]]])
    path = tmp_path / "m.dmp"
    write_map(DenseMap(data), path)
    assert read_map(path).data.tobytes() == data.tobytes()


def test_map_bad_inputs(tmp_path):
    path = tmp_path / "m.dmp"
    write_map(DenseMap(np.zeros((1, 2, 2))), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        read_map(path)
    path.write_bytes(b"DMPX" + raw[4:])
    with pytest.raises(FormatError):
        read_map(path)
    path.write_bytes(raw[:16] + b"<f4\x00" + raw[20:])
    with pytest.raises(FormatError, match="dtype"):
        read_map(path)


def test_resize_nearest():
    data = np.arange(2 * 2 * 3, dtype=float).reshape(2, 2, 3)
    out = resize_nearest(DenseMap(data), 4, 6)
    assert out.data.shape == (2, 4, 6)
    assert out.data[0, 0].tolist() == [0, 0, 1, 1, 2, 2]
    assert out.data[1, 3].tolist() == [9, 9, 10, 10, 11, 11]
    assert resize_nearest(DenseMap(data), 2, 3) == DenseMap(data)


# -- pgm -----------------------------------------------------------------------

def test_pgm_constant_channel(tmp_path):
    path = tmp_path / "c.pgm"
    export_map_image(DenseMap(np.zeros((1, 3, 5))), 0, path)
    img = read_pgm(path)
    assert img.shape == (3, 5) and np.all(img == 128)
    assert path.read_bytes().startswith(b"P5\n5 3\n255\n")


def test_pgm_min_max(tmp_path):
    path = tmp_path / "c.pgm"
    export_map_image(DenseMap(np.array([[[0.0, 10.0], [10.0, 0.0]]])), 0, path)
    assert sorted(set(read_pgm(path).ravel().tolist())) == [0, 255]


def test_pgm_channel_range(tmp_path):
    from eventviews import ContractError

    with pytest.raises(ContractError):
        export_map_image(DenseMap(np.zeros((2, 2, 2))), 2, tmp_path / "x.pgm")


# -- plans and parameters -----------------------------------------------------------------

def test_plan_roundtrip(tmp_path):
    s = random_stream(np.random.default_rng(3), n=300, t_max=10_000)
    plan = sample_plan(s, 4, rng_seed=1)
    path = tmp_path / "plan.json"
    write_plan(plan, path)
    assert read_plan(path) == plan
    assert json.loads(path.read_text())["rng_seed"] == 1


def test_plan_bad_json(tmp_path):
    path = write_text(tmp_path, "{not json", "plan.json")
    with pytest.raises(FormatError):
        read_plan(path)


@pytest.mark.parametrize("residual_norm", [False, True])
def test_head_roundtrip(tmp_path, residual_norm):
    head = AttentionHead.random(8, 3, 2, np.random.default_rng(4), residual_norm=residual_norm)
    path = tmp_path / "head.fus"
    write_head(head, path)
    back = read_head(path)
    assert back.num_heads == 2 and back.residual_norm == residual_norm
    assert back.param_names() == head.param_names()
    for name in head.param_names():
        assert back.params[name].tobytes() == head.params[name].tobytes()


def test_head_truncated(tmp_path):
    path = tmp_path / "head.fus"
    write_head(AttentionHead.zeros(4, 2, 2), path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FormatError):
        read_head(path)


def test_branch_roundtrip(tmp_path):
    branch = ToyBranch.random(2, 8, 4, np.random.default_rng(5), ViewAxis.TW)
    path = tmp_path / "b.tbr"
    write_branch(branch, path)
    back = read_branch(path)
    assert back.view is ViewAxis.TW
    for attr in ("w_hidden", "b_hidden", "w_logits", "b_logits"):
        assert getattr(back, attr).tobytes() == getattr(branch, attr).tobytes()


def test_encoded_map_roundtrip(tmp_path):
    s = random_stream(np.random.default_rng(6), n=500)
    dense = encode_view(s, EncoderConfig.invariant(ViewAxis.TH, 16))
    write_map(dense, tmp_path / "m.dmp")
    assert read_map(tmp_path / "m.dmp") == dense
