import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidmark.errors import DimensionMismatchError, DomainBoundsError, SidecarFormatError
from lidmark.payload import (
    LandmarkSet,
    compose_payload,
    denormalize_landmarks,
    derive_source_id,
    hex_to_id,
    id_to_hex,
    normalize_landmarks,
    parse_sidecar_record,
    read_sidecar,
    sidecar_line,
    split_payload,
)

from oracles import source_bits_reference


def random_landmarks(rng, width=128, height=96):
    pts = np.column_stack([rng.uniform(0, width, 68), rng.uniform(0, height, 68)])
    return LandmarkSet(points=pts, width=width, height=height)


class TestNormalize:
    def test_midpoint(self):
        pts = np.full((68, 2), 64.0)
        vec = normalize_landmarks(LandmarkSet(points=pts, width=128, height=128))
        assert np.allclose(vec, 0.5)

    def test_origin(self):
        vec = normalize_landmarks(LandmarkSet(points=np.zeros((68, 2)), width=128, height=128))
        assert (vec == 0.0).all()

    def test_border_point_is_valid(self):
        pts = np.zeros((68, 2))
        pts[0] = (128, 96)
        vec = normalize_landmarks(LandmarkSet(points=pts, width=128, height=96))
        assert vec[0] == 1.0 and vec[1] == 1.0

    def test_matches_scalar_division(self):
        rng = np.random.default_rng(7)
        lm = random_landmarks(rng)
        vec = normalize_landmarks(lm)
        for i in range(68):
            assert vec[2 * i] == lm.points[i, 0] / lm.width
            assert vec[2 * i + 1] == lm.points[i, 1] / lm.height

    def test_wrong_point_count(self):
        with pytest.raises(DimensionMismatchError):
            LandmarkSet(points=np.zeros((67, 2)), width=64, height=64)

    def test_out_of_bounds(self):
        pts = np.zeros((68, 2))
        pts[3, 0] = 64.5
        with pytest.raises(DomainBoundsError):
            normalize_landmarks(LandmarkSet(points=pts, width=64, height=64))


class TestDenormalize:
    def test_center(self):
        lm = denormalize_landmarks(np.full(136, 0.5), 128, 128)
        assert np.allclose(lm.points, 64.0)

    def test_zeros(self):
        lm = denormalize_landmarks(np.zeros(136), 64, 64)
        assert (lm.points == 0).all()

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(11)
        vec = rng.uniform(0, 1, 136)
        lm = denormalize_landmarks(vec, 200, 100)
        for i in range(68):
            assert lm.points[i, 0] == vec[2 * i] * 200
            assert lm.points[i, 1] == vec[2 * i + 1] * 100

    def test_round_trip_1000(self):
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(1000):
            w = int(rng.integers(16, 512))
            h = int(rng.integers(16, 512))
            lm = random_landmarks(rng, w, h)
            back = denormalize_landmarks(normalize_landmarks(lm), w, h)
            scale = np.maximum(np.abs(lm.points), 1.0)
            worst = max(worst, float(np.max(np.abs(back.points - lm.points) / scale)))
        assert worst <= 1e-6


class TestSourceId:
    def test_deterministic_100_calls(self):
        first = derive_source_id("face_00000042", 16)
        for _ in range(100):
            assert (derive_source_id("face_00000042", 16) == first).all()

    @pytest.mark.parametrize("id_bits", [16, 32])
    def test_empty_name_matches_reference(self, id_bits):
        # SHA-256 of the empty string starts 0xE3 0xB0 ...
        got = derive_source_id("", id_bits)
        assert list(got) == source_bits_reference("", id_bits)
        assert list(got[:8]) == [1, 1, 1, -1, -1, -1, 1, 1]  # 0xE3

    @pytest.mark.parametrize("id_bits", [16, 32])
    def test_nearby_names_match_reference(self, id_bits):
        a = derive_source_id("face_001", id_bits)
        b = derive_source_id("face_002", id_bits)
        assert list(a) == source_bits_reference("face_001", id_bits)
        assert list(b) == source_bits_reference("face_002", id_bits)
        assert (a != b).any()

    def test_bipolar_and_length(self):
        for bits in (16, 32):
            sid = derive_source_id("somebody", bits)
            assert sid.shape == (bits,)
            assert np.isin(sid, (-1, 1)).all()
            assert np.abs(sid).sum() == bits

    def test_unsupported_bits(self):
        with pytest.raises(DomainBoundsError):
            derive_source_id("x", 24)

    def test_hex_round_trip(self):
        for bits in (16, 32):
            sid = derive_source_id("roundtrip", bits)
            assert (hex_to_id(id_to_hex(sid), bits) == sid).all()


class TestComposeSplit:
    def test_round_trip(self):
        rng = np.random.default_rng(5)
        vec = rng.uniform(0, 1, 136)
        sid = derive_source_id("rt", 16)
        lm_back, id_back = split_payload(compose_payload(vec, sid))
        assert (lm_back == vec).all()
        assert (id_back == sid).all()

    def test_zero_landmarks_plus_ones(self):
        payload = compose_payload(np.zeros(136), np.ones(16, dtype=np.int8))
        assert payload.shape == (152,)
        assert (payload[:136] == 0).all()
        assert (payload[136:] == 1).all()

    def test_concatenation_index_by_index(self):
        rng = np.random.default_rng(9)
        vec = rng.uniform(0, 1, 136)
        sid = derive_source_id("idx", 32)
        payload = compose_payload(vec, sid)
        assert payload.shape == (168,)
        for i in range(136):
            assert payload[i] == vec[i]
        for i in range(32):
            assert payload[136 + i] == sid[i]

    def test_split_reverse_cases(self):
        lm, sid = split_payload(np.concatenate([np.zeros(136), np.ones(16)]))
        assert (lm == 0).all() and (sid == 1).all()

    def test_bad_length(self):
        with pytest.raises(DimensionMismatchError):
            split_payload(np.zeros(150))

    @given(st.integers(min_value=0, max_value=2**32 - 1), st.sampled_from([16, 32]))
    @settings(max_examples=50, deadline=None)
    def test_compose_split_identity_property(self, seed, bits):
        rng = np.random.default_rng(seed)
        vec = rng.uniform(0, 1, 136)
        sid = derive_source_id(str(seed), bits)
        back_vec, back_id = split_payload(compose_payload(vec, sid))
        assert (back_vec == vec).all() and (back_id == sid).all()


class TestSidecar:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        lm = random_landmarks(rng, 64, 64)
        path = tmp_path / "landmarks.jsonl"
        path.write_text(sidecar_line("a.png", lm) + "\n", encoding="utf-8")
        records = read_sidecar(path)
        assert len(records) == 1
        assert records[0].file == "a.png"
        assert np.allclose(records[0].landmarks.points, lm.points)

    def test_missing_key_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = sidecar_line("a.png", random_landmarks(np.random.default_rng(0), 64, 64))
        path.write_text(good + "\n" + json.dumps({"file": "b.png"}) + "\n", encoding="utf-8")
        with pytest.raises(SidecarFormatError, match="line 2"):
            read_sidecar(path)

    def test_wrong_point_count_reports_line(self):
        obj = {"file": "x.png", "width": 64, "height": 64, "points": [[1, 1]] * 67}
        with pytest.raises(SidecarFormatError, match="68"):
            parse_sidecar_record(obj, line=5)

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text("{not json}\n", encoding="utf-8")
        with pytest.raises(SidecarFormatError, match="line 1"):
            read_sidecar(path)
