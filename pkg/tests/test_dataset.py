import numpy as np
import pytest

from lidmark._face_template import FACE_TEMPLATE_68
from lidmark.dataset import (
    DatasetRecord,
    JitterSpec,
    SyntheticFaceParams,
    generate_dataset,
    generate_synthetic_face,
    load_dataset,
    split_dataset,
    write_dataset,
)
from lidmark.errors import SidecarFormatError


class TestGenerator:
    def test_same_seed_bitwise_identical(self):
        a = generate_synthetic_face(SyntheticFaceParams(seed=13))
        b = generate_synthetic_face(SyntheticFaceParams(seed=13))
        assert (a.image.data == b.image.data).all()
        assert (a.landmarks.points == b.landmarks.points).all()
        assert a.source_name == b.source_name

    def test_zero_jitter_landmarks_equal_template(self):
        params = SyntheticFaceParams(seed=1, canvas=128, jitter=JitterSpec(0.0, 0.0, 0.0))
        rec = generate_synthetic_face(params)
        assert np.allclose(rec.landmarks.points, FACE_TEMPLATE_68 * 128)

    def test_seed_sweep_in_bounds(self):
        for seed in range(100):
            rec = generate_synthetic_face(SyntheticFaceParams(seed=seed))
            s = rec.landmarks.width
            # exhaustive bounds oracle
            for x, y in rec.landmarks.points:
                assert 0.0 < x < s and 0.0 < y < s

    def test_canvas_sizes(self):
        for size in (64, 128):
            rec = generate_synthetic_face(SyntheticFaceParams(seed=0, canvas=size))
            assert rec.image.data.shape == (3, size, size)
            assert rec.landmarks.width == size

    def test_different_seeds_differ(self):
        a = generate_synthetic_face(SyntheticFaceParams(seed=0))
        b = generate_synthetic_face(SyntheticFaceParams(seed=1))
        assert (a.image.data != b.image.data).any()


class TestSplit:
    def test_all_train(self):
        records = list(range(10))
        train, val, test = split_dataset(records, (1.0, 0.0, 0.0), seed=0)
        assert sorted(train) == records and val == [] and test == []

    def test_floor_then_distribute(self):
        train, val, test = split_dataset(list(range(10)), (0.8, 0.1, 0.1), seed=3)
        assert (len(train), len(val), len(test)) == (8, 1, 1)

    def test_disjoint_and_exhaustive(self):
        records = list(range(37))
        parts = split_dataset(records, (0.6, 0.25, 0.15), seed=5)
        merged = sorted(x for part in parts for x in part)
        assert merged == records
        assert len(set(parts[0]) & set(parts[1])) == 0
        assert len(set(parts[1]) & set(parts[2])) == 0

    def test_matches_permutation_oracle(self):
        n, seed = 23, 17
        records = list(range(n))
        parts = split_dataset(records, (0.5, 0.3, 0.2), seed=seed)
        # independent oracle: same generator contract, own partition arithmetic
        perm = list(np.random.default_rng(seed).permutation(n))
        raw = [n * 0.5, n * 0.3, n * 0.2]
        sizes = [int(v) for v in raw]
        fracs = [v - s for v, s in zip(raw, sizes)]
        while sum(sizes) < n:
            k = fracs.index(max(fracs))
            sizes[k] += 1
            fracs[k] = -1
        expected = [perm[: sizes[0]], perm[sizes[0] : sizes[0] + sizes[1]], perm[sizes[0] + sizes[1] :]]
        for part, exp in zip(parts, expected):
            assert part == exp

    def test_bad_fractions(self):
        from lidmark.errors import DomainBoundsError

        with pytest.raises(DomainBoundsError):
            split_dataset([1, 2], (0.5, 0.2, 0.2), seed=0)

    def test_empty_partition_warns(self):
        with pytest.warns(UserWarning):
            split_dataset(list(range(3)), (0.9, 0.05, 0.05), seed=0)


class TestIO:
    def test_write_then_load(self, tmp_path):
        records = generate_dataset(count=4, canvas=64, seed=100)
        sidecar = write_dataset(records, tmp_path)
        loaded = load_dataset(tmp_path, sidecar)
        assert [r.source_name for r in loaded] == sorted(r.source_name for r in records)
        by_name = {r.source_name: r for r in records}
        for rec in loaded:
            orig = by_name[rec.source_name]
            assert np.allclose(rec.landmarks.points, orig.landmarks.points)
            # PNG round trip is exact: the renderer emits quantized pixels
            assert (rec.image.data == orig.image.data).all()

    def test_missing_image_error(self, tmp_path):
        records = generate_dataset(count=2, canvas=64, seed=0)
        sidecar = write_dataset(records, tmp_path)
        (tmp_path / f"{records[0].source_name}.png").unlink()
        with pytest.raises(SidecarFormatError, match="not found"):
            load_dataset(tmp_path, sidecar)

    def test_malformed_record_line_number(self, tmp_path):
        records = generate_dataset(count=1, canvas=64, seed=0)
        sidecar = write_dataset(records, tmp_path)
        with open(sidecar, "a", encoding="utf-8") as fh:
            fh.write('{"file": "x.png", "width": 64}\n')
        with pytest.raises(SidecarFormatError, match="line 2"):
            load_dataset(tmp_path, sidecar)

    def test_size_mismatch_error(self, tmp_path):
        records = generate_dataset(count=1, canvas=64, seed=0)
        write_dataset(records, tmp_path)
        bad = DatasetRecord(
            image=records[0].image,
            landmarks=type(records[0].landmarks)(
                points=records[0].landmarks.points / 2, width=32, height=32
            ),
            source_name=records[0].source_name,
        )
        from lidmark.payload import sidecar_line

        sidecar = tmp_path / "landmarks.jsonl"
        sidecar.write_text(
            sidecar_line(f"{bad.source_name}.png", bad.landmarks) + "\n", encoding="utf-8"
        )
        with pytest.raises(SidecarFormatError, match="64x64"):
            load_dataset(tmp_path, sidecar)
