"""Image codecs, bilinear resize, dataset scanning and splitting."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from uwnet import data


def tensor_from_uint8(pixels: np.ndarray) -> np.ndarray:
    return pixels.transpose(2, 0, 1)[None].astype(np.float32) / 255.0


# ---------------------------------------------------------------------------
# ppm codec


def test_ppm_round_trip_bytes_and_values():
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
    t = tensor_from_uint8(pixels)
    blob = data.encode_ppm(t)
    decoded = data.decode_ppm(blob)
    np.testing.assert_array_equal(decoded, t)
    assert data.encode_ppm(decoded) == blob


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_ppm_round_trip_random(h, w, seed):
    pixels = np.random.default_rng(seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    t = tensor_from_uint8(pixels)
    np.testing.assert_array_equal(data.decode_ppm(data.encode_ppm(t)), t)


def test_ppm_header_comments_and_whitespace():
    payload = bytes(range(12))
    blob = b"P6 # inline comment\n# full line\n 2\t2 \n255\n" + payload
    decoded = data.decode_ppm(blob)
    assert decoded.shape == (1, 3, 2, 2)
    expect = np.frombuffer(payload, dtype=np.uint8).reshape(2, 2, 3)
    np.testing.assert_array_equal(decoded, tensor_from_uint8(expect))


def test_ppm_rejects_bad_magic():
    with pytest.raises(data.ImageFormatError):
        data.decode_ppm(b"P5\n2 2\n255\n" + b"\x00" * 4)


def test_ppm_rejects_wide_maxval():
    with pytest.raises(data.ImageFormatError) as info:
        data.decode_ppm(b"P6\n2 2\n65535\n" + b"\x00" * 24)
    assert "255" in str(info.value)


def test_ppm_rejects_nonsense_header():
    with pytest.raises(data.ImageFormatError):
        data.decode_ppm(b"P6\ntwo 2\n255\n" + b"\x00" * 12)
    with pytest.raises(data.ImageFormatError):
        data.decode_ppm(b"P6\n0 2\n255\n")


def test_ppm_truncated_payload_reports_offset():
    full = data.encode_ppm(tensor_from_uint8(np.zeros((4, 4, 3), dtype=np.uint8)))
    with pytest.raises(data.ImageFormatError) as info:
        data.decode_ppm(full[:-10])
    assert info.value.offset == len(full) - 10
    assert "byte" in str(info.value)


def test_ppm_truncated_header_reports_offset():
    with pytest.raises(data.ImageFormatError) as info:
        data.decode_ppm(b"P6\n2 ")
    assert info.value.offset is not None


def test_encode_clamps_out_of_range():
    t = np.array([[[[-0.5, 2.0]], [[0.0, 1.0]], [[0.25, 0.75]]]], dtype=np.float32)
    blob = data.encode_ppm(t)
    decoded = data.decode_ppm(blob)
    assert decoded[0, 0, 0, 0] == 0.0
    assert decoded[0, 0, 0, 1] == 1.0


def test_encode_rejects_bad_layout():
    with pytest.raises(Exception):
        data.encode_ppm(np.zeros((3, 4, 4), dtype=np.float32))
    with pytest.raises(Exception):
        data.encode_ppm(np.zeros((1, 1, 4, 4), dtype=np.float32))


# ---------------------------------------------------------------------------
# container sniffing


def test_decode_image_dispatches_on_magic(tmp_path):
    pixels = np.random.default_rng(1).integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
    t = tensor_from_uint8(pixels)
    png = data.encode_image(t, "png")
    assert png[:4] == b"\x89PNG"
    np.testing.assert_array_equal(data.decode_image(png), t)  # png is lossless
    jpg = data.encode_image(t, "jpg")
    assert jpg[:2] == b"\xff\xd8"
    out = data.decode_image(jpg)  # jpeg is lossy; check the envelope only
    assert out.shape == t.shape
    assert out.dtype == np.float32
    assert 0.0 <= out.min() and out.max() <= 1.0


def test_decode_image_rejects_unknown_container():
    with pytest.raises(data.ImageFormatError):
        data.decode_image(b"GIF89a....")


def test_read_write_image_by_extension(tmp_path):
    pixels = np.random.default_rng(2).integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    t = tensor_from_uint8(pixels)
    for name in ("a.ppm", "b.png"):
        path = tmp_path / name
        data.write_image(path, t)
        np.testing.assert_array_equal(data.read_image(path), t)


# ---------------------------------------------------------------------------
# resize


def test_resize_same_size_is_exact_identity():
    t = np.random.default_rng(3).random((1, 3, 9, 13), dtype=np.float32)
    out = data.resize_bilinear(t, 9, 13)
    np.testing.assert_array_equal(out, t)


def test_resize_constant_stays_constant():
    t = np.full((1, 3, 10, 10), 0.37, dtype=np.float32)
    out = data.resize_bilinear(t, 4, 7)
    np.testing.assert_allclose(out, 0.37, rtol=1e-6)


def test_resize_matches_loop_oracle():
    rng = np.random.default_rng(4)
    for th, tw in [(4, 4), (7, 3), (12, 10), (5, 9)]:
        t = rng.random((1, 2, 6, 8))
        got = data.resize_bilinear(t, th, tw)
        want = oracles.resize_bilinear_simple(t, th, tw)
        np.testing.assert_allclose(got, want, atol=1e-6)


def test_resize_preserves_dtype():
    t = np.zeros((1, 3, 4, 4), dtype=np.float32)
    assert data.resize_bilinear(t, 8, 8).dtype == np.float32
    assert data.resize_bilinear(t.astype(np.float64), 8, 8).dtype == np.float64


def test_resize_rejects_bad_target():
    with pytest.raises(ValueError):
        data.resize_bilinear(np.zeros((1, 3, 4, 4), dtype=np.float32), 0, 4)


# ---------------------------------------------------------------------------
# scanning and splitting


def write_pixels(path, seed, size=6):
    pixels = np.random.default_rng(seed).integers(0, 256, size=(size, size, 3), dtype=np.uint8)
    data.write_image(path, tensor_from_uint8(pixels))


@pytest.fixture()
def dataset_root(tmp_path):
    (tmp_path / "raw").mkdir()
    (tmp_path / "ref").mkdir()
    for i in range(4):
        write_pixels(tmp_path / "raw" / f"p{i}.ppm", seed=i)
        write_pixels(tmp_path / "ref" / f"p{i}.ppm", seed=100 + i)
    return tmp_path


def test_scan_pairs_by_stem(dataset_root):
    m = data.scan_dataset(dataset_root)
    assert m.ids == ["p0", "p1", "p2", "p3"]
    assert not m.warnings
    assert m.pairs["p2"]["raw"].name == "p2.ppm"


def test_scan_warns_on_unmatched_files(dataset_root):
    write_pixels(dataset_root / "raw" / "orphan.ppm", seed=50)
    m = data.scan_dataset(dataset_root)
    assert m.ids == ["p0", "p1", "p2", "p3"]
    assert any("orphan" in w for w in m.warnings)


def test_scan_duplicate_stem_prefers_png(dataset_root):
    write_pixels(dataset_root / "raw" / "p0.png", seed=60)
    m = data.scan_dataset(dataset_root)
    assert m.pairs["p0"]["raw"].suffix == ".png"
    assert any("p0" in w and "ignoring" in w for w in m.warnings)


def test_scan_missing_directory(tmp_path):
    (tmp_path / "raw").mkdir()
    with pytest.raises(data.DatasetError) as info:
        data.scan_dataset(tmp_path)
    assert "reference" in str(info.value)


def test_scan_empty_intersection(tmp_path):
    (tmp_path / "raw").mkdir()
    (tmp_path / "ref").mkdir()
    write_pixels(tmp_path / "raw" / "a.ppm", seed=0)
    write_pixels(tmp_path / "ref" / "b.ppm", seed=1)
    with pytest.raises(data.EmptyDatasetError):
        data.scan_dataset(tmp_path)


def test_manifest_json_overrides_scan(dataset_root):
    (dataset_root / "manifest.json").write_text(
        '{"pairs": [{"id": "only", "raw": "raw/p0.ppm", "ref": "ref/p3.ppm"}],'
        ' "split_seed": 9}'
    )
    m = data.scan_dataset(dataset_root)
    assert m.ids == ["only"]
    assert m.split_seed == 9
    assert m.pairs["only"]["ref"].name == "p3.ppm"


def test_manifest_json_missing_file_rejected(dataset_root):
    (dataset_root / "manifest.json").write_text(
        '{"pairs": [{"id": "x", "raw": "raw/p0.ppm", "ref": "ref/nope.ppm"}]}'
    )
    with pytest.raises(data.DatasetError):
        data.scan_dataset(dataset_root)


def test_manifest_json_duplicate_id_rejected(dataset_root):
    entry = '{"id": "x", "raw": "raw/p0.ppm", "ref": "ref/p0.ppm"}'
    (dataset_root / "manifest.json").write_text(f'{{"pairs": [{entry}, {entry}]}}')
    with pytest.raises(data.DatasetError):
        data.scan_dataset(dataset_root)


def test_split_is_seeded_partition(dataset_root):
    m = data.scan_dataset(dataset_root)
    s1 = data.split(m, train_n=2, val_n=1, seed=5)
    s2 = data.split(m, train_n=2, val_n=1, seed=5)
    assert s1.assignments == s2.assignments
    assert len(s1.split_ids("train")) == 2
    assert len(s1.split_ids("val")) == 1
    assert len(s1.split_ids("test")) == 1
    assert sorted(
        s1.split_ids("train") + s1.split_ids("val") + s1.split_ids("test")
    ) == m.ids
    assert s1.split_seed == 5


def test_split_rejects_overdraw(dataset_root):
    m = data.scan_dataset(dataset_root)
    with pytest.raises(data.DatasetError):
        data.split(m, train_n=4, val_n=1, seed=0)


def test_load_pair_resizes_to_target(dataset_root):
    import dataclasses

    m = data.scan_dataset(dataset_root)
    m = dataclasses.replace(m, resize_target=(8, 10))
    pair = data.load_pair(m, "p1")
    assert pair.raw.shape == (1, 3, 8, 10)
    assert pair.reference.shape == (1, 3, 8, 10)


def test_load_pair_size_mismatch_without_resize(tmp_path):
    import dataclasses

    (tmp_path / "raw").mkdir()
    (tmp_path / "ref").mkdir()
    write_pixels(tmp_path / "raw" / "a.ppm", seed=0, size=6)
    write_pixels(tmp_path / "ref" / "a.ppm", seed=1, size=8)
    m = data.scan_dataset(tmp_path)
    m = dataclasses.replace(m, resize_target=None)
    with pytest.raises(data.DatasetError):
        data.load_pair(m, "a")
