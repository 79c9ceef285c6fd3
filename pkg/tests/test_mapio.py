"""File formats and validators: bit-exact round trips, honest rejections."""

import json
import struct

import numpy as np
import pytest

from nucleitk import mapio


def test_instance_png_round_trip_extremes(tmp_path):
    labels = np.zeros((5, 7), dtype=np.uint16)
    labels[0, 0] = 1
    labels[2, 3] = 40000
    labels[4, 6] = 65535
    path = tmp_path / "inst.png"
    mapio.write_label_map(labels, path, "instance")
    back = mapio.read_label_map(path, "instance")
    assert back.dtype == np.uint16
    assert np.array_equal(back, labels)


def test_instance_png_is_16_bit_grayscale(tmp_path):
    path = tmp_path / "inst.png"
    mapio.write_label_map(np.ones((4, 4), dtype=np.uint16), path, "instance")
    head = path.read_bytes()[:26]
    assert head[:8] == b"\x89PNG\r\n\x1a\n"
    width, height = struct.unpack(">II", head[16:24])
    assert (height, width) == (4, 4)
    assert head[24] == 16  # bit depth
    assert head[25] == 0   # grayscale


def test_class_and_direction_pngs_are_8_bit(tmp_path):
    cpath = tmp_path / "cls.png"
    dpath = tmp_path / "dir.png"
    classes = np.array([[0, 6], [3, 1]], dtype=np.uint8)
    dirs = np.array([[255, 0], [3, 2]], dtype=np.uint8)
    mapio.write_label_map(classes, cpath, "class")
    mapio.write_label_map(dirs, dpath, "direction", 4)
    assert cpath.read_bytes()[24] == 8
    assert np.array_equal(mapio.read_label_map(cpath, "class"), classes)
    assert np.array_equal(mapio.read_label_map(dpath, "direction", 4), dirs)


def test_direction_round_trip_keeps_sentinel(tmp_path):
    dirs = np.full((3, 3), 255, dtype=np.uint8)
    path = tmp_path / "dir.png"
    mapio.write_label_map(dirs, path, "direction", 4)
    assert np.array_equal(mapio.read_label_map(path, "direction", 4), dirs)


def test_read_rejects_wrong_depth(tmp_path):
    path = tmp_path / "x.png"
    mapio.write_label_map(np.zeros((2, 2), dtype=np.uint8), path, "class")
    with pytest.raises(ValueError, match="16-bit"):
        mapio.read_label_map(path, "instance")
    path2 = tmp_path / "y.png"
    mapio.write_label_map(np.zeros((2, 2), dtype=np.uint16), path2, "instance")
    with pytest.raises(ValueError, match="8-bit"):
        mapio.read_label_map(path2, "class")


def test_read_rejects_non_png(tmp_path):
    path = tmp_path / "junk.png"
    path.write_bytes(b"definitely not a png file, only bytes")
    with pytest.raises(ValueError, match="not a PNG"):
        mapio.read_label_map(path, "class")


def test_read_rejects_color_png(tmp_path):
    from PIL import Image
    path = tmp_path / "rgb.png"
    Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8), mode="RGB").save(path)
    with pytest.raises(ValueError, match="color type"):
        mapio.read_label_map(path, "class")


def test_read_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        mapio.read_label_map(tmp_path / "nope.png", "instance")


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ValueError, match="kind"):
        mapio.write_label_map(np.zeros((2, 2), dtype=np.uint8), tmp_path / "x.png",
                              "semantic")


def test_validate_class_map_names_first_offender():
    labels = np.zeros((4, 4), dtype=np.uint8)
    labels[2, 1] = 7
    labels[3, 3] = 9
    with pytest.raises(ValueError, match=r"value 7 at pixel \(2, 1\)"):
        mapio.validate_class_map(labels)


def test_validate_direction_map_bounds():
    labels = np.full((2, 2), 255, dtype=np.uint8)
    mapio.validate_direction_map(labels, 4)
    labels[0, 1] = 4
    with pytest.raises(ValueError, match=r"value 4 at pixel \(0, 1\)"):
        mapio.validate_direction_map(labels, 4)
    # without N only the 0..255 range is checkable
    mapio.validate_direction_map(labels.astype(np.int64))
    with pytest.raises(ValueError):
        mapio.validate_direction_map(labels.astype(np.int64) - 300)


def test_validate_rejects_floats_and_bad_shapes():
    with pytest.raises(ValueError, match="integer"):
        mapio.validate_instance_map(np.zeros((2, 2), dtype=np.float32))
    with pytest.raises(ValueError, match="2-D"):
        mapio.validate_class_map(np.zeros((2, 2, 2), dtype=np.uint8))


def test_validate_prob_tensor_normalization():
    good = np.full((2, 2, 7), 1.0 / 7.0, dtype=np.float32)
    mapio.validate_prob_tensor(good, normalized=True)
    off = good.copy()
    off[0, 0, 0] += 1e-3
    with pytest.raises(ValueError, match="not normalized"):
        mapio.validate_prob_tensor(off, normalized=True)
    neg = good.copy()
    neg[1, 1, 2] = -0.01
    neg[1, 1, 3] += 0.01
    with pytest.raises(ValueError, match="negative"):
        mapio.validate_prob_tensor(neg, normalized=True)
    # small drift inside the 1e-5 budget is fine
    drift = good.astype(np.float64)
    drift[0, 0, :] += 9e-6 / 7.0
    mapio.validate_prob_tensor(drift, normalized=True)


def test_tensor_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.random((5, 4, 7), dtype=np.float32)
    path = tmp_path / "t.f32"
    mapio.write_tensor(values, path)
    back = mapio.read_tensor(path)
    assert back.dtype == np.float32
    assert back.tobytes() == values.tobytes()


def test_tensor_payload_layout(tmp_path):
    # 2x2x7 zeros -> exactly 112 little-endian float32 bytes
    path = tmp_path / "z.f32"
    mapio.write_tensor(np.zeros((2, 2, 7), dtype=np.float32), path)
    assert path.stat().st_size == 2 * 2 * 7 * 4 == 112
    header = json.loads((tmp_path / "z.f32.json").read_text())
    assert header == {"height": 2, "width": 2, "channels": 7}
    # row-major channel-last: byte offset of [r, c, k] is ((r*W + c)*C + k)*4
    values = np.zeros((2, 3, 2), dtype=np.float32)
    values[1, 2, 1] = 5.0
    mapio.write_tensor(values, path)
    payload = path.read_bytes()
    offset = ((1 * 3 + 2) * 2 + 1) * 4
    assert struct.unpack_from("<f", payload, offset)[0] == 5.0


def test_tensor_header_mismatch(tmp_path):
    path = tmp_path / "t.f32"
    mapio.write_tensor(np.zeros((2, 2, 3), dtype=np.float32), path)
    (tmp_path / "t.f32.json").write_text(json.dumps(
        {"height": 2, "width": 2, "channels": 4}))
    with pytest.raises(ValueError, match="header implies"):
        mapio.read_tensor(path)


def test_tensor_missing_header(tmp_path):
    path = tmp_path / "t.f32"
    path.write_bytes(b"\x00" * 16)
    with pytest.raises(FileNotFoundError, match="header"):
        mapio.read_tensor(path)


def test_tensor_rejects_non_finite():
    bad = np.zeros((2, 2, 2), dtype=np.float32)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="finite"):
        mapio.validate_prob_tensor(bad)


def test_counts_csv_round_trip(tmp_path):
    rows = [("img1", np.array([0, 3, 0, 1, 1, 3], dtype=np.float64)),
            ("img2", np.array([-0.4, 2.6, 0.0, 1.2, 0.5, 3.0]))]
    path = tmp_path / "counts.csv"
    mapio.write_counts(rows, path)
    text = path.read_text()
    assert text.splitlines()[0] == \
        "image,neutrophil,epithelial,lymphocyte,plasma,eosinophil,connective"
    assert text.splitlines()[1] == "img1,0,3,0,1,1,3"
    back = mapio.read_counts(path)
    assert [name for name, _ in back] == ["img1", "img2"]
    for (_, got), (_, want) in zip(back, rows):
        assert np.array_equal(got, want)


def test_counts_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("image,a,b,c,d,e,f\nimg1,0,0,0,0,0,0\n")
    with pytest.raises(ValueError, match="bad header"):
        mapio.read_counts(path)


def test_counts_csv_names_bad_line(tmp_path):
    path = tmp_path / "c.csv"
    mapio.write_counts([("a", np.zeros(6))], path)
    with open(path, "a") as fh:
        fh.write("b,1,2,three,4,5,6\n")
    with pytest.raises(ValueError, match="line 3"):
        mapio.read_counts(path)
    path.write_text("image,neutrophil,epithelial,lymphocyte,plasma,eosinophil,"
                    "connective\nshort,1,2\n")
    with pytest.raises(ValueError, match="line 2"):
        mapio.read_counts(path)


def test_counts_csv_empty_file(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        mapio.read_counts(path)


def test_validate_counts_shape_and_finiteness():
    with pytest.raises(ValueError, match="6 entries"):
        mapio.validate_counts(np.zeros(5))
    with pytest.raises(ValueError, match="finite"):
        mapio.validate_counts(np.array([1, 2, 3, np.inf, 5, 6]))
