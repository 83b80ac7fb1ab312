import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from rcamotion import RcaEngine
from rcamotion.errors import DimensionError, FormatError, SequenceError
from rcamotion.grid import load_params
from rcamotion.seqio import (load_frame, load_manifest, make_paired, motion_output_path, precompute,
                             quantize, read_pgm, save_frame, save_motion_map, write_manifest)


def write_p5(path, arr, maxval=255):
    h, w = arr.shape
    body = arr.astype(">u2" if maxval > 255 else "u1").tobytes()
    path.write_bytes(f"P5\n# note\n{w} {h}\n{maxval}\n".encode() + body)


def test_load_8bit_pgm_scaling(tmp_path):
    write_p5(tmp_path / "a.pgm", np.array([[0, 255, 51]]))
    assert load_frame(tmp_path / "a.pgm").tolist() == [[0.0, 1.0, 0.2]]


def test_load_16bit(tmp_path):
    write_p5(tmp_path / "a.pgm", np.array([[32768, 65535]]), maxval=65535)
    f = load_frame(tmp_path / "a.pgm")
    assert f[0, 0] == 32768 / 65535 and abs(f[0, 0] - 0.500008) < 5e-7 and f[0, 1] == 1.0
    Image.fromarray(np.array([[32768, 0]], dtype=np.uint16)).save(tmp_path / "b.png")
    assert load_frame(tmp_path / "b.png")[0, 0] == 32768 / 65535


def test_load_plain_pgm(tmp_path):
    (tmp_path / "p.pgm").write_text("P2\n# c\n2 2\n255\n0 255\n # x\n 51 102\n")
    assert load_frame(tmp_path / "p.pgm").tolist() == [[0.0, 1.0], [0.2, 0.4]]


def test_png_gray_and_rgb(tmp_path):
    Image.fromarray(np.array([[0, 255]], dtype=np.uint8)).save(tmp_path / "g.png")
    assert load_frame(tmp_path / "g.png").tolist() == [[0.0, 1.0]]
    rgb = np.zeros((1, 2, 3), dtype=np.uint8)
    rgb[0, 0] = (255, 0, 0)
    rgb[0, 1] = (10, 20, 30)
    Image.fromarray(rgb).save(tmp_path / "c.png")
    f = load_frame(tmp_path / "c.png")
    assert abs(f[0, 0] - 0.299) <= 1e-12
    assert abs(f[0, 1] - (0.299 * 10 + 0.587 * 20 + 0.114 * 30) / 255) <= 1e-12


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="missing.pgm"):
        load_frame(tmp_path / "missing.pgm")
    (tmp_path / "x.bmp").write_bytes(b"BM....")
    with pytest.raises(FormatError):
        load_frame(tmp_path / "x.bmp")
    (tmp_path / "z.pgm").write_bytes(b"P5\n0 3\n255\n")
    with pytest.raises(FormatError):
        load_frame(tmp_path / "z.pgm")
    (tmp_path / "t.pgm").write_bytes(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(FormatError):
        load_frame(tmp_path / "t.pgm")


def test_quantize_rounding():
    assert quantize(np.array([254.5, 0.49, 0.5, 1.5, 255.0, 300.0, -1.0])).tolist() == \
        [255, 0, 1, 2, 255, 255, 0]


def test_save_motion_map_round_trip(tmp_path, rng):
    m = rng.random((13, 17)) * 255.0
    for name in ("m.pgm", "m.png"):
        q = save_motion_map(m, tmp_path / name)
        back = np.asarray(Image.open(tmp_path / name))
        assert np.array_equal(back, q)
        values, maxval = read_pgm(tmp_path / name) if name.endswith("pgm") else (back, 255)
        assert np.array_equal(values, q)
    with pytest.raises(FormatError):
        save_motion_map(np.full((2, 2), 256.0), tmp_path / "bad.pgm")
    with pytest.raises(OSError):
        save_motion_map(m, tmp_path / "no" / "such" / "dir" / "m.pgm")


@given(arrays(np.float64, (5, 6), elements=st.floats(0.0, 1.0)))
def test_load_save_fixed_point(tmp_path_factory, frame):
    d = tmp_path_factory.mktemp("fp")
    save_frame(frame, d / "a.pgm")
    once = load_frame(d / "a.pgm")
    save_frame(once, d / "b.pgm")
    assert (d / "a.pgm").read_bytes() == (d / "b.pgm").read_bytes()
    assert np.array_equal(load_frame(d / "b.pgm"), once)


def test_save_frame_16bit(tmp_path):
    f = np.array([[0.0, 0.5, 1.0]])
    save_frame(f, tmp_path / "a.pgm", bits=16)
    assert load_frame(tmp_path / "a.pgm").tolist() == [[0.0, 32768 / 65535, 1.0]]
    with pytest.raises(FormatError):
        save_frame(f, tmp_path / "a.pgm", bits=12)


def test_manifest_parsing(tmp_path):
    (tmp_path / "seq.txt").write_text("# frames\nc.pgm\n\na.pgm  # first\nsub/b.pgm\n")
    man = load_manifest(tmp_path / "seq.txt")
    assert man.sequence_id == "seq"
    assert [p.relative_to(tmp_path).as_posix() for p in man.frame_paths] == ["c.pgm", "a.pgm", "sub/b.pgm"]
    (tmp_path / "c.txt").write_text("# only comments\n\n")
    with pytest.raises(FormatError):
        load_manifest(tmp_path / "c.txt")
    (tmp_path / "d.txt").write_text("a.pgm\n./a.pgm\n")
    with pytest.raises(FormatError):
        load_manifest(tmp_path / "d.txt")


def test_make_paired(rng):
    a, m = rng.random((4, 5)), rng.random((4, 5)) * 255
    ps = make_paired(a, m)
    assert ps.appearance.shape == ps.motion.shape == (4, 5, 3)
    assert ps.motion.dtype == np.uint8
    assert np.array_equal(ps.motion[..., 0], ps.motion[..., 1])
    assert np.array_equal(ps.motion[..., 1], ps.motion[..., 2])
    assert np.array_equal(ps.motion[..., 0], quantize(m))
    with pytest.raises(DimensionError):
        make_paired(a, m[:, :4])


def test_motion_output_path(tmp_path):
    out = motion_output_path(tmp_path / "in" / "sub" / "x.pgm", tmp_path / "in", tmp_path / "out")
    assert out == tmp_path / "out" / "sub" / "x_motion.pgm"


def test_precompute_follows_manifest_order(tmp_path, rng):
    frames = [rng.random((16, 16)) for _ in range(4)]
    names = ["z.pgm", "b.pgm", "m.pgm", "a.pgm"]  # deliberately not sorted
    for f, n in zip(frames, names):
        save_frame(f, tmp_path / n)
    write_manifest(tmp_path / "s.txt", names)
    outputs, trace = precompute(load_manifest(tmp_path / "s.txt"), tmp_path / "out", trace_frame=2)
    assert [p.name for p in outputs] == [n.replace(".pgm", "_motion.pgm") for n in names]
    expected = RcaEngine().process_sequence([load_frame(tmp_path / n) for n in names])
    for p, e in zip(outputs, expected):
        assert np.array_equal(read_pgm(p)[0], quantize(e))
    assert trace.t == 2
    assert load_params(tmp_path / "out" / "params.txt") == RcaEngine().params


def test_precompute_shape_change(tmp_path):
    save_frame(np.zeros((8, 8)), tmp_path / "a.pgm")
    save_frame(np.zeros((8, 9)), tmp_path / "b.pgm")
    write_manifest(tmp_path / "s.txt", ["a.pgm", "b.pgm"])
    with pytest.raises(SequenceError):
        precompute(load_manifest(tmp_path / "s.txt"), tmp_path / "out")
