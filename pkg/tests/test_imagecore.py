import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from stemseg.imagecore import (
    DimensionMismatchError,
    LabelMapError,
    MultiChannelImageError,
    UnreadableImageError,
    UnsupportedBitDepthError,
    compact_labels,
    compute_histogram,
    image_stats,
    is_compact,
    load_image,
    load_labels,
    quantize,
    read_histogram_csv,
    save_image,
    save_labels,
    write_histogram_csv,
)
from stemseg.scenesim import SceneSpec, simulate

unit_images = arrays(
    np.float64,
    st.tuples(st.integers(1, 12), st.integers(1, 12)),
    elements=st.floats(0.0, 1.0, allow_nan=False),
)


def _write_pgm(path, arr, maxval):
    h, w = arr.shape
    dtype = "u1" if maxval == 255 else ">u2"
    path.write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + arr.astype(dtype).tobytes())


# --- load / save ------------------------------------------------------------

def test_pgm_8bit_extremes(tmp_path):
    p = tmp_path / "a.pgm"
    _write_pgm(p, np.full((4, 5), 255), 255)
    assert np.array_equal(load_image(p), np.ones((4, 5)))
    _write_pgm(p, np.zeros((4, 5)), 255)
    assert np.array_equal(load_image(p), np.zeros((4, 5)))


def test_png16_pixel_value(tmp_path):
    p = tmp_path / "a.png"
    arr = np.zeros((3, 3), dtype=np.uint16)
    arr[1, 1] = 32768
    Image.fromarray(arr).save(p)
    img = load_image(p)
    assert img[1, 1] == 32768 / 65535
    assert img[1, 1] == pytest.approx(0.50001, abs=1e-5)


def test_pgm_with_comment_and_16bit(tmp_path):
    p = tmp_path / "c.pgm"
    raw = np.array([[0, 1000], [65535, 7]], dtype=">u2")
    p.write_bytes(b"P5\n# made by hand\n2 2\n65535\n" + raw.tobytes())
    assert np.array_equal(load_image(p), raw.astype(float) / 65535)


def test_save_midpoint_rounds_half_up(tmp_path):
    p = tmp_path / "half.png"
    save_image(np.full((2, 2), 0.5), p, depth=8)
    assert np.all(np.asarray(Image.open(p)) == 128)
    p16 = tmp_path / "one.png"
    save_image(np.ones((2, 2)), p16, depth=16)
    assert np.all(np.asarray(Image.open(p16)) == 65535)


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
@pytest.mark.parametrize("depth", [8, 16])
def test_round_trip_error_bound(tmp_path, suffix, depth):
    img = np.random.default_rng(1).random((37, 29))
    p = tmp_path / f"r{suffix}"
    save_image(img, p, depth=depth)
    back = load_image(p)
    step = 1.0 / (2 ** depth - 1)
    # half a step from rounding, plus float slack
    assert np.max(np.abs(back - img)) <= 0.5 * step + 1e-12
    assert np.max(np.abs(back - img)) <= step


@settings(max_examples=40, deadline=None)
@given(unit_images)
def test_round_trip_property(tmp_path_factory, img):
    p = tmp_path_factory.mktemp("rt") / "x.png"
    save_image(img, p, depth=16)
    assert np.max(np.abs(load_image(p) - img)) <= 1 / 65535


def test_load_errors_are_distinct(tmp_path):
    missing = tmp_path / "nope.png"
    with pytest.raises(UnreadableImageError):
        load_image(missing)
    junk = tmp_path / "junk.png"
    junk.write_bytes(b"not an image at all")
    with pytest.raises(UnreadableImageError):
        load_image(junk)
    rgb = tmp_path / "rgb.png"
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(rgb)
    with pytest.raises(MultiChannelImageError):
        load_image(rgb)
    ppm = tmp_path / "c.ppm"
    ppm.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(MultiChannelImageError):
        load_image(ppm)
    one_bit = tmp_path / "bw.png"
    Image.fromarray(np.zeros((4, 4), dtype=bool)).save(one_bit)
    with pytest.raises(UnsupportedBitDepthError):
        load_image(one_bit)


def test_unwritable_path(tmp_path):
    with pytest.raises(Exception) as info:
        save_image(np.zeros((2, 2)), tmp_path / "no_such_dir" / "x.png")
    assert "no_such_dir" in str(info.value)
    with pytest.raises(UnsupportedBitDepthError):
        save_image(np.zeros((2, 2)), tmp_path / "x.png", depth=12)


def test_provenance_text_chunk(tmp_path):
    p = tmp_path / "prov.png"
    save_image(np.zeros((2, 2)), p, provenance={"seed": 3})
    assert '"seed": 3' in Image.open(p).text["provenance"]


# --- label maps ---------------------------------------------------------------

def test_label_round_trip_and_compaction(tmp_path):
    labels = np.array([[0, 1, 1], [2, 0, 3]])
    p = tmp_path / "l.png"
    save_labels(labels, p)
    assert np.array_equal(load_labels(p), labels)

    gappy = np.array([[0, 5, 5], [9, 0, 5]])
    save_labels(gappy, p)
    with pytest.raises(LabelMapError):
        load_labels(p)
    fixed = load_labels(p, compact=True)
    assert np.array_equal(fixed, np.array([[0, 1, 1], [2, 0, 1]]))


@given(arrays(np.int64, (6, 7), elements=st.integers(0, 20)))
def test_compact_labels_property(labels):
    out = compact_labels(labels)
    assert is_compact(out)
    assert np.array_equal(out == 0, labels == 0)
    # same partition, same order
    for a, b in zip(np.unique(labels[labels > 0]), range(1, 100)):
        assert np.array_equal(labels == a, out == b)


# --- histogram ----------------------------------------------------------------

def test_histogram_constant_and_two_spikes():
    h = compute_histogram(np.full((5, 5), 128 / 255))
    assert h[128] == 25 and h.sum() == 25 and len(h) == 256
    img = np.zeros((4, 4))
    img[:, 2:] = 1.0
    h = compute_histogram(img)
    assert h[0] == 8 and h[255] == 8 and h.sum() == 16


@given(unit_images)
def test_histogram_conservation(img):
    h = compute_histogram(img)
    assert h.sum() == img.size
    assert len(h) == 256


def test_histogram_bin_rule():
    vals = np.linspace(0, 1, 1001)
    for v in vals:
        b = int(np.argmax(compute_histogram(np.array([[v]]))))
        assert b == min(max(int(np.floor(v * 255 + 0.5)), 0), 255)


def test_histogram_csv_round_trip(tmp_path):
    h = compute_histogram(np.random.default_rng(0).random((20, 20)))
    p = tmp_path / "h.csv"
    write_histogram_csv(h, p)
    assert p.read_text().splitlines()[0] == "bin,count"
    assert np.array_equal(read_histogram_csv(p), h)


def test_noise_free_scene_histogram_peak_near_bright_end():
    scene = simulate(SceneSpec(seed=7, shot_noise=False))
    h = compute_histogram(scene.noisy)
    fg_levels = quantize(scene.noisy)[scene.truth > 0]
    signal = np.bincount(fg_levels, minlength=256)
    mode = int(np.argmax(signal))
    assert 230 <= mode <= 255
    assert h[mode] >= signal[mode]


# --- stats --------------------------------------------------------------------

def test_stats_constant_and_checkerboard():
    s = image_stats(np.full((3, 3), 0.4))
    assert s.std == 0 and s.mean == s.min == s.max == pytest.approx(0.4)
    cb = (np.indices((8, 8)).sum(axis=0) % 2).astype(float)
    s = image_stats(cb)
    assert s.mean == 0.5 and s.std == 0.5


def test_stats_selectors_and_mismatch():
    img = np.array([[0.0, 1.0], [0.5, 0.5]])
    mask = np.array([[0, 1], [0, 0]])
    assert image_stats(img, mask, "foreground").mean == 1.0
    assert image_stats(img, mask, "background").mean == pytest.approx(1 / 3)
    with pytest.raises(DimensionMismatchError):
        image_stats(img, np.zeros((3, 3), dtype=int))


@given(arrays(np.float64, (5, 6), elements=st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0])))
def test_population_std_identity(img):
    s = image_stats(img)
    assert abs(s.std ** 2 - (np.mean(img ** 2) - np.mean(img) ** 2)) < 1e-9


def test_background_std_tracks_injected_sigma():
    spec = SceneSpec(seed=3, target_snr=7.487)
    scene = simulate(spec)
    bg = image_stats(scene.noisy, scene.truth, "background")
    assert abs(bg.std - scene.noise.sigma_gaussian) / scene.noise.sigma_gaussian < 0.05
