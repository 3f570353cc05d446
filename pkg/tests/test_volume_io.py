import numpy as np
import pytest

from graindiagrams.pipeline import synth
from graindiagrams.volume_io import (GrainScan, VolumeFormatError, export_slice, label_colors,
                                     load_scan, read_ppm, save_scan, voxel_centers)


def _roundtrip(scan, tmp_path):
    save_scan(scan, tmp_path / "s.json", tmp_path / "s.raw")
    return load_scan(tmp_path / "s.json", tmp_path / "s.raw")


def test_load_small_example(tmp_path):
    scan = GrainScan((2, 2, 1), (1, 1, 1), np.array([1, 1, 2, 2]), k=2)
    back = _roundtrip(scan, tmp_path)
    assert back == scan
    assert back.kappa().tolist() == [2, 2]
    assert back.labels.tolist() == [1, 1, 2, 2]


def test_short_data_file_is_size_mismatch(tmp_path):
    scan = GrainScan((2, 2, 1), (1, 1, 1), np.array([1, 1, 2, 2]), k=2)
    save_scan(scan, tmp_path / "s.json", tmp_path / "s.raw")
    raw = (tmp_path / "s.raw").read_bytes()
    (tmp_path / "s.raw").write_bytes(raw[:-1])
    with pytest.raises(VolumeFormatError, match="size mismatch"):
        load_scan(tmp_path / "s.json", tmp_path / "s.raw")


def test_invalid_labels_rejected():
    with pytest.raises(VolumeFormatError):
        GrainScan((2, 1, 1), (1, 1, 1), np.array([0, 1]))
    with pytest.raises(VolumeFormatError):
        GrainScan((2, 1, 1), (1, 1, 1), np.array([1, 3]), k=2)


def test_k_inferred_when_header_omits_it(tmp_path):
    import json
    scan = GrainScan((2, 2, 1), (1, 1, 1), np.array([1, 3, 2, 2]))
    save_scan(scan, tmp_path / "s.json", tmp_path / "s.raw")
    header = json.loads((tmp_path / "s.json").read_text())
    del header["k"]
    (tmp_path / "s.json").write_text(json.dumps(header))
    assert load_scan(tmp_path / "s.json", tmp_path / "s.raw").k == 3


def test_synthetic_roundtrip_bytes(tmp_path):
    scan, _ = synth(6, (64, 64, 64), seed=2)
    back = _roundtrip(scan, tmp_path)
    assert np.array_equal(back.labels, scan.labels)
    save_scan(back, tmp_path / "t.json", tmp_path / "t.raw")
    assert (tmp_path / "s.raw").read_bytes() == (tmp_path / "t.raw").read_bytes()


def test_spacing_preserved(tmp_path):
    scan = GrainScan((2, 2, 1), (0.7, 0.7, 0.7), np.array([1, 1, 2, 2]))
    assert _roundtrip(scan, tmp_path).spacing == (0.7, 0.7, 0.7)


def test_voxel_centers_x_fastest():
    c = voxel_centers((2, 3, 1), (1.0, 2.0, 1.0))
    assert c[1].tolist() == [1.5, 1.0, 0.5]
    assert c[2].tolist() == [0.5, 3.0, 0.5]


def test_slice_export(tmp_path):
    scan = GrainScan((2, 2, 1), (1, 1, 1), np.array([1, 1, 2, 2]))
    export_slice(scan, "z", 0, tmp_path / "a.ppm")
    img = read_ppm(tmp_path / "a.ppm")
    assert img.shape == (2, 2, 3)
    assert len({tuple(p) for p in img.reshape(-1, 3)}) == 2
    with pytest.raises(IndexError):
        export_slice(scan, "z", 1, tmp_path / "b.ppm")


def test_slice_color_count_matches_labels(tmp_path):
    scan, _ = synth(12, (64, 64, 64), seed=4)
    export_slice(scan, "z", 32, tmp_path / "s.ppm")
    img = read_ppm(tmp_path / "s.ppm")
    assert img.shape == (64, 64, 3)
    plane = scan.volume[:, :, 32]
    assert len({tuple(p) for p in img.reshape(-1, 3)}) == len(np.unique(plane))


def test_colors_distinct_and_zero_black():
    c = label_colors(np.arange(0, 5000))
    assert c[0].tolist() == [0, 0, 0]
    assert len({tuple(x) for x in c}) == 5000
