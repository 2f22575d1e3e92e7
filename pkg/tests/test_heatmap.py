import math

import numpy as np
import pytest

from handrig import heatmap
from handrig.errors import DegenerateMass, NonPositiveSigma
from handrig.heatmap import (
    HeatmapVolume,
    RelDepthHeatmap,
    VolumeGeometry,
    decode_hard_argmax,
    decode_rel_depth,
    decode_soft_argmax_3d,
    encode_rel_depth,
    from_stacked_planes,
    read_volume,
    render_gaussian,
    to_stacked_planes,
    write_volume,
)

DIMS1 = (1, 16, 16, 16)  # single joint keeps the brute-force oracles cheap


def brute_force_gaussian(joint, sigma, dims):
    """Direct triple loop over the formula; oracle for render_gaussian."""
    j, d, h, w = dims
    out = np.zeros((d, h, w))
    x0, y0, z0 = joint
    for z in range(d):
        for y in range(h):
            for x in range(w):
                out[z, y, x] = math.exp(
                    -((x - x0) ** 2 + (y - y0) ** 2 + (z - z0) ** 2) / (2 * sigma ** 2))
    return out


class TestRenderGaussian:
    def test_peak_on_voxel_center(self):
        vol = render_gaussian([(32.0, 32.0, 32.0)], sigma=2.5, dims=(1, 64, 64, 64))
        assert vol.values[0, 32, 32, 32] == 1.0

    def test_one_bin_offset_value(self):
        vol = render_gaussian([(32.0, 32.0, 32.0)], sigma=2.5, dims=(1, 64, 64, 64))
        expected = math.exp(-1.0 / 12.5)  # (33-32)^2 / (2 * 2.5^2)
        assert abs(vol.values[0, 32, 32, 33] - expected) < 1e-12
        assert abs(expected - 0.9231163463866358) < 1e-12

    def test_nonpositive_sigma(self):
        with pytest.raises(NonPositiveSigma):
            render_gaussian([(1.0, 1.0, 1.0)], sigma=0.0, dims=DIMS1)

    def test_matches_brute_force(self, rng):
        for _ in range(5):
            joint = rng.uniform(-2, 18, size=3)
            vol = render_gaussian([joint], sigma=1.7, dims=DIMS1)
            oracle = brute_force_gaussian(joint, 1.7, DIMS1)
            assert np.abs(vol.values[0] - oracle).max() < 1e-12

    def test_no_center_clamping(self):
        # a joint far outside still renders its (tiny) tail
        vol = render_gaussian([(-30.0, 8.0, 8.0)], sigma=2.5, dims=DIMS1)
        assert vol.values.max() < 1e-10
        assert vol.values.max() > 0

    def test_translation_equivariance(self, rng):
        joint = np.array([5.3, 6.1, 7.9])
        a = render_gaussian([joint], sigma=1.5, dims=DIMS1).values[0]
        b = render_gaussian([joint + 3.0], sigma=1.5, dims=DIMS1).values[0]
        # interior region shifted by (3, 3, 3) must match exactly
        assert np.abs(a[:-3, :-3, :-3] - b[3:, 3:, 3:]).max() < 1e-12


class TestHardArgmax:
    def test_one_hot(self):
        values = np.zeros(DIMS1)
        values[0, 5, 6, 7] = 1.0
        out = decode_hard_argmax(HeatmapVolume(values=values))
        assert tuple(out[0]) == (7.0, 6.0, 5.0)

    def test_tie_break_lowest_linear_index(self):
        values = np.zeros((1, 4, 5, 5))
        flat = values.reshape(1, -1)
        flat[0, 10] = 1.0
        flat[0, 99] = 1.0
        out = decode_hard_argmax(HeatmapVolume(values=flat.reshape(1, 4, 5, 5)))
        # linear index 10 in (z, y, x) raster order of a 4x5x5 grid
        assert tuple(out[0]) == (0.0, 2.0, 0.0)

    def test_recovers_rendered_center(self):
        vol = render_gaussian([(7.0, 6.0, 5.0)], sigma=1.5, dims=DIMS1)
        assert tuple(decode_hard_argmax(vol)[0]) == (7.0, 6.0, 5.0)


class TestSoftArgmax:
    def test_one_hot(self):
        values = np.zeros(DIMS1)
        values[0, 5, 6, 7] = 0.7
        out = decode_soft_argmax_3d(HeatmapVolume(values=values))
        assert np.allclose(out[0], (7.0, 6.0, 5.0))

    def test_uniform_gives_center(self):
        values = np.ones((1, 8, 10, 12))
        out = decode_soft_argmax_3d(HeatmapVolume(values=values))
        assert np.allclose(out[0], (11 / 2.0, 9 / 2.0, 7 / 2.0))

    def test_roundtrip_interior(self, rng):
        # 3 sigma from every boundary keeps truncation bias below 0.05 bins
        for _ in range(50):
            joint = rng.uniform(7.5, 56.5, size=3)
            vol = render_gaussian([joint], sigma=2.5, dims=(1, 64, 64, 64))
            out = decode_soft_argmax_3d(vol)
            assert np.abs(out[0] - joint).max() < 0.05

    def test_degenerate_mass(self):
        with pytest.raises(DegenerateMass):
            decode_soft_argmax_3d(HeatmapVolume(values=np.zeros(DIMS1)))

    def test_softmax_mode_no_mass_error(self):
        out = decode_soft_argmax_3d(HeatmapVolume(values=np.zeros(DIMS1)), mode="softmax")
        assert np.allclose(out[0], (7.5, 7.5, 7.5))  # uniform after softmax

    def test_softmax_mode_sharp_peak(self):
        values = np.zeros(DIMS1)
        values[0, 5, 6, 7] = 200.0  # logit large enough to dominate
        out = decode_soft_argmax_3d(HeatmapVolume(values=values), mode="softmax")
        assert np.abs(out[0] - (7.0, 6.0, 5.0)).max() < 1e-6

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            decode_soft_argmax_3d(HeatmapVolume(values=np.ones(DIMS1)), mode="magic")

    def test_inside_voxel_hull(self, rng):
        for _ in range(20):
            values = rng.uniform(0.0, 1.0, size=DIMS1)
            out = decode_soft_argmax_3d(HeatmapVolume(values=values))
            assert np.all(out >= 0.0)
            assert np.all(out[:, 0] <= DIMS1[3] - 1)
            assert np.all(out[:, 1] <= DIMS1[2] - 1)
            assert np.all(out[:, 2] <= DIMS1[1] - 1)


class TestRelDepth:
    def test_uniform_bins_decode_to_zero(self):
        hm = RelDepthHeatmap(bins=np.ones(64), range_mm=(-400.0, 400.0))
        assert abs(decode_rel_depth(hm)) < 1e-9

    def test_dominant_first_bin(self):
        bins = np.full(64, 1e-9)
        bins[0] = 60.0  # softmax weight overwhelmingly on bin 0
        hm = RelDepthHeatmap(bins=bins, range_mm=(-400.0, 400.0))
        # centre of the first of 64 equal bins: -400 + 800 * 0.5 / 64
        expected = -400.0 + 800.0 * 0.5 / 64.0
        assert expected == -393.75
        assert abs(decode_rel_depth(hm) - expected) < 1e-6

    def test_symmetric_dominant_pair(self):
        bins = np.zeros(64)
        bins[10] = 50.0
        bins[53] = 50.0  # mirror of 10 about the centre
        hm = RelDepthHeatmap(bins=bins, range_mm=(-400.0, 400.0))
        assert abs(decode_rel_depth(hm)) < 1e-9

    def test_encode_decode_roundtrip(self, rng):
        bin_width = 800.0 / 64.0
        for _ in range(50):
            z = rng.uniform(-300.0, 300.0)
            hm = encode_rel_depth(z)
            assert abs(decode_rel_depth(hm) - z) < bin_width

    def test_bin_count_enforced(self):
        with pytest.raises(ValueError):
            RelDepthHeatmap(bins=np.ones(32))

    def test_range_ordering(self):
        with pytest.raises(ValueError):
            RelDepthHeatmap(bins=np.ones(64), range_mm=(10.0, -10.0))


class TestLayout:
    def test_stacked_plane_roundtrip_bytes(self, rng):
        values = rng.uniform(0.0, 1.0, size=(3, 4, 5, 6))
        vol = HeatmapVolume(values=values)
        planes = to_stacked_planes(vol)
        assert planes.shape == (12, 5, 6)
        back = from_stacked_planes(planes, joints=3)
        assert back.values.tobytes() == vol.values.tobytes()

    def test_plane_order_joint_major_then_depth(self):
        values = np.zeros((2, 3, 2, 2))
        values[1, 2] = 7.0
        planes = to_stacked_planes(HeatmapVolume(values=values))
        assert np.all(planes[1 * 3 + 2] == 7.0)

    def test_binary_dump_roundtrip(self, rng, tmp_path):
        values = rng.uniform(0.0, 1.0, size=(2, 8, 8, 8)).astype(np.float32).astype(np.float64)
        vol = HeatmapVolume(values=values)
        path = tmp_path / "vol.bin"
        write_volume(vol, path)
        back = read_volume(path)
        assert back.dims == vol.dims
        assert np.array_equal(back.values, vol.values)

    def test_binary_dump_layout(self, tmp_path):
        values = np.zeros((1, 2, 2, 2))
        values[0, 0, 0, 1] = 1.0  # x fastest: second float in the payload
        path = tmp_path / "vol.bin"
        write_volume(HeatmapVolume(values=values), path)
        raw = path.read_bytes()
        header = np.frombuffer(raw[:16], dtype="<u4")
        assert tuple(header) == (1, 2, 2, 2)
        payload = np.frombuffer(raw[16:], dtype="<f4")
        assert payload[1] == 1.0 and payload.sum() == 1.0

    def test_truncated_dump_rejected(self, tmp_path):
        values = np.ones((1, 2, 2, 2))
        path = tmp_path / "vol.bin"
        write_volume(HeatmapVolume(values=values), path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(ValueError, match="header says"):
            read_volume(path)

    def test_render_joint_count_checked(self):
        with pytest.raises(ValueError, match="expected 2 joints"):
            render_gaussian([(1.0, 1.0, 1.0)], sigma=1.0, dims=(2, 4, 4, 4))


class TestVolumeGeometry:
    def test_crop_scale_is_four(self):
        geom = VolumeGeometry()
        assert geom.px_per_bin == (4.0, 4.0)

    def test_pose_voxel_roundtrip(self, rng):
        geom = VolumeGeometry()
        p = np.column_stack([
            rng.uniform(0, 256, size=100),
            rng.uniform(0, 256, size=100),
            rng.uniform(-200, 200, size=100),
        ])
        back = geom.voxel_to_pose25d(geom.pose25d_to_voxel(p))
        assert np.abs(back - p).max() < 1e-9

    def test_z_bin_centers(self):
        geom = VolumeGeometry()
        # bin 0's centre is z_min + half a bin: -200 + 400 * 0.5 / 64
        p = geom.voxel_to_pose25d(np.array([0.0, 0.0, 0.0]))
        assert abs(p[2] - (-200.0 + 400.0 * 0.5 / 64.0)) < 1e-12
