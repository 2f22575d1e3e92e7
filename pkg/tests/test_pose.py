import math

import numpy as np
import pytest

from handrig import geometry, pose, synthrig
from handrig.errors import DegeneratePose, InvalidRoot, MissingDepth
from handrig.geometry import make_crop_transform
from handrig.pose import (
    DOF_VECTOR_ORDER,
    JOINT_NAMES,
    JOINTS_PER_HAND,
    NUM_JOINTS,
    WRIST,
    Handedness,
    Pose3D,
    Pose25D,
    RootDepths,
    assemble_3d,
    compute_dof_vector,
    flip_pair,
    flip_pose,
    joint_index,
    parent_index,
    root_align,
)

from conftest import random_camera, random_rotation


class TestSchema:
    def test_42_unique_indices(self):
        assert len(JOINT_NAMES) == NUM_JOINTS
        assert len(set(JOINT_NAMES)) == NUM_JOINTS

    def test_flip_pairs_form_involution(self):
        for i in range(NUM_JOINTS):
            assert flip_pair(flip_pair(i)) == i
            assert flip_pair(i) == (i + 21) % 42

    def test_names(self):
        assert JOINT_NAMES[0] == "r_thumb4"
        assert JOINT_NAMES[3] == "r_thumb1"
        assert JOINT_NAMES[20] == "r_wrist"
        assert JOINT_NAMES[21] == "l_thumb4"
        assert JOINT_NAMES[41] == "l_wrist"

    def test_parents_walk_to_wrist(self):
        for i in range(NUM_JOINTS):
            steps = 0
            k = i
            while parent_index(k) is not None:
                k = parent_index(k)
                steps += 1
                assert steps <= 4
            assert k % JOINTS_PER_HAND == WRIST

    def test_joint_index_lookup(self):
        assert joint_index("right") == 20
        assert joint_index("left") == 41
        assert joint_index("right", finger=0, level=4) == 0   # thumb tip
        assert joint_index("right", finger=4, level=1) == 19  # pinky root
        assert joint_index("left", finger=1, level=2) == 21 + 6


class TestHandedness:
    def test_range(self):
        with pytest.raises(ValueError):
            Handedness(h_right=1.2, h_left=0.0)

    def test_boundary_counts_as_present(self):
        h = Handedness(h_right=0.5, h_left=0.49999)
        assert h.present("right")
        assert not h.present("left")


def crop_and_25d(joints_world, cam, bbox, crop_size=(256, 256)):
    """Ground-truth 2.5D construction used by the inverse-chain tests."""
    t = make_crop_transform(bbox, crop_size)
    cam_space = cam.world_to_camera(joints_world)
    out = {}
    for hand, sl in (("right", slice(0, 21)), ("left", slice(21, 42))):
        pts = cam_space[sl]
        uv_full = geometry.project_camera_space(pts, cam)
        uv_crop = geometry.apply_transform(t, uv_full)
        z_root = pts[WRIST, 2]
        p25 = np.column_stack([uv_crop, pts[:, 2] - z_root])
        out[hand] = (Pose25D(joints=p25, hand=hand), z_root, pts)
    return t, out


class TestAssemble3D:
    def setup_method(self):
        rng = np.random.default_rng(7)
        self.cam = random_camera(rng)
        joints, _ = synthrig.generate_hand(11, hand="both", articulation="random")
        self.joints = joints
        self.t, self.gt = crop_and_25d(joints, self.cam, bbox=(1500, 900, 1000, 900))

    def gt_depths(self):
        zr = self.gt["right"][1]
        zl = self.gt["left"][1]
        return RootDepths(z_right=zr, z_left=zl, z_rel=zl - zr,
                          provenance={"z_right": "ground-truth"})

    def test_both_hands_present_left_uses_z_rel(self):
        # left root z column receives z_right + z_rel before back-projection
        p25r, zr, cam_r = self.gt["right"]
        p25l, zl, cam_l = self.gt["left"]
        depths = RootDepths(z_right=500.0, z_rel=30.0)
        r3, l3 = assemble_3d(p25r, p25l, Handedness(0.9, 0.9), depths, self.t, self.cam)
        assert abs(l3.joints[WRIST, 2] - 530.0) < 1e-9
        assert abs(r3.joints[WRIST, 2] - 500.0) < 1e-9

    def test_right_absent_left_uses_z_left(self):
        p25r, _, _ = self.gt["right"]
        p25l, _, _ = self.gt["left"]
        depths = RootDepths(z_left=600.0)
        r3, l3 = assemble_3d(p25r, p25l, Handedness(0.3, 0.9), depths, self.t, self.cam)
        assert r3 is None
        assert abs(l3.joints[WRIST, 2] - 600.0) < 1e-9

    def test_no_hands(self):
        p25r, _, _ = self.gt["right"]
        p25l, _, _ = self.gt["left"]
        r3, l3 = assemble_3d(p25r, p25l, Handedness(0.2, 0.2), RootDepths(), self.t, self.cam)
        assert r3 is None and l3 is None

    def test_missing_depth(self):
        p25r, _, _ = self.gt["right"]
        p25l, _, _ = self.gt["left"]
        with pytest.raises(MissingDepth):
            assemble_3d(p25r, p25l, Handedness(0.9, 0.2), RootDepths(), self.t, self.cam)
        with pytest.raises(MissingDepth):
            # both present but no relative depth
            assemble_3d(p25r, p25l, Handedness(0.9, 0.9),
                        RootDepths(z_right=500.0, z_left=550.0), self.t, self.cam)

    def test_gating_depends_only_on_half_threshold(self):
        p25r, _, _ = self.gt["right"]
        p25l, _, _ = self.gt["left"]
        depths = self.gt_depths()
        for hr, hl in [(0.5, 0.5), (0.51, 0.99), (1.0, 0.6)]:
            r3, l3 = assemble_3d(p25r, p25l, Handedness(hr, hl), depths, self.t, self.cam)
            assert r3 is not None and l3 is not None

    def test_presence_invariant_under_monotone_probability_maps(self):
        # any monotone re-mapping that keeps the 0.5 crossing fixed must
        # leave the presence decisions unchanged
        p25r, _, _ = self.gt["right"]
        p25l, _, _ = self.gt["left"]
        depths = self.gt_depths()
        maps = [lambda p: p,
                lambda p: p ** 3 / (p ** 3 + (1 - p) ** 3),   # sharpen
                lambda p: 0.5 + 0.5 * math.tanh(4 * (p - 0.5)) / math.tanh(2.0)]
        for hr, hl in [(0.7, 0.3), (0.2, 0.9), (0.9, 0.8), (0.1, 0.2)]:
            base = assemble_3d(p25r, p25l, Handedness(hr, hl), depths, self.t, self.cam)
            base_presence = (base[0] is not None, base[1] is not None)
            for f in maps:
                got = assemble_3d(p25r, p25l, Handedness(f(hr), f(hl)),
                                  depths, self.t, self.cam)
                assert (got[0] is not None, got[1] is not None) == base_presence

    def test_full_pipeline_inverse(self):
        # project-and-crop to 2.5D, then assemble with true depths:
        # reproduces the camera-space pose within 1e-6 mm
        p25r, zr, cam_r = self.gt["right"]
        p25l, zl, cam_l = self.gt["left"]
        r3, l3 = assemble_3d(p25r, p25l, Handedness(0.9, 0.9), self.gt_depths(),
                             self.t, self.cam)
        assert np.abs(r3.joints - cam_r).max() < 1e-6
        assert np.abs(l3.joints - cam_l).max() < 1e-6


class TestFlipPose:
    def test_involution(self, rng):
        joints = rng.uniform(0, 511, size=(42, 3))
        valid = rng.random(42) > 0.3
        h = Handedness(0.8, 0.1)
        j1, v1, h1 = flip_pose(joints, valid, h, image_width=512)
        j2, v2, h2 = flip_pose(j1, v1, h1, image_width=512)
        assert np.abs(j2 - joints).max() < 1e-9
        assert np.array_equal(v2, valid)
        assert h2.h_right == h.h_right and h2.h_left == h.h_left

    def test_right_only_becomes_left_only(self, rng):
        joints = np.zeros((42, 2))
        joints[:21, 0] = rng.uniform(0, 511, size=21)
        valid = np.zeros(42, dtype=bool)
        valid[:21] = True
        j1, v1, h1 = flip_pose(joints, valid, Handedness(0.9, 0.1), image_width=512)
        assert v1[21:].all() and not v1[:21].any()
        assert h1.h_left == 0.9 and h1.h_right == 0.1
        assert np.allclose(j1[21:, 0], 511 - joints[:21, 0])

    def test_mirror_fixed_point(self):
        joints = np.full((42, 2), (512 - 1) / 2.0)
        valid = np.ones(42, dtype=bool)
        j1, _, _ = flip_pose(joints, valid, Handedness(0.5, 0.5), image_width=512)
        assert np.allclose(j1[:, 0], (512 - 1) / 2.0)


def flat_hand():
    """Flat extended right hand lying in the z=0 plane."""
    joints, valid = synthrig.generate_hand(0, hand="right", articulation="neutral")
    return Pose3D(joints=joints[:21], valid=valid[:21], hand="right")


class TestDofVector:
    def test_order_and_length(self):
        assert len(DOF_VECTOR_ORDER) == 20
        assert DOF_VECTOR_ORDER[0] == "T1_pitch"
        assert DOF_VECTOR_ORDER[9] == "P1_yaw"
        assert DOF_VECTOR_ORDER[10] == "T2_bend"
        assert DOF_VECTOR_ORDER[19] == "P3_bend"

    def test_flat_hand_zero_bends(self):
        dof = compute_dof_vector(flat_hand())
        bends = dof[10:]
        assert np.abs(bends).max() < 1e-9
        pitches = dof[0:10:2]
        assert np.abs(pitches).max() < 1e-9

    def test_ninety_degree_bend_at_i2(self):
        hand = flat_hand()
        joints = hand.joints.copy()
        # rebuild the index finger distal to I2 bent 90 degrees out of plane
        i1, i2, i3, i4 = joints[7], joints[6], joints[5], joints[4]
        d = i2 - i1
        d = d / np.linalg.norm(d)
        up = np.array([0.0, 0.0, 1.0])
        l23 = np.linalg.norm(i3 - i2)
        l34 = np.linalg.norm(i4 - i3)
        joints[5] = i2 + l23 * up       # I3 straight up from I2
        joints[4] = joints[5] + l34 * up
        bent = Pose3D(joints=joints, valid=hand.valid, hand="right")
        dof = compute_dof_vector(bent)
        labels = dict(zip(DOF_VECTOR_ORDER, dof))
        assert abs(labels["I2_bend"] - math.pi / 2) < 1e-6
        others = [v for k, v in labels.items() if k.endswith("_bend") and k != "I2_bend"]
        assert np.abs(others).max() < 1e-9

    def test_collinear_roots_degenerate(self):
        joints = np.zeros((21, 3))
        # every plane-fit joint on the x axis
        for k, idx in enumerate([7, 11, 15, 19, 20]):
            joints[idx] = (float(k), 0.0, 0.0)
        # fill remaining joints arbitrarily off-axis
        others = [i for i in range(21) if i not in (7, 11, 15, 19, 20)]
        for k, idx in enumerate(others):
            joints[idx] = (0.5 * k, 1.0 + k, 2.0)
        p = Pose3D(joints=joints, valid=np.ones(21, dtype=bool), hand="right")
        with pytest.raises(DegeneratePose):
            compute_dof_vector(p)

    def test_rigid_invariance(self, rng):
        joints, valid = synthrig.generate_hand(77, hand="right", articulation="random")
        base = Pose3D(joints=joints[:21], valid=valid[:21], hand="right")
        ref = compute_dof_vector(base)
        for _ in range(100):
            r = random_rotation(rng)
            t = rng.uniform(-500, 500, size=3)
            moved = Pose3D(joints=joints[:21] @ r.T + t, valid=valid[:21], hand="right")
            got = compute_dof_vector(moved)
            assert np.abs(got - ref).max() < 1e-9

    def test_requires_all_joints_valid(self):
        hand = flat_hand()
        valid = hand.valid.copy()
        valid[4] = False
        p = Pose3D(joints=hand.joints, valid=valid, hand="right")
        with pytest.raises(ValueError):
            compute_dof_vector(p)


class TestRootAlign:
    def test_root_at_origin(self, rng):
        joints = rng.normal(size=(21, 3))
        p = Pose3D(joints=joints, valid=np.ones(21, dtype=bool), hand="right")
        aligned = root_align(p)
        assert np.allclose(aligned.joints[WRIST], 0.0)

    def test_translation_cancels(self, rng):
        joints = rng.normal(size=(21, 3))
        p1 = Pose3D(joints=joints, valid=np.ones(21, dtype=bool), hand="right")
        p2 = Pose3D(joints=joints + np.array([5.0, -3.0, 11.0]),
                    valid=np.ones(21, dtype=bool), hand="right")
        assert np.abs(root_align(p1).joints - root_align(p2).joints).max() < 1e-9

    def test_invalid_root(self):
        valid = np.ones(21, dtype=bool)
        valid[WRIST] = False
        p = Pose3D(joints=np.zeros((21, 3)), valid=valid, hand="right")
        with pytest.raises(InvalidRoot):
            root_align(p)
