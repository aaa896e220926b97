import numpy as np
import pytest

from conftest import identity, make_planar_finger, make_two_finger_hand, translate
from regrasp.errors import ConfigurationError, InputError, NumericEvalError
from regrasp.geometry import RigidTransform
from regrasp.kinematics import (
    FingerModel,
    HandModel,
    JointConfig,
    JointSpec,
    LinkProxy,
    fk_fingertip,
    fk_fingertips_batch,
    fk_link_proxies,
    numeric_gradient,
)


def fk_oracle(finger, theta):
    """Independent literal 4x4 homogeneous chain product (scipy rotations)."""
    from scipy.spatial.transform import Rotation

    def to44(rot, trans):
        T = np.eye(4)
        T[:3, :3] = rot
        T[:3, 3] = trans
        return T

    T = to44(finger.base_transform.rotation, finger.base_transform.translation)
    for joint, q in zip(finger.joints, theta):
        T = T @ to44(joint.parent_transform.rotation, joint.parent_transform.translation)
        T = T @ to44(Rotation.from_rotvec(q * joint.axis).as_matrix(), np.zeros(3))
    T = T @ to44(finger.tip_offset.rotation, finger.tip_offset.translation)
    return T


def random_finger(rng, dof=4):
    joints = []
    proxies = []
    for _ in range(dof):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        joints.append(JointSpec(translate(rng.normal(scale=0.03, size=3)), axis, -2.0, 2.0))
        proxies.append((LinkProxy(rng.normal(scale=0.02, size=3), 0.005),))
    return FingerModel(
        base_transform=RigidTransform.from_quat(rng.normal(scale=0.05, size=3), rng.normal(size=4)),
        joints=tuple(joints),
        link_proxies=tuple(proxies),
        tip_offset=translate(rng.normal(scale=0.02, size=3)),
    )


class TestFingertipFK:
    def test_straight_chain(self):
        hand = make_two_finger_hand(make_planar_finger())
        tip = fk_fingertip(hand, 0, [0.0, 0.0]).translation
        assert np.allclose(tip, [0.09, 0, 0], atol=1e-15)

    def test_base_rotation(self):
        hand = make_two_finger_hand(make_planar_finger())
        tip = fk_fingertip(hand, 0, [np.pi / 2, 0.0]).translation
        assert np.allclose(tip, [0, 0.09, 0], atol=1e-12)

    def test_matches_homogeneous_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            finger = random_finger(rng)
            hand = make_two_finger_hand(finger)
            theta = rng.uniform(-2, 2, size=4)
            got = fk_fingertip(hand, 0, theta)
            want = fk_oracle(finger, theta)
            assert np.max(np.abs(got.translation - want[:3, 3])) < 1e-12
            assert np.max(np.abs(got.rotation - want[:3, :3])) < 1e-12

    def test_batch_matches_single(self):
        rng = np.random.default_rng(1)
        finger = random_finger(rng)
        hand = make_two_finger_hand(finger)
        thetas = rng.uniform(-2, 2, size=(50, 4))
        batch = fk_fingertips_batch(hand, 0, thetas)
        for i in range(50):
            single = fk_fingertip(hand, 0, thetas[i]).translation
            assert np.max(np.abs(batch[i] - single)) < 1e-12

    def test_rigidity_of_local_distances(self):
        # the fk distance between two points fixed in the tip frame must be
        # invariant under any joint motion
        rng = np.random.default_rng(2)
        finger = random_finger(rng)
        hand = make_two_finger_hand(finger)
        pa, pb = rng.normal(size=(2, 3))
        ref = np.linalg.norm(pa - pb)
        for _ in range(20):
            tip = fk_fingertip(hand, 0, rng.uniform(-2, 2, size=4))
            assert abs(np.linalg.norm(tip.apply(pa) - tip.apply(pb)) - ref) < 1e-12

    def test_finite_at_limits(self):
        hand = make_two_finger_hand(make_planar_finger())
        lo, hi = hand.fingers[0].limits()
        for theta in (lo, hi):
            assert np.all(np.isfinite(fk_fingertip(hand, 0, theta).translation))

    def test_wrong_length_raises(self):
        hand = make_two_finger_hand(make_planar_finger())
        with pytest.raises(InputError):
            fk_fingertip(hand, 0, [0.0, 0.0, 0.0])


class TestLinkProxies:
    def test_proxy_at_rest(self):
        hand = make_two_finger_hand(make_planar_finger())
        proxies = fk_link_proxies(hand, 0, [0.0, 0.0])
        assert len(proxies) == 1  # fingertip link excluded
        center, radius = proxies[0]
        assert np.allclose(center, [0.025, 0, 0], atol=1e-15)
        assert radius == 0.008

    def test_proxy_rotated(self):
        hand = make_two_finger_hand(make_planar_finger())
        center, _ = fk_link_proxies(hand, 0, [np.pi / 2, 0.0])[0]
        assert np.allclose(center, [0, 0.025, 0], atol=1e-12)

    def test_matches_oracle_frames(self):
        from scipy.spatial.transform import Rotation

        rng = np.random.default_rng(3)
        finger = random_finger(rng)
        hand = make_two_finger_hand(finger)
        theta = rng.uniform(-2, 2, size=4)
        T = np.eye(4)
        T[:3, :3] = finger.base_transform.rotation
        T[:3, 3] = finger.base_transform.translation
        expected = []
        for joint, q in zip(finger.joints, theta):
            P = np.eye(4)
            P[:3, :3] = joint.parent_transform.rotation
            P[:3, 3] = joint.parent_transform.translation
            R = np.eye(4)
            R[:3, :3] = Rotation.from_rotvec(q * joint.axis).as_matrix()
            T = T @ P @ R
            expected.append(T.copy())
        proxies = fk_link_proxies(hand, 0, theta)
        for link in range(finger.dof - 1):
            local = finger.link_proxies[link][0].local_center
            want = expected[link][:3, :3] @ local + expected[link][:3, 3]
            assert np.max(np.abs(proxies[link][0] - want)) < 1e-12


class TestNumericGradient:
    def test_quadratic(self):
        g = numeric_gradient(lambda x: float(x @ x), np.array([1.0, 2.0]))
        assert np.allclose(g, [2, 4], atol=1e-6)

    def test_linear_exact(self):
        c = np.array([3.0, -1.5, 0.25])
        g = numeric_gradient(lambda x: float(c @ x), np.zeros(3))
        assert np.allclose(g, c, atol=1e-9)

    def test_sine(self):
        g = numeric_gradient(lambda x: float(np.sin(x[0])), np.array([0.3]))
        assert abs(g[0] - np.cos(0.3)) < 1e-8

    def test_nonfinite_raises(self):
        with pytest.raises(NumericEvalError):
            numeric_gradient(lambda x: float(np.sqrt(x[0])) if x[0] >= 0 else np.nan, np.array([0.0]))

    def test_richardson_refinement_on_fk_cost(self):
        # gradient at step h agrees with the half-step refinement to 1e-5
        # relative error on fk-composed costs
        rng = np.random.default_rng(4)
        finger = random_finger(rng)
        hand = make_two_finger_hand(finger)
        goal = rng.normal(scale=0.05, size=3)

        def cost(th):
            d = fk_fingertip(hand, 0, th).translation - goal
            return float(d @ d)

        for _ in range(10):
            x = rng.uniform(-1.5, 1.5, size=4)
            g_h = numeric_gradient(cost, x, h=1e-5)
            g_h2 = numeric_gradient(cost, x, h=5e-6)
            refined = (4 * g_h2 - g_h) / 3
            denom = max(np.linalg.norm(refined), 1e-12)
            assert np.linalg.norm(g_h - refined) / denom < 1e-5


class TestModels:
    def test_hand_needs_two_fingers(self):
        with pytest.raises(InputError):
            HandModel((make_planar_finger(),), {})

    def test_role_mapping_injective(self):
        f = make_planar_finger()
        with pytest.raises(ConfigurationError):
            HandModel((f, f), {"index": 0, "middle": 0})

    def test_role_out_of_range(self):
        f = make_planar_finger()
        with pytest.raises(ConfigurationError):
            HandModel((f, f), {"index": 5})

    def test_joint_limits_ordering(self):
        with pytest.raises(InputError):
            JointSpec(identity(), np.array([0, 0, 1.0]), 1.0, -1.0)

    def test_axis_must_be_unit(self):
        with pytest.raises(InputError):
            JointSpec(identity(), np.array([0, 0, 2.0]), -1.0, 1.0)

    def test_proxy_radius_positive(self):
        with pytest.raises(InputError):
            LinkProxy([0, 0, 0], 0.0)

    def test_joint_config_limits(self):
        hand = make_two_finger_hand(make_planar_finger(limits=(-1.0, 1.0)))
        good = JointConfig((np.array([0.5, -0.5]), np.zeros(2)))
        bad = JointConfig((np.array([1.5, 0.0]), np.zeros(2)))
        assert good.within_limits(hand)
        assert not bad.within_limits(hand)

    def test_joint_config_stack_roundtrip(self):
        hand = make_two_finger_hand(make_planar_finger())
        cfg = JointConfig((np.array([0.1, 0.2]), np.array([0.3, 0.4])))
        assert np.array_equal(JointConfig.from_stacked(hand, cfg.stacked()).angles[1], cfg.angles[1])
