import json
import math

import numpy as np
import pytest

from edmpose.edm_core import edm_from_points
from edmpose.errors import (
    IncompleteMeasurementError,
    InfeasibleProjectionError,
    PlaneUndeterminedError,
    ValidationError,
)
from edmpose.posture import (
    ManipulatorScene,
    RangeMeasurements,
    arm_length_errors,
    build_G,
    cepp_localize,
    epp_localize,
    fit_vertical_plane,
    from_plane,
    project_distance,
    to_plane,
    track,
)
from edmpose.simharness.experiment import rmse
from edmpose.simharness.noise import NoiseModel, apply_noise
from edmpose.simharness.scenes import BOOM_ARM_LENGTHS, gen_pose, true_ranges


def _noisy(pose, rng, kind="multiplicative", level=0.05):
    model = NoiseModel(kind, eta=level) if kind == "multiplicative" else NoiseModel(kind, sigma=level)
    return apply_noise(true_ranges(pose.joints, pose.scene.anchors), model, rng)


@pytest.fixture
def pose():
    return gen_pose(BOOM_ARM_LENGTHS, rng=np.random.default_rng(100))


# -- scene and measurements ----------------------------------------------------

def test_scene_validation():
    anchors = np.zeros((2, 3))
    with pytest.raises(ValidationError):
        ManipulatorScene(anchors, np.zeros((2, 3)), [1.0])
    with pytest.raises(ValidationError):
        ManipulatorScene(anchors, np.zeros((1, 3)), [-1.0])
    with pytest.raises(ValidationError):
        ManipulatorScene(anchors, np.zeros((1, 3)), [1.0], units="ft")
    with pytest.raises(ValidationError):
        ManipulatorScene(anchors, np.zeros((1, 2)), [1.0])
    scene = ManipulatorScene(np.eye(3), np.zeros((2, 3)), [1.0, 2.0])
    assert (scene.p, scene.n, scene.dim) == (2, 5, 3)
    assert scene.arm_constraints() == [(0, 1.0), (1, 2.0)]
    assert scene.observed_pairs()[0] == (0, 2) and len(scene.observed_pairs()) == 6


def test_measurements_validate_and_round_trip():
    with pytest.raises(ValidationError):
        RangeMeasurements({(0, 1): -1.0})
    R = np.arange(6.0).reshape(2, 3)
    meas = RangeMeasurements.from_matrix(R, resamples=4)
    assert meas.resamples == 4 and meas.delta[(1, 4)] == 5.0
    np.testing.assert_array_equal(meas.matrix(2, 5), R)


# -- build_G --------------------------------------------------------------------

def test_build_G_single_pair():
    scene = ManipulatorScene(np.zeros((1, 3)), [[7.0, -1.0, 2.0]], [3.0])
    G = build_G(scene, RangeMeasurements({(0, 1): 5.0}))
    np.testing.assert_array_equal(G, [[0, 25], [25, 0]])


def test_build_G_blocks():
    rng = np.random.default_rng(0)
    anchors = rng.standard_normal((2, 3))
    priors = rng.standard_normal((2, 3))
    scene = ManipulatorScene(anchors, priors, [1.0, 1.0])
    R = rng.uniform(1, 2, (2, 2))
    G = build_G(scene, RangeMeasurements.from_matrix(R))
    np.testing.assert_array_equal(G[2:, 2:], edm_from_points(anchors))
    np.testing.assert_allclose(G[:2, :2], edm_from_points(priors))
    np.testing.assert_allclose(G[:2, 2:], R**2)
    np.testing.assert_array_equal(G, G.T)


def test_build_G_exact_reference_scene_is_true_edm(pose):
    meas = RangeMeasurements.from_matrix(true_ranges(pose.joints, pose.scene.anchors))
    G = build_G(pose.scene, meas)
    truth = edm_from_points(np.vstack([pose.joints, pose.scene.anchors]))
    np.testing.assert_allclose(G, truth, rtol=1e-12, atol=1e-9)


def test_build_G_missing_pair_names_it(pose):
    meas = RangeMeasurements.from_matrix(true_ranges(pose.joints, pose.scene.anchors))
    del meas.delta[(2, 6)]
    with pytest.raises(IncompleteMeasurementError) as info:
        build_G(pose.scene, meas)
    assert info.value.pair == (2, 6)


def test_unobservable_pairs_come_from_priors(pose):
    observable = [(i, j) for i, j in pose.scene.observed_pairs() if (i, j) != (2, 6)]
    scene = ManipulatorScene(pose.scene.anchors, pose.scene.priors, pose.scene.arm_lengths,
                             observable=observable)
    meas = RangeMeasurements.from_matrix(true_ranges(pose.joints, scene.anchors))
    del meas.delta[(2, 6)]
    G = build_G(scene, meas)
    assert np.isclose(G[2, 6], np.sum((scene.priors[2] - scene.anchors[1]) ** 2))


# -- EPP ----------------------------------------------------------------------------

def test_epp_zero_noise_recovers_truth(pose):
    meas = RangeMeasurements.from_matrix(true_ranges(pose.joints, pose.scene.anchors))
    for flag in (False, True):
        est = epp_localize(pose.scene, meas, use_arm_constraints=flag)
        assert rmse(est.joints, pose.joints) < 1e-4
        assert est.converged and est.method == ("epp2" if flag else "epp1")
        assert est.anchor_residual < 1e-6
        assert np.all(est.range_residuals < 1e-6)


def test_epp2_arm_lengths_are_hard(pose):
    rng = np.random.default_rng(1)
    for level in (0.05, 0.2):
        est = epp_localize(pose.scene, _noisy(pose, rng, level=level))
        assert np.all(arm_length_errors(est, BOOM_ARM_LENGTHS) < 1e-3)


def test_epp_anchor_permutation_equivariance(pose):
    rng = np.random.default_rng(2)
    meas = _noisy(pose, rng)
    p = pose.scene.p
    perm = [0, 3, 1, 2]  # keep the turntable first
    scene2 = ManipulatorScene(pose.scene.anchors[perm], pose.scene.priors, pose.scene.arm_lengths)
    where = {old: new for new, old in enumerate(perm)}
    meas2 = RangeMeasurements({(i, p + where[j - p]): d for (i, j), d in meas.delta.items()})
    a = epp_localize(pose.scene, meas).joints
    b = epp_localize(scene2, meas2).joints
    assert np.abs(a - b).max() < 1e-6


def test_to_dict_is_json_ready(pose):
    meas = RangeMeasurements.from_matrix(true_ranges(pose.joints, pose.scene.anchors))
    out = json.loads(json.dumps(cepp_localize(pose.scene, meas).to_dict()))
    assert len(out["joints"]) == 5 and isinstance(out["theta"], float)
    assert set(out["diagnostics"]) >= {"range_residuals", "anchor_residual", "converged"}


# -- plane fitting and coordinate maps -----------------------------------------

def test_fit_plane_examples():
    assert math.isclose(fit_vertical_plane([[1, 1, 5], [2, 2, -1]]), math.pi / 4)
    assert fit_vertical_plane([[1, 0, 5], [2, 0, 3]]) == 0.0
    assert math.isclose(fit_vertical_plane([[0, 1, 0], [0, -2, 1]]), math.pi / 2)
    assert math.isclose(fit_vertical_plane([[-1, -1, 0], [-3, -3, 2]]), math.pi / 4)
    with pytest.raises(PlaneUndeterminedError):
        fit_vertical_plane([[0, 0, 1], [0, 0, 4]])


def test_fit_plane_monte_carlo():
    rng = np.random.default_rng(3)
    errs = []
    for _ in range(200):
        r = rng.uniform(2, 30, 5)
        xy = np.column_stack([r * math.cos(0.3), r * math.sin(0.3)]) + rng.normal(0, 0.01, (5, 2))
        errs.append(abs(fit_vertical_plane(np.column_stack([xy, rng.uniform(0, 9, 5)])) - 0.3))
    assert max(errs) < 0.05


def test_fit_plane_matches_grid_search():
    rng = np.random.default_rng(4)
    grid = np.linspace(-math.pi / 2, math.pi / 2, 200001)[1:]
    for _ in range(10):
        P = rng.standard_normal((6, 3)) + [3, 1, 0]
        off = (P[:, 1:2] * np.cos(grid) - P[:, 0:1] * np.sin(grid)) ** 2
        best = grid[np.argmin(off.sum(axis=0))]
        assert abs(fit_vertical_plane(P) - best) < 1e-4


def test_to_plane_examples():
    np.testing.assert_allclose(to_plane([3, 4, 5], 0.0), [3, 5])
    np.testing.assert_allclose(to_plane([1, 1, 2], math.pi / 4), [math.sqrt(2), 2])
    t = math.pi / 6
    np.testing.assert_allclose(to_plane([2, 3, -1], t),
                               [math.sqrt(4 + 4 / 3) + 0.5 * (3 - 2 / math.sqrt(3)), -1])


def test_to_plane_is_the_signed_projection():
    rng = np.random.default_rng(5)
    for _ in range(200):
        w = rng.standard_normal(3) * 10
        t = rng.uniform(-1.5, 1.5)
        a, b = to_plane(w, t)
        assert math.isclose(a, w[0] * math.cos(t) + w[1] * math.sin(t), abs_tol=1e-10)
        assert b == w[2]
    a, _ = to_plane([0.0, 2.0, 0.0], math.pi / 2)
    assert a == 2.0


def test_from_plane_examples_and_round_trips():
    np.testing.assert_allclose(from_plane([3, 5], 0.0), [3, 0, 5])
    np.testing.assert_allclose(from_plane([math.sqrt(2), 2], math.pi / 4), [1, 1, 2])
    rng = np.random.default_rng(6)
    for _ in range(200):
        q = np.array([rng.uniform(-20, 20), rng.uniform(-20, 20)])
        t = rng.uniform(-1.55, 1.55)
        w = from_plane(q, t)
        assert np.abs(to_plane(w, t) - q).max() < 1e-10
        assert math.isclose(np.hypot(w[0], w[1]), abs(q[0]), rel_tol=1e-12)
        np.testing.assert_allclose(from_plane(to_plane(w, t), t), w, atol=1e-10)


def test_project_distance_examples():
    assert project_distance(10.0, [3, 4, 0], 0.0) == pytest.approx(math.sqrt(84))
    with pytest.raises(InfeasibleProjectionError) as info:
        project_distance(1.0, [3, 4, 0], 0.0)
    assert info.value.deficit == pytest.approx(15.0)
    assert project_distance(1.0, [3, 4, 0], 0.0, clamp=True) == 0.0


def test_project_distance_in_plane_invariance():
    rng = np.random.default_rng(7)
    for _ in range(200):
        t = rng.uniform(-1.5, 1.5)
        anchor = from_plane([rng.uniform(-20, 20), rng.uniform(0, 10)], t)
        d = rng.uniform(0, 40)
        assert abs(project_distance(d, anchor, t) - d) < 1e-12 * max(1.0, d)


def test_project_distance_is_exact_for_in_plane_targets():
    rng = np.random.default_rng(8)
    for _ in range(200):
        t = rng.uniform(-1.5, 1.5)
        target = from_plane([rng.uniform(-20, 20), rng.uniform(0, 10)], t)
        anchor = rng.standard_normal(3) * 10
        d = np.linalg.norm(target - anchor)
        planar = np.linalg.norm(to_plane(target, t) - to_plane(anchor, t))
        assert math.isclose(project_distance(d, anchor, t), planar, rel_tol=1e-9, abs_tol=1e-9)


# -- CEPP ---------------------------------------------------------------------------

def test_cepp_zero_noise_recovers_truth(pose):
    meas = RangeMeasurements.from_matrix(true_ranges(pose.joints, pose.scene.anchors))
    est = cepp_localize(pose.scene, meas)
    assert rmse(est.joints, pose.joints) < 1e-4
    assert est.plane_angle == pytest.approx(pose.angles.turntable_azimuth, abs=1e-9)
    assert -math.pi / 2 < est.plane_angle <= math.pi / 2
    assert est.diagnostics["clamped_ranges"] == 0
    epp = epp_localize(pose.scene, meas)
    assert np.abs(est.joints - epp.joints).max() < 1e-5


def test_cepp_arm_lengths_and_infeasible_handling(pose):
    rng = np.random.default_rng(9)
    meas = _noisy(pose, rng, "additive", 1.0)
    est = cepp_localize(pose.scene, meas, clamp_infeasible=True)
    assert np.all(arm_length_errors(est, BOOM_ARM_LENGTHS) < 1e-3)
    short = RangeMeasurements({k: (0.0 if k == (0, 6) else v) for k, v in meas.delta.items()})
    with pytest.raises(InfeasibleProjectionError):
        cepp_localize(pose.scene, short)
    est = cepp_localize(pose.scene, short, clamp_infeasible=True)
    assert est.diagnostics["clamped_ranges"] >= 1


def test_cepp_requires_3d():
    scene = ManipulatorScene(np.eye(3)[:, :2], np.ones((1, 2)), [1.0])
    with pytest.raises(ValidationError):
        cepp_localize(scene, RangeMeasurements({(0, 1): 1.0, (0, 2): 1.0, (0, 3): 1.0}))


@pytest.mark.parametrize("method", ["epp2", "cepp2"])
def test_scale_equivariance(pose, method):
    rng = np.random.default_rng(10)
    meas = _noisy(pose, rng, level=0.05)
    s = 37.0
    scene = pose.scene
    big = ManipulatorScene(scene.anchors * s, scene.priors * s, scene.arm_lengths * s)
    big_meas = RangeMeasurements({k: v * s for k, v in meas.delta.items()})
    run = (lambda sc, m: epp_localize(sc, m)) if method == "epp2" else cepp_localize
    a = run(scene, meas).joints
    b = run(big, big_meas).joints
    assert np.abs(b / s - a).max() < 1e-8 * np.abs(a).max()


# -- tracking -------------------------------------------------------------------------

@pytest.mark.parametrize("method", ["epp2", "cepp2"])
def test_track_follows_small_motions(method):
    from edmpose.baselines import AngleReading, tpsm_localize

    rng = np.random.default_rng(11)
    base = gen_pose(BOOM_ARM_LENGTHS, rng=rng)
    angles = base.angles
    truths, seq = [], []
    for _ in range(5):
        angles = AngleReading(angles.joint_angles + rng.normal(0, 0.01, 5),
                              angles.turntable_azimuth + 0.005)
        joints = tpsm_localize(BOOM_ARM_LENGTHS, angles, base.scene.anchors[0])
        truths.append(joints)
        seq.append(RangeMeasurements.from_matrix(
            true_ranges(joints, base.scene.anchors) * (1 + 0.01 * rng.standard_normal((5, 4)))))
    estimates = list(track(base.scene, seq, method=method, clamp_infeasible=True))
    assert len(estimates) == 5
    for est, truth in zip(estimates, truths):
        assert rmse(est.joints, truth) < 1.0
        assert est.method == method
