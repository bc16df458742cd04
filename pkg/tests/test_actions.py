import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from guided_dynamics.actions import (action_is_valid, canonical_arrays, canonicalize, sample_push_action,
                                     segment_point_distance)
from guided_dynamics.core import PushAction
from guided_dynamics.errors import InvalidActionError, InvalidInputError
from helpers import rot_z

coord = st.floats(-5, 5, allow_nan=False)


def test_identity_rotation_case():
    c = canonicalize(np.array([[2.0, 0, 0]]), PushAction((0, 0), (1, 0)))
    assert np.allclose(c.per_particle, [[1, 0, 0]], atol=1e-12)
    assert c.magnitude == 1.0


def test_quarter_turn_case():
    c = canonicalize(np.array([[1.0, 1, 0]]), PushAction((0, 0), (0, 1)))
    assert np.allclose(c.per_particle, [[0, -1, 0]], atol=1e-12)


def test_z_is_height_above_ground_and_magnitude_is_push_length():
    c = canonicalize(np.array([[0.0, 0, 0.7]]), PushAction((0, 0), (3, 4)), ground_height=0.2)
    assert c.per_particle[0, 2] == pytest.approx(0.5)
    assert np.allclose(c.features()[:, 3], 5.0)


def test_degenerate_action_rejected():
    with pytest.raises(InvalidActionError):
        canonical_arrays(np.zeros((2, 3)), [1.0, 1.0], [1.0, 1.0])


@given(st.integers(0, 2**31), st.floats(-np.pi, np.pi), coord, coord)
def test_invariance_under_planar_isometry(seed, theta, gx, gy):
    r = np.random.default_rng(seed)
    x = r.normal(size=(7, 3))
    s, e = r.normal(size=2), r.normal(size=2)
    if np.linalg.norm(e - s) < 1e-3:
        return
    R, g = rot_z(theta), np.array([gx, gy, 0.0])
    a = canonical_arrays(x, s, e)
    b = canonical_arrays(x @ R.T + g, R[:2, :2] @ s + g[:2], R[:2, :2] @ e + g[:2])
    assert np.abs(a - b).max() <= 1e-9


@given(st.integers(0, 2**31))
def test_full_turn_term_is_a_no_op(seed):
    r = np.random.default_rng(seed)
    x, s, e = r.normal(size=(9, 3)), r.normal(size=2), r.normal(size=2)
    assert np.abs(canonical_arrays(x, s, e, full_turn=True) - canonical_arrays(x, s, e, full_turn=False)).max() <= 1e-12


def test_pose_sensitivity():
    x = np.array([[0.0, 0, 0], [1, 0, 0], [1, 2, 0]])
    a = PushAction((-1, 0), (0.5, 0))
    turned = x @ rot_z(0.7).T
    assert not np.allclose(canonicalize(x, a).per_particle, canonicalize(turned, a).per_particle)


def test_batched_matches_single(rng):
    x = rng.normal(size=(4, 5, 3))
    s, e = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    batched = canonical_arrays(x, s, e)
    for k in range(4):
        one = canonicalize(x[k], PushAction(tuple(s[k]), tuple(e[k]))).features()
        assert np.array_equal(batched[k], one)


def test_segment_distance_examples():
    d = segment_point_distance([0.0, 0.0], [1.0, 0.0], np.array([[0.5, 2.0], [-1.0, 0.0], [3.0, 0.0]]))
    assert np.allclose(d, [2.0, 1.0, 2.0])


def test_sampling_determinism_and_length(rng):
    x = rng.uniform(0, 1, size=(40, 3))
    a = sample_push_action(x, (0.2, 0.4), 0.1, np.random.default_rng(5))
    b = sample_push_action(x, (0.2, 0.4), 0.1, np.random.default_rng(5))
    assert a == b
    assert 0.2 <= a.length <= 0.4 + 1e-12


def test_sampled_pushes_make_contact():
    r = np.random.default_rng(0)
    blob = np.c_[r.uniform(0, 1, size=(50, 2)), np.zeros(50)]
    margin = 0.1
    for _ in range(1000):
        a = sample_push_action(blob, (0.15, 0.5), margin, r)
        d = segment_point_distance(a.start, a.end, blob[:, :2]).min()
        assert d <= margin + 1e-12
        assert 0.15 <= a.length <= 0.5 + 1e-12


def test_sampling_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        sample_push_action(np.zeros((1, 3)), (0.1, 0.2), 0.0, 0)
    with pytest.raises(InvalidInputError):
        sample_push_action(np.zeros((0, 3)), (0.1, 0.2), 0.1, 0)
    with pytest.raises(InvalidInputError):
        sample_push_action(np.zeros((3, 3)), (0.3, 0.2), 0.1, 0)


def test_action_validity():
    x = np.array([[0.0, 0, 0], [0.1, 0, 0]])
    ok = action_is_valid(np.array([[-0.2, 0.0], [0.0, 0.0], [-0.2, 1.0]]),
                         np.array([[0.1, 0.0], [0.5, 0.0], [0.1, 1.0]]), x, 0.08)
    assert ok.tolist() == [True, False, False]
