import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from delayroll import (
    BurstDataset,
    HypercubeScaler,
    Normalizer,
    ParseError,
    Trajectory,
    denormalize,
    fit_normalizer,
    normalize,
    read_trajectory_csv,
    sample_bursts,
    subsample,
    write_trajectory_csv,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def ramp(k, d=1):
    return Trajectory(np.arange(k * d, dtype=float).reshape(k, d), dt=0.5)


# ------------------------------------------------------------- Trajectory


def test_trajectory_promotes_vector_and_freezes():
    t = Trajectory([1.0, 2.0, 3.0], dt=0.1, t0=1.0)
    assert t.states.shape == (3, 1)
    assert len(t) == 3 and t.d == 1
    np.testing.assert_allclose(t.times, [1.0, 1.1, 1.2])
    with pytest.raises(ValueError):
        t.states[0, 0] = 5.0


@pytest.mark.parametrize(
    "states, dt",
    [([np.nan], 1.0), ([1.0, np.inf], 1.0), ([1.0], 0.0), ([1.0], -1.0), (np.empty((0, 2)), 1.0)],
)
def test_trajectory_rejects_bad_input(states, dt):
    with pytest.raises(ValueError):
        Trajectory(states, dt=dt)


def test_burst_dataset_views():
    b = BurstDataset(np.arange(24, dtype=float).reshape(2, 4, 3))
    assert (b.J, b.n, b.d) == (2, 3, 3)
    np.testing.assert_array_equal(b.windows, b.bursts[:, :3])
    np.testing.assert_array_equal(b.targets, b.bursts[:, 3])
    with pytest.raises(ValueError):
        BurstDataset(np.zeros((2, 1, 3)))


# --------------------------------------------------------------- subsample


def test_subsample_tau2_keeps_even_indices():
    out = subsample(ramp(10), 2)
    np.testing.assert_array_equal(out.states[:, 0], [0, 2, 4, 6, 8])
    assert out.dt == 1.0


def test_subsample_tau3_on_seven_states():
    np.testing.assert_array_equal(subsample(ramp(7), 3).states[:, 0], [0, 3, 6])


def test_subsample_tau1_is_identity():
    t = ramp(5, 2)
    out = subsample(t, 1)
    np.testing.assert_array_equal(out.states, t.states)
    assert out.dt == t.dt


@pytest.mark.parametrize("tau", [0, -1, 1.5])
def test_subsample_rejects_bad_tau(tau):
    with pytest.raises(ValueError):
        subsample(ramp(5), tau)


@given(k=st.integers(1, 60), a=st.integers(1, 6), b=st.integers(1, 6))
def test_subsample_composes(k, a, b):
    t = ramp(k)
    twice = subsample(subsample(t, a), b)
    once = subsample(t, a * b)
    np.testing.assert_array_equal(twice.states, once.states)
    assert twice.dt == pytest.approx(once.dt)


# ------------------------------------------------------------- normalizer


def test_fit_normalizer_scalar_extrema():
    norm = fit_normalizer([Trajectory([-2.0, 0.0, 2.0], dt=1.0)])
    assert norm.lo.tolist() == [-2.0] and norm.hi.tolist() == [2.0]


def test_fit_normalizer_constant_series():
    norm = fit_normalizer([Trajectory([3.0, 3.0], dt=1.0)])
    assert norm.lo.tolist() == norm.hi.tolist() == [3.0]


def test_fit_normalizer_componentwise():
    norm = fit_normalizer([Trajectory([[0.0, 5.0], [4.0, 1.0]], dt=1.0)])
    assert norm.lo.tolist() == [0.0, 1.0]
    assert norm.hi.tolist() == [4.0, 5.0]


def test_fit_normalizer_spans_trajectories():
    norm = fit_normalizer([Trajectory([1.0, 2.0], dt=1.0), Trajectory([-7.0, 0.0], dt=1.0)])
    assert (norm.lo[0], norm.hi[0]) == (-7.0, 2.0)


def test_fit_normalizer_rejects_mixed_dimensions():
    with pytest.raises(ValueError):
        fit_normalizer([ramp(3, 1), ramp(3, 2)])


@pytest.mark.parametrize(
    "lo, hi, x, y",
    [(-2.0, 2.0, 0.0, 0.0), (-2.0, 2.0, 2.0, 1.0), (-2.0, 2.0, -2.0, -1.0), (0.0, 0.0, 0.0, 0.0)],
)
def test_normalize_values(lo, hi, x, y):
    assert normalize(Normalizer([lo], [hi]), [x])[0] == y


@pytest.mark.parametrize("lo, hi, y, x", [(-2.0, 2.0, 1.0, 2.0), (5.0, 5.0, 0.3, 5.0), (5.0, 5.0, -9.0, 5.0)])
def test_denormalize_values(lo, hi, y, x):
    assert denormalize(Normalizer([lo], [hi]), [y])[0] == x


def test_round_trip_example():
    norm = Normalizer([-3.0], [7.0])
    assert denormalize(norm, normalize(norm, [1.5]))[0] == pytest.approx(1.5, rel=1e-12)


@settings(max_examples=60)
@given(arrays(float, st.tuples(st.integers(2, 30), st.integers(1, 4)), elements=finite))
def test_normalizer_round_trip_and_range(x):
    norm = fit_normalizer([Trajectory(x, dt=1.0)])
    y = norm.normalize(x)
    assert np.all(y >= -1.0) and np.all(y <= 1.0)
    live = norm.hi > norm.lo
    assert np.all(y[:, ~live] == 0.0)
    # extrema land exactly on the cube faces
    assert np.all(y.min(axis=0)[live] == -1.0)
    assert np.all(y.max(axis=0)[live] == 1.0)
    back = norm.denormalize(y)
    # error of an affine map scales with the range magnitude, not with |x|
    scale = np.maximum(np.maximum(np.abs(norm.lo), np.abs(norm.hi)), 1e-300)
    assert np.all(np.abs(back - x) <= 1e-12 * scale)


def test_normalizer_serialization():
    norm = Normalizer([0.0, -1.0], [2.0, 1.0])
    again = Normalizer.from_dict(json.loads(json.dumps(norm.to_dict())))
    np.testing.assert_array_equal(again.lo, norm.lo)
    np.testing.assert_array_equal(again.hi, norm.hi)


def test_normalizer_rejects_inverted_range():
    with pytest.raises(ValueError):
        Normalizer([1.0], [0.0])


def test_hypercube_scaler_estimator():
    X = np.array([[0.0, 3.0], [2.0, 3.0], [1.0, 3.0]])
    scaler = HypercubeScaler().fit(X)
    Z = scaler.transform(X)
    np.testing.assert_array_equal(Z[:, 0], [-1.0, 1.0, 0.0])
    np.testing.assert_array_equal(Z[:, 1], 0.0)
    np.testing.assert_allclose(scaler.inverse_transform(Z), X)
    assert scaler.get_params() == {}


# ----------------------------------------------------------- burst sampling


def test_bursts_have_n_plus_one_consecutive_states():
    data = sample_bursts([ramp(50)], n=2, J=40, rng=0)
    assert data.bursts.shape == (40, 3, 1)
    np.testing.assert_array_equal(np.diff(data.bursts[:, :, 0], axis=1), 1.0)


def test_single_exact_length_trajectory_gives_identical_bursts():
    t = ramp(4)
    data = sample_bursts([t], n=3, J=7, rng=1)
    for b in data.bursts:
        np.testing.assert_array_equal(b, t.states)


def test_bursts_same_seed_identical():
    trajs = [ramp(20, 2), ramp(30, 2)]
    a = sample_bursts(trajs, 3, 25, np.random.default_rng(5))
    b = sample_bursts(trajs, 3, 25, np.random.default_rng(5))
    np.testing.assert_array_equal(a.bursts, b.bursts)
    np.testing.assert_array_equal(a.sources, b.sources)


def test_bursts_skip_short_trajectories():
    data = sample_bursts([ramp(2), ramp(10)], n=4, J=30, rng=0)
    assert set(data.sources[:, 0]) == {1}


def test_bursts_need_a_long_enough_trajectory():
    with pytest.raises(ValueError):
        sample_bursts([ramp(3)], n=3, J=1, rng=0)


@settings(max_examples=40)
@given(
    lengths=st.lists(st.integers(1, 25), min_size=1, max_size=4),
    n=st.integers(1, 5),
    J=st.integers(1, 30),
    seed=st.integers(0, 2**32 - 1),
)
def test_bursts_are_slices_of_their_source(lengths, n, J, seed):
    rng = np.random.default_rng(seed)
    trajs = [Trajectory(rng.normal(size=(k, 2)), dt=1.0) for k in lengths]
    if max(lengths) < n + 1:
        with pytest.raises(ValueError):
            sample_bursts(trajs, n, J, seed)
        return
    data = sample_bursts(trajs, n, J, seed)
    for burst, (i, start) in zip(data.bursts, data.sources):
        np.testing.assert_array_equal(burst, trajs[i].states[start:start + n + 1])


# ------------------------------------------------------------------ CSV


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    t = Trajectory(rng.normal(size=(20, 3)) * 1e3, dt=0.013, t0=2.5, label="run-a")
    path = write_trajectory_csv(t, tmp_path / "a.csv")
    back = read_trajectory_csv(path)
    np.testing.assert_allclose(back.states, t.states, rtol=1e-12, atol=0)
    assert (back.dt, back.t0, back.label) == (t.dt, t.t0, "run-a")
    assert path.read_text().splitlines()[0] == "t,w0,w1,w2"


def test_csv_without_manifest_infers_metadata(tmp_path):
    t = Trajectory([[1.0], [2.0], [4.0]], dt=0.25, t0=1.0)
    write_trajectory_csv(t, tmp_path / "probe.csv", manifest=False)
    back = read_trajectory_csv(tmp_path / "probe.csv")
    assert back.label == "probe"
    assert back.dt == pytest.approx(0.25) and back.t0 == 1.0


def test_csv_missing_t_column(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("time,w0\n0,1\n")
    with pytest.raises(ParseError, match="'t'"):
        read_trajectory_csv(p)


def test_csv_wrong_column_name(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,w0,x\n0,1,2\n")
    with pytest.raises(ParseError, match="'w1'"):
        read_trajectory_csv(p)


def test_csv_non_numeric_cell_reports_location(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,w0\n0,1\n1,oops\n")
    with pytest.raises(ParseError, match=r"bad\.csv:3.*'oops'.*'w0'"):
        read_trajectory_csv(p)


def test_csv_ragged_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,w0\n0,1,2\n")
    with pytest.raises(ParseError, match=":2"):
        read_trajectory_csv(p)
