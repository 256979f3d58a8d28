import numpy as np

from tactnav._kernels import _ray_depth_numpy, _ray_depth_scalar


def random_instance(rng, n_rays=500, n_boxes=5):
    origin = rng.uniform(-10, 10, 3)
    dirs = rng.normal(size=(n_rays, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centers = rng.uniform(-50, 50, (n_boxes, 3))
    half = rng.uniform(1, 20, (n_boxes, 3))
    return origin, dirs, centers - half, centers + half


def test_numpy_and_scalar_paths_agree():
    rng = np.random.default_rng(3)
    for _ in range(10):
        origin, dirs, lo, hi = random_instance(rng)
        a = _ray_depth_numpy(origin, dirs, lo, hi, 300.0)
        b = _ray_depth_scalar(origin, dirs, lo, hi, 300.0)
        assert np.allclose(a, b, atol=1e-9)


def test_axis_parallel_rays():
    # direction components of exactly zero exercise the slab degenerate case
    origin = np.array([0.0, 0.0, 0.0])
    dirs = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    lo = np.array([[-5.0, -5.0, 10.0]])
    hi = np.array([[5.0, 5.0, 20.0]])
    for fn in (_ray_depth_numpy, _ray_depth_scalar):
        out = fn(origin, dirs, lo, hi, 99.0)
        assert out[0] == 10.0  # hits front face
        assert out[1] == 99.0  # misses
        assert out[2] == 99.0

def test_origin_inside_box_reports_exit():
    origin = np.array([0.0, 0.0, 15.0])
    dirs = np.array([[0.0, 0.0, 1.0]])
    lo = np.array([[-5.0, -5.0, 10.0]])
    hi = np.array([[5.0, 5.0, 20.0]])
    for fn in (_ray_depth_numpy, _ray_depth_scalar):
        assert fn(origin, dirs, lo, hi, 99.0)[0] == 5.0


def test_selected_path_matches_reference():
    from tactnav._kernels import ray_depth

    rng = np.random.default_rng(4)
    origin, dirs, lo, hi = random_instance(rng, n_rays=200)
    assert np.allclose(
        ray_depth(origin, dirs, lo, hi, 300.0),
        _ray_depth_numpy(origin, dirs, lo, hi, 300.0),
        atol=1e-9,
    )
