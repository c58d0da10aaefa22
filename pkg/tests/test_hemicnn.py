import numpy as np
import pytest

from brdfest import hemicnn
from brdfest.autodiff import Tensor, grad_check, n_parameters
from brdfest.errors import EmptyHemisphereError
from brdfest.voxels import VoxelSample

from oracles import uniform_hemisphere


def make_voxel(normal, view_dirs, colors=None, frame_ids=None):
    view_dirs = np.atleast_2d(view_dirs)
    m = view_dirs.shape[0]
    if colors is None:
        colors = np.random.default_rng(0).uniform(size=(m, 3))
    if frame_ids is None:
        frame_ids = np.arange(m)
    return VoxelSample(
        position=np.zeros(3),
        normal=np.asarray(normal, dtype=np.float64),
        colors=np.asarray(colors, dtype=np.float64),
        view_dirs=view_dirs.astype(np.float64),
        frame_ids=np.asarray(frame_ids),
        f_bars=np.full((m, 3), 0.5),
        b_bars=np.full((m, 3), 0.6),
    )


class TestAlignmentRotation:
    def test_identity_when_aligned(self):
        assert np.array_equal(hemicnn.alignment_rotation([0.0, 0.0, 1.0]), np.eye(3))

    def test_maps_normal_to_z(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            rot = hemicnn.alignment_rotation(n)
            assert np.allclose(rot @ n, [0, 0, 1], atol=1e-12)
            assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)

    def test_antipodal_normal(self):
        rot = hemicnn.alignment_rotation([0.0, 0.0, -1.0])
        assert np.allclose(rot @ np.array([0.0, 0.0, -1.0]), [0, 0, 1], atol=1e-15)


class TestHemisphereImage:
    def test_single_observation_fills_disk(self):
        color = np.array([[0.2, 0.6, 0.9]])
        voxel = make_voxel([0, 0, 1], [[0, 0, 1.0]], colors=color)
        image, mask = hemicnn.build_hemisphere_image(voxel, resolution=8)
        assert np.all(image[mask] == color[0])
        assert np.all(image[~mask] == 0.0)

    def test_two_sites_split_by_bisector(self):
        # sites at azimuth 0 and 180 deg, same inclination: columns left of
        # x=0 take the left color, right of x=0 the right color
        d = np.sin(0.8)
        dirs = np.array([[d, 0, np.cos(0.8)], [-d, 0, np.cos(0.8)]])
        colors = np.array([[1.0, 0, 0], [0, 1.0, 0]])
        voxel = make_voxel([0, 0, 1], dirs, colors=colors)
        image, mask = hemicnn.build_hemisphere_image(voxel, resolution=8)
        x, _, _ = hemicnn.pixel_grid(8)
        right = mask & (x > 0)
        left = mask & (x < 0)
        assert np.all(image[right] == colors[0])
        assert np.all(image[left] == colors[1])

    def test_matches_bruteforce_nearest_site(self):
        rng = np.random.default_rng(2)
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        dirs = uniform_hemisphere(rng, 50)  # in local frame of +z
        rot = hemicnn.alignment_rotation(n)
        world_dirs = dirs @ rot  # rotate local dirs into world so they face n
        voxel = make_voxel(n, world_dirs, colors=rng.uniform(size=(50, 3)))
        image, mask = hemicnn.build_hemisphere_image(voxel, resolution=8)
        x, y, _ = hemicnn.pixel_grid(8)
        sites = dirs[:, :2]
        for i in range(8):
            for j in range(8):
                if not mask[i, j]:
                    assert np.all(image[i, j] == 0)
                    continue
                d2 = (sites[:, 0] - x[i, j]) ** 2 + (sites[:, 1] - y[i, j]) ** 2
                assert np.array_equal(image[i, j], voxel.colors[np.argmin(d2)])

    def test_inplane_rotation_consistency(self):
        # n = +z so alignment is identity; rotating all view dirs by 90 deg
        # about z must rotate the image by 90 deg (pixel grid maps to itself)
        rng = np.random.default_rng(3)
        dirs = uniform_hemisphere(rng, 20)
        colors = rng.uniform(size=(20, 3))
        voxel = make_voxel([0, 0, 1], dirs, colors=colors)
        image, _ = hemicnn.build_hemisphere_image(voxel, resolution=8)
        rotz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        voxel_rot = make_voxel([0, 0, 1], dirs @ rotz.T, colors=colors)
        image_rot, _ = hemicnn.build_hemisphere_image(voxel_rot, resolution=8)
        # +90 deg about z in (x right, y up by rows) pixel coords
        expected = np.rot90(image, k=-1, axes=(0, 1))
        assert np.allclose(image_rot, expected, atol=1e-12)

    def test_all_backfacing_raises(self):
        voxel = make_voxel([0, 0, 1], [[0, 0, -1.0]])
        with pytest.raises(EmptyHemisphereError):
            hemicnn.build_hemisphere_image(voxel)


class TestSelectVoxels:
    def _voxels_with_normals(self, normals, counts=None):
        out = []
        for i, n in enumerate(normals):
            m = 1 if counts is None else counts[i]
            out.append(make_voxel(n, np.tile([0, 0, 1.0], (m, 1)), colors=np.zeros((m, 3)), frame_ids=np.arange(m)))
        return out

    def test_full_selection_is_permutation(self):
        rng = np.random.default_rng(4)
        normals = uniform_hemisphere(rng, 12)
        voxels = self._voxels_with_normals(normals)
        chosen = hemicnn.select_voxels(voxels, 12)
        ids = sorted(id(v) for v in chosen)
        assert ids == sorted(id(v) for v in voxels)

    def test_antipodal_clusters_covered(self):
        normals = [[0, 0, 1], [0.01, 0, 1], [0, 0, -1], [0, 0.01, -1]]
        normals = [np.array(n) / np.linalg.norm(n) for n in normals]
        voxels = self._voxels_with_normals(normals, counts=[3, 1, 1, 1])
        chosen = hemicnn.select_voxels(voxels, 2)
        zs = sorted(c.normal[2] for c in chosen)
        assert zs[0] < -0.9 and zs[1] > 0.9

    def test_fps_spreads_better_than_random_median(self):
        rng = np.random.default_rng(5)
        normals = uniform_hemisphere(rng, 100)
        voxels = self._voxels_with_normals(normals)
        chosen = hemicnn.select_voxels(voxels, 25)
        idx = [next(i for i, v in enumerate(voxels) if v is c) for c in chosen]

        def min_pairwise(ids):
            sub = normals[list(ids)]
            d = np.linalg.norm(sub[:, None] - sub[None, :], axis=-1)
            return np.min(d[np.triu_indices(len(ids), 1)])

        fps_spread = min_pairwise(idx)
        random_spreads = [
            min_pairwise(rng.choice(100, 25, replace=False)) for _ in range(300)
        ]
        assert fps_spread >= np.median(random_spreads)

    def test_shortfall_cycles(self):
        voxels = self._voxels_with_normals(uniform_hemisphere(np.random.default_rng(6), 3))
        chosen = hemicnn.select_voxels(voxels, 7)
        assert len(chosen) == 7
        assert len({id(c) for c in chosen}) == 3


class TestForward:
    def test_parameter_count_frozen(self):
        # conv1 448 + conv2 2320 + fc1 16448 + fc2 2080 + out 165
        assert hemicnn.parameter_count(8) == 21461
        params = hemicnn.init_params(np.random.default_rng(7), 8)
        assert n_parameters(params) == 21461

    def test_duplication_invariance_exact(self):
        rng = np.random.default_rng(8)
        params = hemicnn.init_params(rng)
        image = rng.uniform(size=(1, 1, 8, 8, 3))
        single = hemicnn.forward(image, params).data
        repeated = hemicnn.forward(np.repeat(image, 25, axis=1), params).data
        assert np.array_equal(single, repeated)

    def test_permutation_invariance_exact(self):
        rng = np.random.default_rng(9)
        params = hemicnn.init_params(rng)
        images = rng.uniform(size=(2, 9, 8, 8, 3))
        base = hemicnn.forward(images, params).data
        for _ in range(5):
            perm = rng.permutation(9)
            assert np.array_equal(hemicnn.forward(images[:, perm], params).data, base)

    def test_gradient_check_tiny_instance(self):
        rng = np.random.default_rng(10)
        params = hemicnn.init_params(rng)
        images = Tensor(rng.uniform(size=(1, 2, 8, 8, 3)))
        names = list(params)
        tensors = [params[k] for k in names]

        def f(*tensors):
            p = dict(zip(names, tensors))
            out = hemicnn.forward(images, p)
            return (out**2.0).sum()

        assert grad_check(f, tensors, h=1e-5, max_coords=40, seed=0) < 1e-3
