import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxgan import DataError, Rng
from voxgan.voxel import (
    SENTINEL,
    DepthMap,
    VoxelGrid,
    depth_scan,
    from_signed,
    occlude_to_grid,
    read_binvox,
    read_vxg,
    render_silhouette,
    rotate90,
    stack_grids,
    to_signed,
    toy_dataset,
    write_binvox,
    write_pgm,
    write_vxg,
)


def random_grid(seed, n=8, p=0.2):
    rng = Rng(seed)
    return VoxelGrid((rng.uniform((n, n, n)) < p).astype(np.uint8))


def brute_force_depth(grid, view):
    """Per-ray scan over every voxel; the oracle for depth_scan."""
    occ = grid.occupancy.astype(bool)
    n = grid.extent
    axis = {"x": 0, "y": 1, "z": 2}[view[1]]
    out = np.full((n, n), SENTINEL)
    others = [a for a in range(3) if a != axis]
    for u in range(n):
        for v in range(n):
            for d in range(n):
                i = d if view[0] == "+" else n - 1 - d
                idx = [0, 0, 0]
                idx[axis] = i
                idx[others[0]] = u
                idx[others[1]] = v
                if occ[tuple(idx)]:
                    out[u, v] = d
                    break
    return out


class TestGridType:
    def test_binary_detection_and_validation(self):
        g = VoxelGrid(np.zeros((4, 4, 4), dtype=np.uint8))
        assert g.is_binary
        with pytest.raises(DataError):
            VoxelGrid(np.full((4, 4, 4), 2, dtype=np.uint8))

    def test_soft_grids_clamp(self):
        g = VoxelGrid(np.full((4, 4, 4), 1.7))
        assert not g.is_binary
        assert g.occupancy.max() == 1.0

    def test_cubic_required(self):
        with pytest.raises(DataError):
            VoxelGrid(np.zeros((2, 3, 4)))

    def test_orientation_range(self):
        with pytest.raises(DataError):
            VoxelGrid(np.zeros((4, 4, 4), dtype=np.uint8), orientation=12)

    def test_signed_encoding_roundtrip(self):
        occ = Rng(0).uniform((4, 4, 4))
        npt.assert_allclose(from_signed(to_signed(occ)), occ, atol=1e-15)


class TestBinvox:
    def test_hand_authored_single_voxel(self, tmp_path):
        # 2^3 grid, one voxel at (x,y,z)=(0,1,0); flat binvox index
        # x*4 + z*2 + y = 1, so the RLE stream is (0,1)(1,1)(0,6)
        path = tmp_path / "one.binvox"
        header = b"#binvox 1\ndim 2 2 2\ntranslate 0 0 0\nscale 1\ndata\n"
        path.write_bytes(header + bytes([0, 1, 1, 1, 0, 6]))
        g = read_binvox(path)
        expect = np.zeros((2, 2, 2), dtype=np.uint8)
        expect[0, 1, 0] = 1
        npt.assert_array_equal(g.occupancy, expect)

    def test_write_read_identity_on_grids(self, tmp_path):
        for seed in range(5):
            g = random_grid(seed)
            path = tmp_path / f"g{seed}.binvox"
            write_binvox(g, path)
            npt.assert_array_equal(read_binvox(path).occupancy, g.occupancy)

    def test_read_write_byte_identity_on_canonical_file(self, tmp_path):
        g = random_grid(3, n=16, p=0.3)
        a = tmp_path / "a.binvox"
        b = tmp_path / "b.binvox"
        write_binvox(g, a)
        write_binvox(read_binvox(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_empty_grid_rle_sums_to_volume(self, tmp_path):
        g = VoxelGrid(np.zeros((32, 32, 32), dtype=np.uint8))
        path = tmp_path / "empty.binvox"
        write_binvox(g, path)
        raw = path.read_bytes()
        data = raw.split(b"data\n", 1)[1]
        counts = np.frombuffer(data, dtype=np.uint8)[1::2]
        values = np.frombuffer(data, dtype=np.uint8)[::2]
        assert int(counts.sum()) == 32**3
        assert (values == 0).all()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.binvox"
        path.write_bytes(b"#voxbin 1\ndim 2 2 2\ndata\n" + bytes([0, 8]))
        with pytest.raises(DataError, match="magic"):
            read_binvox(path)

    def test_rle_overrun(self, tmp_path):
        path = tmp_path / "over.binvox"
        path.write_bytes(b"#binvox 1\ndim 2 2 2\ntranslate 0 0 0\nscale 1\ndata\n" + bytes([0, 9]))
        with pytest.raises(DataError, match="overrun"):
            read_binvox(path)

    def test_long_runs_chunked_at_255(self, tmp_path):
        g = VoxelGrid(np.ones((8, 8, 8), dtype=np.uint8))
        path = tmp_path / "solid.binvox"
        write_binvox(g, path)
        npt.assert_array_equal(read_binvox(path).occupancy, g.occupancy)
        data = path.read_bytes().split(b"data\n", 1)[1]
        assert max(data[1::2]) <= 255


class TestDepthScan:
    def test_solid_cube_constant_zero_depth(self):
        g = VoxelGrid(np.ones((6, 6, 6), dtype=np.uint8))
        for view in ("+x", "-y", "+z"):
            dm = depth_scan(g, view)
            npt.assert_array_equal(dm.depth, np.zeros((6, 6)))

    def test_empty_grid_all_sentinel(self):
        g = VoxelGrid(np.zeros((5, 5, 5), dtype=np.uint8))
        dm = depth_scan(g, "+x")
        assert (dm.depth == SENTINEL).all()

    @pytest.mark.parametrize("view", ["+x", "-x", "+y", "-y", "+z", "-z"])
    def test_matches_brute_force(self, view):
        for seed in range(4):
            g = random_grid(seed + 10)
            npt.assert_array_equal(depth_scan(g, view).depth, brute_force_depth(g, view))

    def test_depthmap_validation(self):
        with pytest.raises(DataError):
            DepthMap(np.full((4, 4), 9.0), "+x", extent=4)
        with pytest.raises(DataError):
            DepthMap(np.zeros((4, 4)), "sideways", extent=4)


class TestOcclusion:
    def test_solid_cube_shell_is_front_slab(self):
        n = 6
        g = VoxelGrid(np.ones((n, n, n), dtype=np.uint8))
        shell = occlude_to_grid(depth_scan(g, "+x"), n)
        expect = np.zeros((n, n, n), dtype=np.uint8)
        expect[0] = 1
        npt.assert_array_equal(shell.occupancy, expect)

    @pytest.mark.parametrize("view", ["+x", "-z", "+y"])
    def test_shell_is_subset_of_object(self, view):
        for seed in range(6):
            g = random_grid(seed, p=0.3)
            shell = occlude_to_grid(depth_scan(g, view), g.extent)
            assert (shell.occupancy <= g.occupancy).all()

    def test_shell_count_equals_hit_pixels(self):
        g = random_grid(2, p=0.3)
        dm = depth_scan(g, "+y")
        shell = occlude_to_grid(dm, g.extent)
        assert shell.count() == int((dm.depth != SENTINEL).sum())

    def test_scan_is_idempotent_through_shell(self):
        for view in ("+x", "-y", "+z", "-z"):
            g = random_grid(7, p=0.25)
            dm = depth_scan(g, view)
            shell = occlude_to_grid(dm, g.extent)
            npt.assert_array_equal(depth_scan(shell, view).depth, dm.depth)

    def test_depth_out_of_range(self):
        # depth == extent passes the map invariant but has no voxel cell
        dm = DepthMap(np.full((4, 4), 4.0), "+x", extent=4)
        with pytest.raises(DataError):
            occlude_to_grid(dm, 4)


class TestSilhouette:
    def test_empty_grid_renders_black(self):
        img = render_silhouette(VoxelGrid(np.zeros((4, 4, 4), dtype=np.uint8)), "+x")
        npt.assert_array_equal(img, np.zeros((4, 4)))

    def test_solid_cube_constant_intensity(self):
        img = render_silhouette(VoxelGrid(np.ones((4, 4, 4), dtype=np.uint8)), "+z")
        assert len(np.unique(img)) == 1
        assert img[0, 0] == 1.0

    def test_support_matches_depth_hits(self):
        g = random_grid(3, p=0.2)
        dm = depth_scan(g, "-y")
        img = render_silhouette(g, "-y")
        npt.assert_array_equal(img > 0, dm.depth != SENTINEL)


class TestRotation:
    def test_four_turns_is_identity(self):
        g = random_grid(0)
        npt.assert_array_equal(rotate90(g, 2, 0).occupancy, g.occupancy)
        out = g
        for _ in range(4):
            out = rotate90(out, 2, 1)
        npt.assert_array_equal(out.occupancy, g.occupancy)

    def test_composition(self):
        g = random_grid(1)
        for axis in (0, 1, 2):
            a = rotate90(rotate90(g, axis, 1), axis, 1)
            b = rotate90(g, axis, 2)
            npt.assert_array_equal(a.occupancy, b.occupancy)

    def test_occupancy_count_invariant(self):
        g = random_grid(2, p=0.4)
        for axis in (0, 1, 2):
            for k in range(4):
                assert rotate90(g, axis, k).count() == g.count()

    def test_bad_turns(self):
        with pytest.raises(ValueError):
            rotate90(random_grid(0), 2, 4)


class TestToyDatasets:
    def test_boxes_single_orientation(self):
        grids = toy_dataset("boxes", 8, 4, 1, Rng(0))
        assert len(grids) == 4
        for g in grids:
            assert g.class_tag == "box"
            assert g.orientation == 0
            occ = g.occupancy
            xs, ys, zs = np.nonzero(occ)
            vol = (np.ptp(xs) + 1) * (np.ptp(ys) + 1) * (np.ptp(zs) + 1)
            assert vol == g.count()  # solid axis-aligned cuboid

    def test_orientation_recovery(self):
        grids = toy_dataset("ells", 8, 3, 4, Rng(5))
        assert len(grids) == 12
        for i in range(0, 12, 4):
            base = grids[i]
            for o in range(4):
                g = grids[i + o]
                back = rotate90(g, 2, (4 - o) % 4)
                npt.assert_array_equal(back.occupancy, base.occupancy)

    def test_occupancy_fraction_bounds(self):
        for kind in ("boxes", "spheres", "ells", "mixed"):
            for g in toy_dataset(kind, 8, 10, 2, Rng(7)):
                frac = g.count() / g.extent**3
                assert 0.0 < frac <= 0.5, kind

    def test_deterministic_per_seed(self):
        a = toy_dataset("mixed", 8, 5, 4, Rng(9))
        b = toy_dataset("mixed", 8, 5, 4, Rng(9))
        for ga, gb in zip(a, b):
            npt.assert_array_equal(ga.occupancy, gb.occupancy)
            assert ga.class_tag == gb.class_tag

    def test_small_grid_rejected(self):
        with pytest.raises(ValueError):
            toy_dataset("boxes", 4, 1, 1, Rng(0))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), view=st.sampled_from(["+x", "-x", "+y", "-y", "+z", "-z"]))
def test_shell_subset_property(seed, view):
    g = random_grid(seed, n=8, p=0.3)
    shell = occlude_to_grid(depth_scan(g, view), g.extent)
    assert (shell.occupancy <= g.occupancy).all()


class TestFiles:
    def test_vxg_roundtrip_binary_and_soft(self, tmp_path):
        g = random_grid(0)
        g = VoxelGrid(g.occupancy, class_tag="box", orientation=2)
        p = tmp_path / "g.vxg"
        write_vxg(g, p)
        back = read_vxg(p)
        npt.assert_array_equal(back.occupancy, g.occupancy)
        assert back.class_tag == "box" and back.orientation == 2
        soft = VoxelGrid(Rng(1).uniform((8, 8, 8)))
        write_vxg(soft, p)
        npt.assert_array_equal(read_vxg(p).occupancy, soft.occupancy)

    def test_pgm_export(self, tmp_path):
        g = VoxelGrid(np.ones((4, 4, 4), dtype=np.uint8))
        dm = depth_scan(g, "+x")
        p = tmp_path / "d.pgm"
        write_pgm(dm, p)
        raw = p.read_bytes()
        assert raw.startswith(b"P5\n4 4\n255\n")
        pixels = np.frombuffer(raw.split(b"255\n", 1)[1], dtype=np.uint8)
        assert (pixels == pixels[0]).all() and pixels[0] > 0

    def test_pgm_sentinel_is_zero(self, tmp_path):
        g = VoxelGrid(np.zeros((4, 4, 4), dtype=np.uint8))
        p = tmp_path / "d.pgm"
        write_pgm(depth_scan(g, "+x"), p)
        pixels = np.frombuffer(p.read_bytes().split(b"255\n", 1)[1], dtype=np.uint8)
        assert (pixels == 0).all()


def test_stack_grids_signed_batch():
    grids = toy_dataset("boxes", 8, 3, 1, Rng(0))
    batch = stack_grids(grids)
    assert batch.shape == (3, 1, 8, 8, 8)
    assert set(np.unique(batch)) == {-1.0, 1.0}
