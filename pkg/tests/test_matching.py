import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepcofib import _backend
from deepcofib.image import patch_field, patch_grid
from deepcofib.matching import WindowSpec, candidate_coords, find_similar, match_all


def brute_force(img, ref, n, S, d):
    """Exhaustive search: every valid patch, filtered to the window, fully sorted."""
    h, w = img.shape
    half = (S - n) // 2
    r, c = ref
    refv = img[r : r + n, c : c + n].ravel().tolist()
    cands = []
    for rr in range(h - n + 1):
        for cc in range(w - n + 1):
            if abs(rr - r) > half or abs(cc - c) > half or (rr, cc) == (r, c):
                continue
            v = img[rr : rr + n, cc : cc + n].ravel().tolist()
            acc = 0.0
            for a, b in zip(v, refv):
                acc += (a - b) * (a - b)
            cands.append((math.sqrt(acc), rr, cc))
    cands.sort()
    best = cands[: d - 1]
    pad = d - 1 - len(best)
    coords = [(r, c)] * (1 + pad) + [(rr, cc) for _, rr, cc in best]
    dists = [0.0] * (1 + pad) + [dist for dist, _, _ in best]
    return coords, dists


class TestCandidates:
    def test_center(self):
        assert len(candidate_coords((98, 98), WindowSpec(50, 5), 200, 200, 5)) == 45 * 45

    def test_corner(self):
        got = candidate_coords((0, 0), WindowSpec(50, 5), 200, 200, 5)
        assert len(got) == 23 * 23 and got.min() == 0 and got.max() == 22

    def test_degenerate_window(self):
        assert candidate_coords((3, 4), WindowSpec(5, 5), 20, 20, 5).tolist() == [[3, 4]]

    def test_window_smaller_than_patch(self):
        with pytest.raises(ValueError):
            WindowSpec(4, 5).half_width(5)


class TestFindSimilar:
    def test_constant_image_takes_scan_order(self, backend):
        field = patch_field(np.full((20, 20), 0.4), 5)
        ms = find_similar(field, (8, 8), WindowSpec(12, 5), backend=backend)
        # window rows/cols 5..11; first four non-reference coords in scan order
        assert ms.coords.tolist() == [[8, 8], [5, 5], [5, 6], [5, 7], [5, 8]]
        assert not ms.distances.any()

    def test_exact_duplicate_ranks_first(self, backend, rng):
        img = rng.random((24, 24))
        img[9:14, 14:19] = img[8:13, 8:13]
        ms = find_similar(patch_field(img, 5), (8, 8), WindowSpec(20, 5), backend=backend)
        assert ms.coords[1].tolist() == [9, 14]
        assert ms.distances[1] == 0.0

    def test_padding_repeats_reference(self, backend, rng):
        img = rng.random((6, 6))
        ms = find_similar(patch_field(img, 5), (1, 1), WindowSpec(50, 5), backend=backend)
        coords, dists = brute_force(img, (1, 1), 5, 50, 5)
        assert ms.coords.tolist() == [list(c) for c in coords]
        assert ms.coords[:2].tolist() == [[1, 1], [1, 1]]
        assert ms.distances.tolist() == dists
        assert np.all(np.diff(ms.distances[1:]) >= 0)

    def test_d_one(self, backend, rng):
        ms = find_similar(patch_field(rng.random((9, 9)), 5), (2, 2), WindowSpec(9, 1),
                          backend=backend)
        assert ms.coords.tolist() == [[2, 2]]

    def test_rejects_bad_reference(self, rng):
        with pytest.raises(ValueError):
            find_similar(patch_field(rng.random((9, 9)), 5), (5, 0), WindowSpec(9, 5))

    @pytest.mark.parametrize("seed", range(20))
    def test_brute_force_oracle(self, backend, seed):
        rng = np.random.default_rng(seed)
        img = rng.random((16, 16))
        if seed % 4 == 0:
            img = np.round(img * 3) / 3  # coarse levels force distance ties
        field = patch_field(img, 5)
        spec = WindowSpec(12, 5)
        for ref in patch_grid(16, 16, 5):
            ms = find_similar(field, tuple(ref), spec, backend=backend)
            coords, dists = brute_force(img, tuple(ref), 5, 12, 5)
            assert ms.coords.tolist() == [list(c) for c in coords]
            assert ms.distances.tolist() == dists

    def test_whole_image_window_is_global_search(self, backend, rng):
        img = rng.random((14, 14))
        field = patch_field(img, 5)
        ms = find_similar(field, (4, 6), WindowSpec(40, 5), backend=backend)
        flat = field.reshape(-1, 25)
        d = np.sqrt(((flat - flat[4 * 10 + 6]) ** 2).sum(axis=1))
        d[4 * 10 + 6] = np.inf
        order = np.argsort(d, kind="stable")[:4]
        assert ms.coords[1:].tolist() == np.stack(np.divmod(order, 10), axis=1).tolist()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(-5, 5), st.integers(0, 11), st.integers(0, 11))
def test_invariant_to_constant_shift(seed, shift, r, c):
    rng = np.random.default_rng(seed)
    img = np.round(rng.random((16, 16)) * 64) / 64
    spec = WindowSpec(12, 5)
    # dyadic intensities and shift keep patch differences exact
    shift = round(shift * 64) / 64
    a = find_similar(patch_field(img, 5), (r, c), spec)
    b = find_similar(patch_field(img + shift, 5), (r, c), spec)
    assert a.coords.tolist() == b.coords.tolist()
    assert a.distances[0] == 0 and np.all(np.diff(a.distances[1:]) >= 0)


@pytest.mark.skipif("compiled" not in _backend.available(), reason="extension not built")
def test_backends_bit_identical():
    rng = np.random.default_rng(99)
    img = rng.random((60, 70))
    field = patch_field(img, 5)
    refs = patch_grid(60, 70, 5)
    spec = WindowSpec(20, 5)
    i1, d1 = match_all(field, refs, spec, backend="python")
    i2, d2 = match_all(field, refs, spec, backend="compiled")
    assert np.array_equal(i1, i2)
    assert d1.tobytes() == d2.tobytes()


def test_workers_do_not_change_result(monkeypatch):
    from deepcofib import matching

    monkeypatch.setattr(matching, "CHUNK", 50)
    rng = np.random.default_rng(5)
    field = patch_field(rng.random((30, 30)), 5)
    refs = patch_grid(30, 30, 5)
    a = match_all(field, refs, WindowSpec(16, 5), workers=1)
    b = match_all(field, refs, WindowSpec(16, 5), workers=4)
    assert np.array_equal(a[0], b[0]) and a[1].tobytes() == b[1].tobytes()
