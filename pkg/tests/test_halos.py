import numpy as np
import pytest

from oracles import disk_mask
from lsbseg.annotations.halos import separate_overlapping_halos
from lsbseg.errors import DataError
from lsbseg.imaging.transforms import apply_dihedral
from lsbseg.metrics import mask_iou


def test_single_disk_identity():
    mask = disk_mask((96, 96), 48, 48, 20)
    sep = separate_overlapping_halos(mask, 1)
    assert len(sep.parts) == 1
    assert not sep.shortfall
    np.testing.assert_array_equal(sep.parts[0].mask, mask)
    a, b = sep.parts[0].ellipse.semi_axes
    assert abs(a - 20) / 20 < 0.05
    assert abs(b - 20) / 20 < 0.05


def test_disjoint_disks_recovered():
    d1 = disk_mask((120, 160), 60, 50, 15)
    d2 = disk_mask((120, 160), 60, 110, 15)
    sep = separate_overlapping_halos(d1 | d2, 2)
    assert len(sep.parts) == 2
    parts = sorted(sep.parts, key=lambda p: p.ellipse.center[0])
    assert mask_iou(parts[0].mask, d1) >= 0.99
    assert mask_iou(parts[1].mask, d2) >= 0.99


def test_overlapping_disks_split_evenly():
    d1 = disk_mask((110, 140), 55, 55, 20)
    d2 = disk_mask((110, 140), 55, 85, 20)
    union = d1 | d2
    sep = separate_overlapping_halos(union, 2)
    assert len(sep.parts) == 2
    areas = sorted(int(p.mask.sum()) for p in sep.parts)
    assert areas[1] / areas[0] <= 1.05  # equal area within 5%
    # union preserved exactly, parts disjoint
    np.testing.assert_array_equal(sep.parts[0].mask | sep.parts[1].mask, union)
    assert not (sep.parts[0].mask & sep.parts[1].mask).any()
    # boundary pixels sit within 2px of the perpendicular bisector (x = 70)
    for part in sep.parts:
        other = union & ~part.mask
        boundary = part.mask & np.roll(other, 1, axis=1) | part.mask & np.roll(other, -1, axis=1)
        xs = np.nonzero(boundary)[1]
        if xs.size:
            assert np.all(np.abs(xs - 70) <= 2)


def test_union_and_disjoint_on_random_blobs():
    rng = np.random.default_rng(5)
    for trial in range(10):
        mask = np.zeros((80, 80), dtype=bool)
        for _ in range(3):
            cy, cx = rng.integers(15, 65, size=2)
            mask |= disk_mask((80, 80), cy, cx, rng.integers(6, 14))
        n = int(rng.integers(1, 4))
        sep = separate_overlapping_halos(mask, n)
        union = np.zeros_like(mask)
        for i, part in enumerate(sep.parts):
            assert not (union & part.mask).any()
            union |= part.mask
        np.testing.assert_array_equal(union, mask)
        assert len(sep.parts) <= n


def test_shortfall_flagged():
    mask = disk_mask((64, 64), 32, 32, 12)
    sep = separate_overlapping_halos(mask, 3)
    assert sep.shortfall
    assert 1 <= len(sep.parts) <= 3


def test_empty_mask_rejected():
    with pytest.raises(DataError, match="empty"):
        separate_overlapping_halos(np.zeros((16, 16), dtype=bool), 1)


def test_bad_n_parts_rejected():
    with pytest.raises(DataError, match="n_parts"):
        separate_overlapping_halos(np.ones((4, 4), dtype=bool), 0)


@pytest.mark.parametrize("element", range(8))
def test_equivariance_under_dihedral_group(element):
    # generic asymmetric blob: two unequal overlapping disks plus a third lobe
    base = (
        disk_mask((90, 90), 40, 33, 17)
        | disk_mask((90, 90), 52, 57, 13)
        | disk_mask((90, 90), 25, 60, 9)
    )
    sep0 = separate_overlapping_halos(base, 3)
    transformed = apply_dihedral(base, element)
    sep1 = separate_overlapping_halos(transformed, 3)
    assert len(sep0.parts) == len(sep1.parts)
    expected = [apply_dihedral(p.mask, element) for p in sep0.parts]
    for got in sep1.parts:
        assert any(np.array_equal(got.mask, exp) for exp in expected)


def test_matches_skimage_watershed_on_disk_pairs():
    # independent reference: skimage's watershed with the same EDT markers
    pytest.importorskip("skimage")
    from scipy import ndimage
    from skimage.segmentation import watershed

    rng = np.random.default_rng(11)
    agreements = []
    for _ in range(5):
        cy1, cx1 = rng.integers(25, 40, size=2)
        cx2 = cx1 + rng.integers(24, 34)
        mask = disk_mask((96, 128), cy1, cx1, 18) | disk_mask((96, 128), cy1, cx2, 18)
        sep = separate_overlapping_halos(mask, 2)
        edt = ndimage.distance_transform_edt(mask)
        markers = np.zeros(mask.shape, dtype=int)
        for i, part in enumerate(sep.parts, start=1):
            ys, xs = np.nonzero(part.mask & (edt == (edt * part.mask).max()))
            markers[ys[0], xs[0]] = i
        ref = watershed(-edt, markers, mask=mask)
        for i, part in enumerate(sep.parts, start=1):
            agreements.append(mask_iou(part.mask, ref == i))
    assert np.mean(agreements) > 0.95
