import numpy as np
import pytest

from atriareg.errors import MissingMasks
from atriareg.metrics import dice
from atriareg.morphology import contour_band_mask
from atriareg.phantom import PhantomConfig, generate_phantom
from atriareg.pipeline import preprocess_field, preprocess_series
from atriareg.transform import DisplacementField, warp_mask, warp_trilinear
from atriareg.volume import CineSeries, mask_centroid, translate

from conftest import block_mask, vol

SMALL = PhantomConfig(dims=(40, 38, 22), base_radii_voxels=(8.0, 7.0, 5.0), phases=4, peak_phase=2,
                      center=(17.3, 20.0, 10.0), noise_sigma=0.0)


@pytest.fixture(scope="module")
def small():
    return generate_phantom(SMALL)


def test_default_phantom_crop_is_identity_window():
    series, _ = generate_phantom(PhantomConfig(phases=2, peak_phase=1))
    out = preprocess_series(series)
    assert out.phases[0].dims == (96, 96, 36)
    assert out.metadata["crop_center_voxels"] == [48, 48, 18]
    assert out.metadata["stabilization_shifts"] == [[0, 0, 0], [0, 0, 0]]
    assert np.array_equal(out.masks[1].data, series.masks[1].data)


def test_outputs_are_band_masked_and_normalized(small):
    series, _ = small
    out = preprocess_series(series, crop=(32, 32, 16))
    for v, m in zip(out.phases, out.masks):
        band = contour_band_mask(m).data
        assert not v.data[~band].any()
        assert v.data.max() == 1.0 and v.data.min() == 0.0
    assert out.metadata["band_radius_voxels"] == 2.0
    assert out.metadata["crop_size"] == [32, 32, 16]


def test_requires_masks(small):
    series, _ = small
    with pytest.raises(MissingMasks):
        preprocess_series(CineSeries(series.phases))


def test_truth_fields_follow_crop(small):
    series, truth = small
    out = preprocess_series(series, crop=(32, 32, 16))
    for t in range(len(series)):
        mapped = preprocess_field(truth[t], out.metadata, t)
        assert mapped.dims == (32, 32, 16)
        raw = dice(warp_mask(series.masks[0], truth[t]), series.masks[t])
        assert dice(warp_mask(out.masks[0], mapped), out.masks[t]) == pytest.approx(raw, abs=1e-12)


def test_truth_fields_follow_stabilization():
    # phase 1 is phase 0 shifted by (3, -2, 1); the true pull-back field is the constant -(3, -2, 1)
    m0 = block_mask((30, 30, 20), (10, 11, 7), (6, 5, 4))
    m1 = translate(m0, (3, -2, 1))
    v0 = vol(m0.data.astype(float))
    v1 = translate(v0, (3, -2, 1))
    series = CineSeries((v0, v1), (m0, m1))
    truth = [DisplacementField.zeros(v0), DisplacementField.constant(v0, (-3, 2, -1))]
    out = preprocess_series(series, crop=(24, 24, 16))
    assert out.metadata["stabilization_shifts"][1] == [-3, 2, -1]
    assert np.allclose(mask_centroid(out.masks[1]), mask_centroid(out.masks[0]))
    mapped = preprocess_field(truth[1], out.metadata, 1)
    # after stabilization the phases coincide, so the mapped field is zero wherever it is defined
    interior = (slice(4, 20), slice(4, 20), slice(3, 13))
    assert np.allclose(mapped.data[(slice(None),) + interior], 0.0)
    assert dice(warp_mask(out.masks[0], mapped), out.masks[1]) == 1.0
    warped = warp_trilinear(out.phases[0], mapped)
    assert np.allclose(warped.data[interior], out.phases[1].data[interior])
