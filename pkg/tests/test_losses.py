import numpy as np
import pytest

from heightlab.fusion import GroundMask
from heightlab.heightgrid import BevGrid, HeightMap
from heightlab.losses import LossWeights, height_l1, iou_loss_sa, project_confidence_to_image, soft_iou, total_loss


def test_soft_iou_known_value():
    a = np.array([1.0, 0.5, 0.0])
    b = np.array([0.5, 0.5, 0.0])
    assert soft_iou(a, b) == pytest.approx(2 / 3)
    assert iou_loss_sa(a.reshape(1, 3), np.array([[1, 1, 0]])) == pytest.approx(0.25)


def test_soft_iou_both_empty_raises():
    with pytest.raises(ValueError):
        soft_iou(np.zeros(4), np.zeros(4))


def test_hard_iou_threshold():
    f = np.array([[0.9, 0.4, 0.6, 0.0]])
    m = GroundMask(np.array([[1, 1, 0, 0]]))
    # binarized footprint [1,0,1,0] vs mask [1,1,0,0]: 1 / 3
    assert iou_loss_sa(f, m, threshold=0.5) == pytest.approx(2 / 3)


def test_height_l1_ignores_nodata():
    g = BevGrid(1, 3)
    p = HeightMap(g, np.array([[0.1, np.nan, 0.5]]))
    t = HeightMap(g, np.array([[0.0, 0.0, 0.2]]))
    assert height_l1(p, t) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        height_l1(HeightMap.nodata(g), t)


def test_total_loss_weighting():
    assert total_loss(1.0, 1.0, 1.0) == 17.0
    assert total_loss(0.1, 0.2, 0.3, LossWeights(1.0, 0.0, 2.0)) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        LossWeights(-1.0)


def test_footprint_of_true_ground_covers_mask(grade_scene):
    f = grade_scene.frames[0]
    fp = project_confidence_to_image(f.gt, f.frame, grade_scene.camera)
    assert fp.shape == f.mask.shape
    assert fp.min() >= 0 and fp.max() <= 1
    # bilinear splatting spills at most one pixel past the rendered ground
    m = np.pad(f.mask, 1)
    near = np.zeros_like(f.mask)
    for dv in range(3):
        for du in range(3):
            near |= m[dv:dv + f.mask.shape[0], du:du + f.mask.shape[1]]
    assert fp[near == 0].sum() == 0.0
    assert (fp * f.mask).sum() / fp.sum() > 0.8
