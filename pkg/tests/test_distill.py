import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dakd import diffcore as dc
from dakd.config import DistillConfig, desk_distill, desk_mil, desk_model
from dakd.distill import (bce_loss, distill_loss, info_nce_from_projections, info_nce_loss, init_heads,
                          partition_features, student_loss, train_student)
from dakd.models import StudentModel, TeacherModel, init_params
from dakd.refinery import build_pseudo_labels


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def nce(zt, zs, mask, tau=10.0):
    return float(info_nce_from_projections(np.asarray(zt, float), np.asarray(zs, float), np.asarray(mask), tau).data)


def test_partition_examples():
    th, sh = np.ones((2, 4)), np.ones((2, 3))
    p = partition_features(np.array([0.95, 0.1]), th, sh, 0.9)
    assert p.anomalous.tolist() == [True, False]
    assert p.anomaly_idx.tolist() == [0] and p.normal_idx.tolist() == [1]
    assert not partition_features(np.array([0.5, 0.1]), th, sh, 0.9).anomalous.any()
    assert partition_features(np.array([0.5, 0.1]), th, sh, 1e-12).anomalous.all()


def test_partition_flattens_video_axis():
    p = partition_features(np.full((2, 3), 0.95), np.ones((2, 3, 4)), np.ones((2, 3, 5)), 0.9)
    assert p.teacher.shape == (6, 4) and p.student.shape == (6, 5)


def test_partition_misaligned():
    with pytest.raises(dc.ShapeError):
        partition_features(np.zeros(3), np.ones((3, 4)), np.ones((2, 4)), 0.9)


def test_identical_pair_without_negatives_is_zero():
    assert nce([[1.0, 0.0]], [[1.0, 0.0]], [True]) == pytest.approx(0.0, abs=1e-15)


def test_one_orthogonal_negative():
    # anchor 0 (anomalous) and anchor 1 (normal), each the other's negative
    zt = [[1.0, 0.0], [0.0, 1.0]]
    zs = [[1.0, 0.0], [0.0, 1.0]]
    value = nce(zt, zs, [True, False])
    assert value == pytest.approx(2 * math.log1p(math.exp(-0.1)), abs=1e-14)
    assert value == pytest.approx(1.28896, abs=5e-4)


def test_positive_similarity_monotone():
    neg = [0.0, 1.0]
    values = []
    for angle in np.linspace(0.0, 1.4, 8):
        zs_anchor = [math.cos(angle), math.sin(angle) * 0.0 + math.sin(angle)]
        values.append(nce([[1.0, 0.0], neg], [zs_anchor, neg], [True, False]))
    # only the anomaly-side term moves with the angle
    assert all(a < b for a, b in zip(values, values[1:]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.floats(0.5, 20))
def test_info_nce_non_negative(seed, n, tau):
    rng = np.random.default_rng(seed)
    mask = rng.uniform(size=n) < 0.5
    assert nce(rng.normal(size=(n, 4)), rng.normal(size=(n, 4)), mask, tau) >= -1e-12


def test_zero_norm_projection_rejected():
    with pytest.raises(ValueError):
        nce([[0.0, 0.0]], [[1.0, 0.0]], [True])


def test_bad_temperature():
    with pytest.raises(ValueError):
        nce([[1.0, 0.0]], [[1.0, 0.0]], [True], tau=0.0)
    with pytest.raises(ValueError):
        DistillConfig(tau=0.0)
    with pytest.raises(ValueError):
        DistillConfig(delta=1.0)


def test_bce_examples():
    assert float(bce_loss([0.5], dc.Tensor([0.5])).data) == pytest.approx(math.log(2), abs=1e-12)
    assert float(bce_loss([1.0], dc.Tensor([0.25])).data) == pytest.approx(math.log(4), abs=1e-12)
    assert float(bce_loss([1.0, 0.0], dc.Tensor([1.0, 0.0])).data) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(dc.ShapeError):
        bce_loss([1.0, 0.0], dc.Tensor([0.5]))


def test_distill_loss_examples():
    assert distill_loss(0.5, 0.01, 7.5, 10) == pytest.approx(8.0)
    assert distill_loss(0.5, 0.3, 0.0, 10) == 0.5
    assert distill_loss(0.5, 0.0, 7.5, 10) == 0.5


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0.1, 20), st.floats(0, 5))
def test_distill_loss_linear_in_nce(bce, a, alpha, tau, b):
    slope = alpha * tau * tau
    diff = distill_loss(bce, a + b, alpha, tau) - distill_loss(bce, a, alpha, tau)
    assert diff == pytest.approx(slope * b, rel=1e-9, abs=1e-9)


def micro_batch(seed=0):
    rng = np.random.default_rng(seed)
    scfg = desk_model((5,), d_model=8, proj_hidden=6, n_heads=2, ffn_hidden=6, head_hidden=(4,), k=2)
    scfg = scfg.single_stream(5)
    student = StudentModel(scfg, {k: v + rng.normal(scale=0.3, size=v.shape)
                                  for k, v in init_params(scfg, 1).items()})
    dcfg = DistillConfig(proj_hidden=16, proj_out=4, delta=0.5)
    heads = {k: v + rng.normal(scale=0.1, size=v.shape) for k, v in init_heads(8, 8, dcfg, 2).items()}
    inputs = dict(x=rng.normal(size=(2, 4, 5)), ts=rng.uniform(size=(2, 4)), th=rng.normal(size=(2, 4, 8)),
                  y=rng.uniform(size=(2, 4)))
    return student, heads, dcfg, inputs


@pytest.mark.parametrize("part", ["total", "bce", "nce"])
def test_distill_grad_check(part):
    student, heads, dcfg, inputs = micro_batch()
    inputs["ts"][0, :2] = 0.9  # both classes present

    def fn(p, i):
        total, bce, n = student_loss(student, p, i["x"], i["ts"], i["th"], i["y"], dcfg)
        return {"total": total, "bce": bce, "nce": n}[part]

    report = dc.grad_check(dc.Graph(fn, {**student.params, **heads}), inputs, rel_tol=1e-4, output=None)
    assert report.passed, report.errors


def test_info_nce_loss_uses_both_heads():
    _, heads, dcfg, inputs = micro_batch(3)
    part = partition_features(inputs["ts"], inputs["th"], np.random.default_rng(0).normal(size=(2, 4, 8)), 0.5)
    assert float(info_nce_loss(part, heads, 10.0).data) > 0


def distill_setup(data, alpha=7.5, epochs=4):
    train = data.split("train")
    tcfg = desk_model(train.stream_dims, d_model=8, proj_hidden=8, n_heads=2, ffn_hidden=8, head_hidden=(8,))
    teacher = TeacherModel.create(tcfg, 0)
    pseudo = build_pseudo_labels(teacher, train)
    student = StudentModel.create(tcfg.single_stream(train.stream_dims[-1]), 1)
    cfg = desk_distill(proj_hidden=32, proj_out=8, alpha=alpha, delta=0.5)
    return train, teacher, student, pseudo, cfg, desk_mil(epochs=epochs, n_normal=6, n_anomalous=6)


def test_student_training_reduces_loss(small_data):
    train, teacher, student, pseudo, cfg, opt = distill_setup(small_data, epochs=6)
    frozen = {k: v.copy() for k, v in teacher.params.items()}
    _, heads, history = train_student(train, teacher, student, pseudo, cfg, opt, seed=1)
    assert len(history) == 6 and history[-1][2] < history[0][2]
    assert all(np.array_equal(frozen[k], teacher.params[k]) for k in frozen)
    assert set(heads) == {"ph_t.w1", "ph_t.w2", "ph_s.w1", "ph_s.w2"}


def test_student_training_deterministic(small_data):
    runs = []
    for _ in range(2):
        train, teacher, student, pseudo, cfg, opt = distill_setup(small_data, epochs=2)
        runs.append(train_student(train, teacher, student, pseudo, cfg, opt, seed=4))
    assert runs[0][2] == runs[1][2]
    assert all(runs[0][0].params[k].tobytes() == runs[1][0].params[k].tobytes() for k in runs[0][0].params)


def test_zero_alpha_is_prediction_only(small_data):
    train, teacher, student, pseudo, cfg, opt = distill_setup(small_data, alpha=0.0, epochs=2)
    _, _, history = train_student(train, teacher, student, pseudo, cfg, opt, seed=1)
    assert all(row[1] == 0.0 and row[0] == row[2] for row in history)


def test_missing_inputs_rejected(small_data):
    train, teacher, student, pseudo, cfg, opt = distill_setup(small_data, epochs=1)
    with pytest.raises(ValueError):
        train_student(train, teacher, student, None, cfg, opt, seed=1)
    with pytest.raises(KeyError):
        train_student(train.select_streams(["s1", "s2"]), teacher, student, pseudo, cfg, opt, seed=1)
