import numpy as np
import pytest

from chtf.filters import grid_bank, identity_bank, make_segmentation_bank
from chtf.recognition import (LabeledEnsemble, Projector, Signature, SignatureError,
                              global_signature, multilinear_project, person_variance_weights,
                              roc_curve, signature, similarity, train_compositional, train_global,
                              verify_pairs)
from chtf.synthetic import centered_vectors, make_face_model
from chtf.tensor import multi_mode_product


def labels_for(shape):
    return [list(range(n)) for n in shape[1:]]


@pytest.fixture
def faces():
    """64-pixel images of 10 people x 6 views x 6 lights, no mean image."""
    rng = np.random.default_rng(0)
    face = make_face_model(rng, 8, 8, (4, 2, 2), mean_level=0.0)
    d = face.ensemble(rng.standard_normal((10, 4)), rng.standard_normal((6, 2)),
                      rng.standard_normal((6, 2)))
    return LabeledEnsemble(d, labels_for(d.shape))


def abs_cos(a, b):
    return abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))


class TestEnsemble:
    def test_label_count(self):
        with pytest.raises(ValueError):
            LabeledEnsemble(np.zeros((4, 2, 3)), [[0, 1]])

    def test_label_length(self):
        with pytest.raises(ValueError):
            LabeledEnsemble(np.zeros((4, 2, 3)), [[0, 1], [0, 1]])

    def test_missing_cells(self):
        d = np.zeros((4, 2, 2))
        d[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            LabeledEnsemble(d, labels_for(d.shape))


class TestGlobal:
    def test_training_images_are_reproduced(self, faces):
        model = train_global(faces)
        t = model.extended_core()
        up, uv, ul = model.factors[1:]
        for p, v, l in [(0, 0, 0), (3, 2, 5), (9, 5, 1)]:
            d = multi_mode_product(t, [up[p][None], uv[v][None], ul[l][None]], modes=[1, 2, 3]).ravel()
            assert np.linalg.norm(d - faces.tensor[:, p, v, l]) <= 1e-9 * np.linalg.norm(d)

    def test_self_identification(self, faces):
        model = train_global(faces)
        proj = Projector(model.extended_core())
        up = model.factors[1]
        hits = 0
        for p in range(10):
            for v in range(6):
                for l in range(6):
                    r = proj.project(faces.tensor[:, p, v, l]).vectors[0]
                    cos = [abs_cos(r, row) for row in up]
                    hits += int(np.argmax(cos) == p)
                    assert cos[p] >= 1 - 1e-9
        assert hits == 360

    def test_exact_rank_one_response(self, faces):
        model = train_global(faces)
        t = model.extended_core()
        rng = np.random.default_rng(1)
        vecs = [rng.standard_normal(r) for r in t.shape[1:]]
        d = multi_mode_product(t, [v[None] for v in vecs], modes=[1, 2, 3]).ravel()
        f = multilinear_project(t, d)
        assert not f.zero
        for got, want in zip(f.vectors, vecs):
            assert abs_cos(got, want) >= 1 - 1e-9
        assert abs(f.scale - np.prod([np.linalg.norm(v) for v in vecs])) <= 1e-8 * f.scale

    def test_zero_response_flagged(self, faces):
        model = train_global(faces)
        t0 = model.extended_core().reshape(64, -1, order="F")
        q, _ = np.linalg.qr(t0, mode="complete")
        outside = q[:, -1]  # orthogonal to the span of T_[0]
        f = multilinear_project(model.extended_core(), outside)
        assert f.zero and f.scale == 0.0
        with pytest.raises(SignatureError):
            global_signature(Projector(model.extended_core()), outside)

    def test_single_person(self):
        rng = np.random.default_rng(2)
        face = make_face_model(rng, 4, 4, (1, 2, 2), mean_level=0.0)
        d = face.ensemble(rng.standard_normal((1, 1)), rng.standard_normal((3, 2)),
                          rng.standard_normal((3, 2)))
        model = train_global(LabeledEnsemble(d, labels_for(d.shape)))
        sig = global_signature(Projector(model.extended_core()), d[:, 0, 1, 2])
        assert sig.person[0].shape == (1,)
        assert abs(abs(sig.person[0][0]) - 1.0) <= 1e-12

    def test_scale_invariance(self, faces):
        model = train_global(faces)
        proj = Projector(model.extended_core())
        x = faces.tensor[:, 4, 1, 2]
        a, b = global_signature(proj, x), global_signature(proj, 7.5 * x)
        assert abs(similarity(a, b) - 1.0) <= 1e-12


class TestCompositional:
    def test_identity_bank_matches_global(self, faces):
        comp = train_compositional(faces, identity_bank(64))
        glob = train_global(faces)
        proj = Projector(glob.extended_core())
        for idx in [(0, 0, 0), (7, 3, 4)]:
            x = faces.tensor[(slice(None),) + idx]
            a = signature(comp, x).person[0]
            b = global_signature(proj, x).person[0]
            assert abs_cos(a, b) >= 1 - 1e-9

    def test_occlusion_is_local(self, faces):
        bank = grid_bank(8, 8, 2, 2)
        model = train_compositional(faces, bank)
        x = faces.tensor[:, 2, 1, 3]
        y = x.copy()
        y[bank.regions[0]] = 0.0
        sx, sy = signature(model, x), signature(model, y)
        assert sy.person[0] is None
        for s in (1, 2, 3):
            assert abs_cos(sx.person[s], sy.person[s]) >= 1 - 1e-12

    def test_training_identification(self, faces):
        bank = grid_bank(8, 8, 2, 2)
        model = train_compositional(faces, bank)
        for s in model.active_segments():
            up = model.segments[s].factors[1]
            r = signature(model, faces.tensor[:, 5, 2, 2]).person[s]
            assert int(np.argmax([abs_cos(r, row) for row in up])) == 5

    def test_weights_sum_to_one(self, faces):
        bank = make_segmentation_bank(64, [range(16), range(16, 64)])
        w = person_variance_weights(faces, bank)
        assert abs(w.sum() - 1.0) <= 1e-12 and np.all(w >= 0)
        model = train_compositional(faces, bank)
        np.testing.assert_allclose(model.info["weights"], w)

    def test_all_segments_fail(self, faces):
        model = train_compositional(faces, grid_bank(8, 8, 2, 2))
        with pytest.raises(SignatureError):
            signature(model, np.zeros(64))

    def test_wrong_size(self, faces):
        model = train_compositional(faces, grid_bank(8, 8, 2, 2))
        with pytest.raises(ValueError):
            signature(model, np.zeros(63))


class TestSimilarity:
    def test_identical_signatures(self):
        v = np.array([1.0, -2.0, 0.5])
        sig = Signature(person=[v, -v], weights=np.array([0.3, 0.7]))
        assert abs(similarity(sig, sig) - 1.0) <= 1e-15

    def test_failed_segments_dropped(self):
        v, u = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        a = Signature(person=[v, u], weights=np.array([0.5, 0.5]))
        b = Signature(person=[v, None], weights=np.array([1.0, 0.0]))
        assert similarity(a, b) == 1.0

    def test_failed_everywhere(self):
        a = Signature(person=[np.ones(2)], weights=np.ones(1))
        b = Signature(person=[None], weights=np.zeros(1))
        assert similarity(a, b) == 0.0

    def test_vectors_use_signed_cosine(self):
        assert abs(similarity(np.array([1.0, 2.0]), np.array([-1.0, -2.0])) + 1.0) <= 1e-15
        assert similarity(np.zeros(2), np.ones(2)) == 0.0

    def test_mismatched_segments(self):
        a = Signature(person=[np.ones(2)], weights=np.ones(1))
        b = Signature(person=[np.ones(2), np.ones(2)], weights=np.full(2, 0.5))
        with pytest.raises(ValueError):
            similarity(a, b)


class TestVerification:
    def test_roc_is_monotone(self):
        rng = np.random.default_rng(3)
        scores = rng.random(50)
        labels = rng.random(50) < 0.5
        roc = roc_curve(scores, labels)
        assert roc[0, 0] == np.inf and roc[0, 1] == 0.0 and roc[0, 2] == 0.0
        assert np.all(np.diff(roc[:, 1]) >= 0) and np.all(np.diff(roc[:, 2]) >= 0)
        assert roc[-1, 1] == 1.0 and roc[-1, 2] == 1.0

    def test_perfect_separation(self):
        a = [np.array([1.0, 0.0])] * 4
        same, diff = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        b = [same, diff, diff, same]
        res = verify_pairs(a, b, [True, False, False, True])
        assert res.accuracy == 1.0 and res.auc == 1.0
        assert 0.0 < res.threshold <= 1.0

    def test_auc_range(self):
        rng = np.random.default_rng(4)
        a = list(rng.standard_normal((40, 3)))
        b = list(rng.standard_normal((40, 3)))
        res = verify_pairs(a, b, list(rng.random(40) < 0.5))
        assert 0.0 <= res.auc <= 1.0

    def test_fixed_threshold_uses_all_pairs(self):
        a = [np.array([1.0, 0.0])] * 3
        b = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0])]
        res = verify_pairs(a, b, [True, False, False], threshold=0.9)
        assert res.decisions.tolist() == [True, False, False]
        assert res.accuracy == 1.0 and np.isnan(res.calibration_accuracy)

    def test_empty_and_mismatched(self):
        with pytest.raises(ValueError):
            verify_pairs([], [], [])
        with pytest.raises(ValueError):
            verify_pairs([np.ones(2)], [], [True])


def test_centered_vectors_have_zero_mean():
    x = centered_vectors(np.random.default_rng(5), 7, 3)
    assert np.max(np.abs(x.mean(axis=0))) <= 1e-15
