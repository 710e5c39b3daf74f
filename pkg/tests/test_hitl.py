import dataclasses

import numpy as np
import pytest

from conftest import sample_from_masks
from oracles import disk_mask
from lsbseg.annotations.labels import InstanceLabel, Provenance
from lsbseg.errors import ConfigError, DataError
from lsbseg.hitl.review import (
    DecisionConflict,
    HitlStore,
    ReviewItem,
    acceptance_stats,
    apply_decisions,
    enqueue_false_positives,
    oracle_reviewer,
    withhold_labels,
)
from lsbseg.hitl.schedule import build_schedule
from lsbseg.masks import mask_bbox
from lsbseg.metrics import mask_iou
from lsbseg.network.model import Detection
from lsbseg.panoptic import PanopticOutput


def det(mask, cls="galaxy", score=0.9):
    return Detection(cls=cls, score=score, bbox=tuple(float(v) for v in mask_bbox(mask)), mask=mask)


def output_of(dets, shape=(64, 64)):
    return PanopticOutput(
        detections=dets,
        cirrus_map=np.zeros(shape, dtype=np.float32),
        cirrus_mask=np.zeros(shape, dtype=bool),
    )


def item_of(mask, cls="galaxy", round=1, item_id="i0", sample_id="s0", score=0.9, status="pending"):
    return ReviewItem(
        id=item_id,
        sample_id=sample_id,
        cls=cls,
        score=score,
        bbox=tuple(float(v) for v in mask_bbox(mask)),
        mask=mask,
        round=round,
        status=status,
    )


class TestSchedule:
    def test_paper_schedule(self):
        sched = build_schedule(200)
        assert sched.review_epochs == [30, 35, 40, 45, 50, 60, 70, 80]
        assert sched.final_phase == 120

    def test_phase_sum(self):
        assert 30 + 5 * 4 + 10 * 3 == 80
        sched = build_schedule(200)
        phases = [sched.review_epochs[0]] + [
            b - a for a, b in zip(sched.review_epochs, sched.review_epochs[1:])
        ]
        assert sum(phases) == 80

    def test_boundary(self):
        with pytest.raises(ConfigError):
            build_schedule(80)
        sched = build_schedule(81)
        assert sched.review_epochs[-1] == 80
        assert sched.final_phase == 1

    def test_round_lookup(self):
        sched = build_schedule(200)
        assert sched.round_of_epoch(30) == 1
        assert sched.round_of_epoch(80) == 8


class TestEnqueue:
    def _sample(self):
        m_known = disk_mask((64, 64), 20, 20, 8)
        return sample_from_masks([("galaxy", m_known)], sample_id="s0"), m_known

    def test_no_false_positives_empty_queue(self):
        sample, m_known = self._sample()
        preds = {"s0": output_of([det(m_known, score=0.95)])}
        items = enqueue_false_positives(preds, [sample])
        assert items == []

    def test_unannotated_object_enqueued(self):
        sample, m_known = self._sample()
        m_new = disk_mask((64, 64), 44, 44, 7)
        preds = {"s0": output_of([det(m_known, score=0.9), det(m_new, score=0.9)])}
        items = enqueue_false_positives(preds, [sample])
        assert len(items) == 1
        assert items[0].cls == "galaxy"
        assert items[0].status == "pending"
        np.testing.assert_array_equal(items[0].mask, m_new)

    def test_tidal_structures_never_enqueued(self):
        sample, _ = self._sample()
        m_new = disk_mask((64, 64), 44, 44, 7)
        preds = {"s0": output_of([det(m_new, cls="tidal_structure", score=0.99)])}
        assert enqueue_false_positives(preds, [sample]) == []

    def test_low_score_not_enqueued(self):
        sample, _ = self._sample()
        m_new = disk_mask((64, 64), 44, 44, 7)
        preds = {"s0": output_of([det(m_new, score=0.4)])}
        assert enqueue_false_positives(preds, [sample]) == []

    def test_matched_same_class_excluded_property(self):
        sample, m_known = self._sample()
        rng = np.random.default_rng(0)
        dets = [
            det(disk_mask((64, 64), rng.integers(10, 54), rng.integers(10, 54), 7),
                score=float(rng.uniform(0.5, 1)))
            for _ in range(10)
        ]
        items = enqueue_false_positives({"s0": output_of(dets)}, [sample])
        for item in items:
            assert mask_iou(item.mask, m_known) < 0.5


class TestApplyDecisions:
    def test_no_accepts_identical_labels_new_version(self):
        sample, m_known = TestEnqueue()._sample()
        item = item_of(disk_mask((64, 64), 44, 44, 7), status="rejected")
        out = apply_decisions([sample], [item])
        assert len(out[0].instances) == 1
        assert out[0].dataset_version == sample.dataset_version + 1

    def test_accepted_galaxies_bump_count(self):
        sample, _ = TestEnqueue()._sample()
        items = [
            item_of(disk_mask((64, 64), 40 + 4 * i, 44, 5), item_id=f"i{i}", status="accepted", round=2)
            for i in range(3)
        ]
        out = apply_decisions([sample], items)
        assert out[0].galaxy_count == sample.galaxy_count + 3
        assert len(out[0].instances) == 4
        for label in out[0].instances[1:]:
            assert label.provenance == Provenance.hitl(2)

    def test_pending_rejected(self):
        sample, _ = TestEnqueue()._sample()
        with pytest.raises(DataError, match="pending"):
            apply_decisions([sample], [item_of(disk_mask((64, 64), 44, 44, 7))])

    def test_append_only(self):
        sample, _ = TestEnqueue()._sample()
        item = item_of(disk_mask((64, 64), 44, 44, 7), status="accepted")
        out = apply_decisions([sample], [item])
        for before, after in zip(sample.instances, out[0].instances):
            assert before.cls == after.cls
            np.testing.assert_array_equal(before.mask, after.mask)
            assert before.provenance == after.provenance


class TestAcceptanceStats:
    def test_two_of_three(self):
        m = disk_mask((32, 32), 16, 16, 6)
        items = [
            item_of(m, item_id="a", status="accepted"),
            item_of(m, item_id="b", status="accepted"),
            item_of(m, item_id="c", status="rejected"),
        ]
        stats = acceptance_stats(items)
        assert stats["overall"] == pytest.approx(2 / 3)
        assert stats["per_round"][1] == pytest.approx(2 / 3)

    def test_empty_round_absent_not_zero(self):
        m = disk_mask((32, 32), 16, 16, 6)
        items = [item_of(m, item_id="p")]  # pending only
        stats = acceptance_stats(items)
        assert stats["overall"] is None
        assert stats["per_round"][1] is None


class TestOracle:
    def test_withheld_exact_match_accepted(self):
        m = disk_mask((64, 64), 30, 30, 8)
        hidden = {"s0": [InstanceLabel.from_mask("galaxy", m, Provenance.human())]}
        decisions = oracle_reviewer([item_of(m)], hidden)
        assert decisions == {"i0": "accepted"}

    def test_disjoint_rejected(self):
        m = disk_mask((64, 64), 30, 30, 8)
        far = disk_mask((64, 64), 10, 55, 5)
        hidden = {"s0": [InstanceLabel.from_mask("galaxy", far, Provenance.human())]}
        assert oracle_reviewer([item_of(m)], hidden) == {"i0": "rejected"}

    def test_iou_threshold_boundary(self):
        a = np.zeros((16, 32), dtype=bool)
        b = np.zeros((16, 32), dtype=bool)
        a[4, 0:8] = True
        b[4, 2:10] = True  # IoU = 6/10 = 0.6
        hidden = {"s0": [InstanceLabel.from_mask("galaxy", b, Provenance.human())]}
        assert oracle_reviewer([item_of(a)], hidden, iou_accept=0.5)["i0"] == "accepted"
        assert oracle_reviewer([item_of(a)], hidden, iou_accept=0.7)["i0"] == "rejected"

    def test_class_must_match(self):
        m = disk_mask((64, 64), 30, 30, 8)
        hidden = {"s0": [InstanceLabel.from_mask("diffuse_halo", m, Provenance.human())]}
        assert oracle_reviewer([item_of(m, cls="galaxy")], hidden)["i0"] == "rejected"


class TestWithhold:
    def test_fraction_and_classes(self):
        rng = np.random.default_rng(2)
        samples = []
        for i in range(20):
            masks = [
                ("galaxy", disk_mask((64, 64), 20, 20, 6)),
                ("tidal_structure", disk_mask((64, 64), 44, 44, 5)),
            ]
            samples.append(sample_from_masks(masks, sample_id=f"w{i}"))
        visible, hidden = withhold_labels(samples, 0.5, rng)
        n_hidden = sum(len(v) for v in hidden.values())
        assert 4 <= n_hidden <= 16  # binomial(20, 0.5) within wide bounds
        for labels in hidden.values():
            for label in labels:
                assert label.cls != "tidal_structure"
        total = sum(len(s.instances) for s in visible) + n_hidden
        assert total == 40


class TestStore:
    def _store(self, tmp_path):
        store = HitlStore(tmp_path / "state")
        m = disk_mask((48, 48), 24, 24, 7)
        items = [item_of(m, item_id=f"i{k}", sample_id="s0") for k in range(3)]
        store.add_items(items, round=1)
        return store

    def test_decide_and_idempotency(self, tmp_path):
        store = self._store(tmp_path)
        item, changed = store.decide("i0", "accepted")
        assert changed and item.status == "accepted"
        item2, changed2 = store.decide("i0", "accepted")
        assert not changed2 and item2.status == "accepted"
        log = (store.root / HitlStore.LOG).read_text().strip().splitlines()
        assert len(log) == 1  # idempotent repost appends nothing

    def test_conflict_raises(self, tmp_path):
        store = self._store(tmp_path)
        store.decide("i1", "accepted")
        with pytest.raises(DecisionConflict):
            store.decide("i1", "rejected")

    def test_unknown_item(self, tmp_path):
        store = self._store(tmp_path)
        with pytest.raises(DataError, match="unknown"):
            store.decide("nope", "accepted")

    def test_reload_from_disk(self, tmp_path):
        store = self._store(tmp_path)
        store.decide("i2", "rejected")
        fresh = HitlStore(store.root)
        assert fresh.items["i2"].status == "rejected"
        assert fresh.round == 1
        assert len(fresh.pending()) == 2

    def test_progress_counts(self, tmp_path):
        store = self._store(tmp_path)
        store.decide("i0", "accepted")
        progress = store.progress()
        assert progress["rounds"][1]["accepted"] == 1
        assert progress["rounds"][1]["pending"] == 2

    def test_version_lineage_strictly_increasing(self, tmp_path):
        store = self._store(tmp_path)
        store.record_version(1)
        with pytest.raises(DataError, match="increasing"):
            store.record_version(1)
