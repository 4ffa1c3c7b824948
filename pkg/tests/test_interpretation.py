import statistics

import numpy as np
import pytest

from ppn import interpretation, synth, training
from ppn.data import PatientRecord, prepare, split
from ppn.interpretation import IntegrityError
from ppn.model import PredictOutput


@pytest.fixture(scope="module")
def planted_runs():
    """Five small training runs on the same planted-subtype data."""
    ds = synth.default_dataset(n_patients=120, seed=3)
    tr, va, _ = split(ds, (0.7, 0.15, 0.15), seed=3)
    tr_n, stats = prepare(tr)
    va_n, _ = prepare(va, stats=stats)
    models = []
    for seed in range(5):
        config = training.TrainConfig(k=4, hidden=8, epochs=6, batch_size=32,
                                      refresh_epochs=(3,), freeze_duration=1, seed=seed)
        model, _ = training.train(config, tr_n, va_n)
        models.append(model)
    return models, tr


class TestCohorts:
    def test_argmax_assignment(self):
        out = PredictOutput(risk=0.5, similarities=np.array([0.9, 0.1]), health_status=None)
        assert out.nearest == 0

    def test_tie_breaks_low(self):
        out = PredictOutput(risk=0.5, similarities=np.array([0.5, 0.5]), health_status=None)
        assert out.nearest == 0

    def test_positive_scaling_never_moves_assignment(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            sims = rng.normal(size=4)
            base = PredictOutput(0.0, sims, None).nearest
            for c in (0.01, 3.7, 250.0):
                assert PredictOutput(0.0, c * sims, None).nearest == base

    def test_partition(self, tiny_model):
        model, ds = tiny_model
        cohorts = interpretation.build_cohorts(model, ds)
        assert len(cohorts) == model.arch.k
        assert sum(c.size for c in cohorts) == len(ds)
        members = [pid for c in cohorts for pid in c.member_ids]
        assert len(members) == len(set(members)) == len(ds)

    def test_cohort_statistics(self, tiny_model):
        model, ds = tiny_model
        by_id = {r.id: r for r in ds.records}
        for c in interpretation.build_cohorts(model, ds):
            if c.size == 0:
                continue
            recs = [by_id[pid] for pid in c.member_ids]
            assert c.positive_rate == pytest.approx(np.mean([r.label for r in recs]))
            for m, name in enumerate(ds.static_names):
                want = np.mean([r.static[m] for r in recs])
                assert c.static_means[name] == pytest.approx(want, abs=1e-12)

    def test_empty_cohort_reported_empty(self, tiny_model):
        model, ds = tiny_model
        # zero both prototypes: the cosine guard pins every similarity vector
        # to zeros, ties send everyone to slot 0, the rest must come out empty
        for j in range(model.arch.k):
            model.memory.nodes[j].value[...] = 0.0
        cohorts = interpretation.build_cohorts(model, ds)
        assert cohorts[0].size == len(ds)
        for c in cohorts[1:]:
            assert (c.size, c.member_ids, c.positive_rate, c.static_means) == (0, [], None, {})


class TestCards:
    def test_source_fields_verbatim(self, tiny_model):
        model, ds = tiny_model
        by_id = {r.id: r for r in ds.records}
        risks = model.prototype_risks_raw()
        cards = interpretation.prototype_cards(model, ds)
        assert [card.index for card in cards] == list(range(model.arch.k))
        for j, card in enumerate(cards):
            src = by_id[card.source_id]
            assert card.source_label == src.label
            assert card.risk == risks[j]
            for m, name in enumerate(ds.static_names):
                assert card.source_statics[name] == src.static[m]
            assert card.cohort.prototype_index == j

    def test_unknown_source_is_integrity_error(self, tiny_model):
        model, ds = tiny_model
        model.memory.source_ids[1] = "ghost"
        with pytest.raises(IntegrityError, match="ghost"):
            interpretation.prototype_cards(model, ds)

    def test_cards_span_planted_subtypes(self, planted_runs):
        models, raw_train = planted_runs
        by_id = {r.id: r for r in raw_train.records}
        coverage = []
        for model in models:
            cards = interpretation.prototype_cards(model, raw_train)
            coverage.append(len({by_id[c.source_id].meta["subtype"] for c in cards}))
        assert statistics.median(coverage) >= 3   # K=4 prototypes, 4 planted subtypes


class TestTrajectory:
    def test_length_matches_visits(self, tiny_model):
        model, ds = tiny_model
        for rec in ds.records[:5]:
            assert len(interpretation.trajectory(model, rec)) == rec.n_visits

    def test_single_visit_equals_truncated_record(self, tiny_model):
        model, ds = tiny_model
        rec = next(r for r in ds.records if r.n_visits >= 3)
        first = interpretation.trajectory(model, rec)[0]
        cut = PatientRecord(id=rec.id, dynamic=rec.dynamic[:1].copy(), mask=rec.mask[:1].copy(),
                            static=rec.static.copy(), label=rec.label)
        out = model.predict(cut)
        assert first.t == 1
        assert first.risk == out.risk
        assert first.similarities == [float(v) for v in out.similarities]

    def test_final_entry_reproduces_predict(self, tiny_model):
        model, ds = tiny_model
        for rec in ds.records[:6]:
            last = interpretation.trajectory(model, rec)[-1]
            out = model.predict(rec)
            assert last.risk == out.risk                      # bit-exact contract
            assert last.nearest == out.nearest
            assert last.similarities == [float(v) for v in out.similarities]

    def test_transplanted_patient_switches_cohort(self, planted_runs):
        models, raw_train = planted_runs
        model = models[0]
        # donor pair from different model-assigned cohorts, spliced mid-history
        outs = [model.predict(model.prepare_record(r)) for r in raw_train.records]
        j_first = outs[0].nearest
        donor_a = raw_train.records[0]
        donor_b = next(r for r, o in zip(raw_train.records, outs)
                       if o.nearest != j_first and r.n_visits >= 8)
        spliced = PatientRecord(
            id="switcher",
            dynamic=np.concatenate([donor_a.dynamic, donor_b.dynamic, donor_b.dynamic]),
            mask=np.concatenate([donor_a.mask, donor_b.mask, donor_b.mask]),
            static=donor_b.static.copy(), label=donor_b.label)
        entries = interpretation.trajectory(model, spliced)
        assert len({e.nearest for e in entries}) >= 2


class TestExports:
    def test_cards_csv(self, tmp_path, tiny_model):
        model, ds = tiny_model
        cards = interpretation.prototype_cards(model, ds)
        path = tmp_path / "cards.csv"
        interpretation.export_cards_csv(cards, ds.static_names, str(path))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "prototype,source_id,stat0,stat1,label,risk"
        assert len(lines) == 1 + model.arch.k

    def test_cohorts_csv_with_empty_cells(self, tmp_path, tiny_model):
        model, ds = tiny_model
        for j in range(model.arch.k):   # all-zero prototypes force everyone into slot 0
            model.memory.nodes[j].value[...] = 0.0
        cohorts = interpretation.build_cohorts(model, ds)
        path = tmp_path / "cohorts.csv"
        interpretation.export_cohorts_csv(cohorts, ds.static_names, str(path))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "prototype,mean_stat0,mean_stat1,positive_rate,size"
        assert len(lines) == 1 + model.arch.k
        row = lines[2].split(",")       # prototype 1 came out empty
        assert row[1] == "" and row[3] == "" and row[4] == "0"
