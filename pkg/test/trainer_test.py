from unittest.mock import MagicMock

import numpy as np
import pytest

from anonybench import Checkpoint, ConfigException, NumericalException, StepIsolationException, Trainer
from anonybench import train_action_probe, train_anonymization, train_privacy_probe
from anonybench.trainer import (
    PHASE_ANONYMIZATION, PHASE_PRETRAIN, Batch, CurveLog, anonymize_array, initialize, rms_distortion
)


def first_batch(trainer: Trainer) -> Batch:
    return next(iter(trainer.epoch_batches(0)))


def grads(trainer: Trainer) -> dict:
    params = trainer.anonymizer.params.items()
    return {name: np.zeros(t.shape) if t.grad is None else t.grad.copy() for name, t in params}


class TestCurveLog:
    def test_csv_and_json(self):
        curve = CurveLog(PHASE_PRETRAIN)
        curve.add(epoch=0, l1=0.5, wall=1.25)
        curve.add(epoch=1, l1=0.25, wall=2.5)
        assert curve.to_csv() == 'epoch,l1,wall\n0,0.5,1.25\n1,0.25,2.5\n'
        assert curve.to_json() == [[0.0, 0.5, 0.0], [1.0, 0.25, 0.0]]
        assert curve.last('l1') == 0.25
        assert CurveLog(PHASE_ANONYMIZATION).last('l_a') is None

    def test_missing_column(self):
        with pytest.raises(KeyError):
            CurveLog(PHASE_PRETRAIN).add(epoch=0, wall=0.0)


class TestInitialisation:
    def test_pretrain(self, tiny_config, tiny_splits):
        trainer = Trainer(tiny_config, *tiny_splits)
        mae = trainer.pretrain_anonymizer(epochs=2)
        assert np.isfinite(mae) and mae >= 0
        assert trainer.held_out_mae == mae
        assert trainer.completed[PHASE_PRETRAIN] == 2
        assert len(trainer.curve(PHASE_PRETRAIN).rows) == 2

    def test_initialize_runs_every_phase(self, tiny_config, tiny_splits):
        trainer = initialize(tiny_config, *tiny_splits)
        assert trainer.completed == {'pretrain': 1, 'utility_pretrain': 1, 'budget_pretrain': 1}

    def test_same_seed_same_weights(self, tiny_config, tiny_splits):
        a = initialize(tiny_config, *tiny_splits).checkpoint()
        b = initialize(tiny_config, *tiny_splits).checkpoint()
        assert a.digest() == b.digest()


class TestSteps:
    def test_step1_only_moves_anonymizer(self, tiny_config, tiny_splits):
        trainer = Trainer(tiny_config, *tiny_splits)
        before = {net.name: net.params.digest() for net in trainer.networks}
        report = trainer.train_step1(first_batch(trainer))
        assert np.isfinite([report.l_t, report.l_b, report.l_penalty, report.l_a]).all()
        assert trainer.anonymizer.params.digest() != before['anonymizer']
        assert trainer.utility.params.digest() == before['utility']
        assert trainer.budget.params.digest() == before['budget']
        assert all(t.requires_grad for t in trainer.utility.params)

    def test_step2_leaves_anonymizer(self, tiny_config, tiny_splits):
        trainer = Trainer(tiny_config, *tiny_splits)
        before = {net.name: net.params.digest() for net in trainer.networks}
        l_t, l_b = trainer.train_step2(first_batch(trainer))
        assert np.isfinite([l_t, l_b]).all()
        assert trainer.anonymizer.params.digest() == before['anonymizer']
        assert trainer.utility.params.digest() != before['utility']
        assert trainer.budget.params.digest() != before['budget']

    def test_step1_isolation_violation(self, tiny_config, tiny_splits):
        trainer = Trainer(tiny_config, *tiny_splits)

        def tamper():
            w = trainer.budget.params['proj2_b']
            w.assign(w.data + 1.0)

        trainer.optimizers['anonymizer'] = MagicMock(step=MagicMock(side_effect=tamper))
        with pytest.raises(StepIsolationException) as info:
            trainer.train_step1(first_batch(trainer))
        assert info.value.network == 'budget'
        assert info.value.exit_code == 3

    def test_step2_isolation_violation(self, tiny_config, tiny_splits):
        trainer = Trainer(tiny_config, *tiny_splits)

        def tamper():
            w = trainer.anonymizer.params['out_b']
            w.assign(w.data + 1.0)

        trainer.optimizers['budget'] = MagicMock(step=MagicMock(side_effect=tamper))
        with pytest.raises(StepIsolationException) as info:
            trainer.train_step2(first_batch(trainer))
        assert info.value.network == 'anonymizer'

    def test_penalty_only_sees_action_batch(self, tiny_config, tiny_splits):
        trainer = Trainer(tiny_config, *tiny_splits)
        with trainer.utility.params.frozen(), trainer.budget.params.frozen():
            tape, terms, (view1, view2) = trainer.anonymizer_terms(first_batch(trainer))
        assert not tape.depends_on(terms.l_penalty, view1)
        assert not tape.depends_on(terms.l_penalty, view2)
        assert tape.depends_on(terms.l_b, view1)
        assert tape.depends_on(terms.l_a, view2)

    @pytest.mark.parametrize('space', ['pixel', 'feature'])
    def test_penalty_space(self, make_config, tiny_splits, space):
        trainer = Trainer(make_config(penalty_space=space, limiter=0.0), *tiny_splits)
        report = trainer.train_step1(first_batch(trainer))
        assert report.l_penalty > 0

    def test_budget_term_is_ascended(self, make_config, tiny_splits):
        trainer = Trainer(make_config(lambda_penalty=0.0, mu_mechanism='none'), *tiny_splits)
        batch = first_batch(trainer)
        with trainer.utility.params.frozen(), trainer.budget.params.frozen():
            tape, terms, _ = trainer.anonymizer_terms(batch, include_utility=False)
            tape.backward(terms.l_a)
            descent = grads(trainer)
            trainer.anonymizer.params.zero_grad()
            tape.backward(terms.l_b)
            budget = grads(trainer)
        for name in descent:
            assert np.allclose(descent[name], -budget[name])
        assert any(np.abs(g).max() > 0 for g in budget.values())

    def test_budget_loss_rises_after_step1(self, make_config, tiny_splits):
        trainer = Trainer(make_config(lambda_penalty=0.0, mu_mechanism='none', optimizer='sgd'), *tiny_splits)
        batch = first_batch(trainer)

        def budget_loss() -> float:
            with trainer.utility.params.frozen(), trainer.budget.params.frozen():
                return trainer.anonymizer_terms(batch, include_utility=False)[1].l_b.item()

        before = budget_loss()
        trainer.train_step1(batch, include_utility=False)
        assert budget_loss() > before

    def test_margin_caps_budget_term(self, make_config, tiny_splits):
        trainer = Trainer(make_config(lambda_penalty=0.0, mu=1e-6, optimizer='sgd'), *tiny_splits)
        before = trainer.anonymizer.params.digest()
        report = trainer.train_step1(first_batch(trainer), include_utility=False)
        assert report.l_b > 1e-6
        assert report.l_a == pytest.approx(report.l_t - 1e-6)
        assert trainer.anonymizer.params.digest() == before

    def test_non_finite_loss(self, tiny_config, tiny_splits):
        trainer = Trainer(tiny_config, *tiny_splits)
        bias = trainer.anonymizer.params['out_b']
        bias.assign(np.full(bias.shape, np.nan))
        with pytest.raises(NumericalException) as info:
            trainer.train_step1(first_batch(trainer))
        assert info.value.stage == 'step1'
        assert info.value.exit_code == 3


class TestAnonymization:
    def test_curve(self, tiny_config, tiny_splits):
        trainer = initialize(tiny_config, *tiny_splits)
        curve = trainer.train_anonymization()
        assert curve.column('epoch') == [0.0, 1.0]
        assert curve.column('wall') == [0.0, 0.0]
        assert trainer.checkpoint().epoch == 2

    def test_zero_epochs_keep_initialisation(self, make_config, tiny_splits):
        config = make_config(anon_epochs=0)
        initial = initialize(config, *tiny_splits).checkpoint()
        trainer, checkpoint = train_anonymization(config, *tiny_splits, initial=initial)
        assert trainer.curve(PHASE_ANONYMIZATION).rows == []
        assert checkpoint.networks['anonymizer'].keys() == initial.networks['anonymizer'].keys()
        for name, arr in initial.networks['anonymizer'].items():
            assert np.array_equal(checkpoint.networks['anonymizer'][name], arr)

    def test_deterministic(self, tiny_config, tiny_splits):
        first = train_anonymization(tiny_config, *tiny_splits)[1]
        second = train_anonymization(tiny_config, *tiny_splits)[1]
        assert first.digest() == second.digest()

    @pytest.mark.parametrize('optimizer', ['sgd', 'adam'])
    def test_resume_matches_uninterrupted(self, make_config, tiny_splits, optimizer):
        config = make_config(optimizer=optimizer)
        uninterrupted = train_anonymization(config, *tiny_splits)[1]

        halfway = initialize(config, *tiny_splits)
        halfway.train_anonymization(epochs=1)
        saved = Checkpoint.from_bytes(halfway.checkpoint().to_bytes())

        resumed = Trainer(config, *tiny_splits)
        resumed.restore(saved)
        resumed.train_anonymization()
        assert resumed.checkpoint().digest() == uninterrupted.digest()

    def test_restore_missing_network(self, tiny_config, tiny_splits):
        trainer = Trainer(tiny_config, *tiny_splits)
        with pytest.raises(ConfigException):
            trainer.restore(Checkpoint(networks={'anonymizer': trainer.anonymizer.params.state()}))


class TestProbes:
    def test_action_probe(self, tiny_config, tiny_splits):
        trainer = Trainer(tiny_config, *tiny_splits)
        before = trainer.anonymizer.params.digest()
        probe, curve = train_action_probe(trainer.anonymizer, tiny_splits[0], tiny_config)
        assert probe.name == 'action_probe'
        assert len(curve.rows) == tiny_config.train.action_epochs
        assert trainer.anonymizer.params.digest() == before

    @pytest.mark.parametrize('arch', ['conv', 'linear'])
    def test_privacy_probe(self, make_config, tiny_splits, arch):
        config = make_config(privacy_probe_arch=arch, probe_schedule='warmup_step')
        probe, curve = train_privacy_probe(None, tiny_splits[1], config)
        assert curve.column('lr')[0] < config.train.lr_probe
        assert np.isfinite(curve.column('loss')).all()

    def test_probe_is_seeded(self, tiny_config, tiny_splits):
        a, _ = train_action_probe(None, tiny_splits[0], tiny_config)
        b, _ = train_action_probe(None, tiny_splits[0], tiny_config)
        assert a.params.digest() == b.params.digest()


class TestHelpers:
    def test_identity_bypass(self, tiny_splits):
        inputs = tiny_splits[1].inputs('eval')
        assert anonymize_array(None, inputs) is inputs

    def test_anonymize_clips_and_frames(self, tiny_config, tiny_splits):
        trainer = Trainer(tiny_config, *tiny_splits)
        clips = tiny_splits[0].inputs('eval')
        out = anonymize_array(trainer.anonymizer, clips)
        assert out.shape == clips.shape
        frames = anonymize_array(trainer.anonymizer, clips[:, 0])
        assert np.allclose(out[:, 0], frames)

    def test_rms_distortion(self, tiny_config, tiny_splits):
        trainer = Trainer(tiny_config, *tiny_splits)
        assert rms_distortion(trainer.anonymizer, tiny_splits[1].inputs('eval')) > 0
