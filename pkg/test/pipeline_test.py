import pytest

from anonybench import ConfigException, run_pipeline
from anonybench.pipeline import (
    PROBE_ACTION, PROBE_PRIVACY, PROBE_PRIVACY_RAW, SplitCache, protocol_for, run_probes
)
from anonybench.trainer import Trainer


class TestSplitCache:
    def test_cached_per_variant(self, tiny_config):
        cache = SplitCache(tiny_config)
        known = cache.get()
        assert cache.get('known') is known
        novel = cache.get('novel')
        assert novel[0].config.variant == 'novel'
        assert novel[0].digest() != known[0].digest()

    def test_preloaded(self, tiny_config, tiny_splits):
        assert SplitCache(tiny_config, tiny_splits).get() is tiny_splits


class TestRunProbes:
    def test_identity_anonymizer(self, tiny_config, tiny_splits):
        result = run_probes(tiny_config, None, SplitCache(tiny_config, tiny_splits))
        report = result.report
        assert report.protocol == 'known'
        assert 0.0 <= report.top1 <= 1.0
        assert 0.0 <= report.cmap <= 1.0
        assert len(report.ap) == tiny_config.data.num_attributes
        assert report.n_eval == 4
        assert set(result.curves) == {'action_probe', 'privacy_probe'}

    def test_single_kind(self, tiny_config, tiny_splits):
        anonymizer = Trainer(tiny_config, *tiny_splits).anonymizer
        result = run_probes(tiny_config, anonymizer, SplitCache(tiny_config, tiny_splits), kinds=(PROBE_PRIVACY,))
        assert result.report.top1 is None
        assert result.report.cmap is not None

    def test_raw_pretrained_probe(self, tiny_config, tiny_splits):
        anonymizer = Trainer(tiny_config, *tiny_splits).anonymizer
        splits = SplitCache(tiny_config, tiny_splits)
        raw = run_probes(tiny_config, anonymizer, splits, 'raw-pretrained', (PROBE_PRIVACY_RAW,))
        identity = run_probes(tiny_config, None, splits, 'known', (PROBE_PRIVACY,))
        # same raw-trained probe, scored on different inputs
        assert raw.curves['privacy_probe'].rows == identity.curves['privacy_probe'].rows

    @pytest.mark.parametrize('protocol, kinds', [('unseen', (PROBE_ACTION,)), ('known', ('budget',))])
    def test_unknown(self, tiny_config, tiny_splits, protocol, kinds):
        with pytest.raises(ConfigException):
            run_probes(tiny_config, None, SplitCache(tiny_config, tiny_splits), protocol, kinds)


@pytest.mark.parametrize('kind, protocol, expected', [
    (PROBE_ACTION, 'novel', 'novel'),
    (PROBE_PRIVACY, 'known', 'known'),
    (PROBE_PRIVACY_RAW, 'known', 'raw-pretrained'),
])
def test_protocol_for(kind, protocol, expected):
    assert protocol_for(kind, protocol) == expected


class TestRunPipeline:
    def test_every_protocol(self, tiny_config, tiny_splits):
        result = run_pipeline(tiny_config, SplitCache(tiny_config, tiny_splits),
                              protocols=('known', 'novel', 'raw-pretrained'), run_id='r1')
        assert [r.protocol for r in result.reports] == ['known', 'novel', 'raw-pretrained']
        known, novel, raw = result.reports
        assert known.top1 is not None and novel.top1 is not None
        assert raw.top1 is None and raw.cmap is not None
        assert all(r.run_id == 'r1' for r in result.reports)
        assert all(r.wall_seconds == 0.0 for r in result.reports)
        assert known.l_penalty_final == result.trainer.curve('anonymization').last('l_penalty')
        assert 'known_action_probe' in result.curves
        assert result.checkpoint.epoch == tiny_config.train.anon_epochs

    def test_deterministic(self, tiny_config, tiny_splits):
        first = run_pipeline(tiny_config, SplitCache(tiny_config, tiny_splits)).reports[0]
        second = run_pipeline(tiny_config, SplitCache(tiny_config, tiny_splits)).reports[0]
        assert first.to_row() == second.to_row()
