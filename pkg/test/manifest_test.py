import json
from datetime import timedelta
from pathlib import Path

import pytest

from anonybench import ArtifactIOException, ConfigException, RunManifest
from anonybench.manifest import digest_file


def make_manifest() -> RunManifest:
    return RunManifest(command='train', config='seed = 0\n', config_digest='abc', argv=['train'])


class TestRunManifest:
    def test_save_and_load(self, tmp_path: Path):
        artifact = tmp_path / 'out' / 'anonymizer.ckpt'
        artifact.parent.mkdir()
        artifact.write_bytes(b'weights')
        manifest = make_manifest()
        digest = manifest.add_artifact(tmp_path, artifact)
        path = manifest.save(tmp_path)

        assert path.name == 'train.manifest.json'
        loaded = RunManifest.load(path)
        assert loaded.artifacts == {'out/anonymizer.ckpt': digest}
        assert loaded.started == manifest.started
        assert loaded.finished == manifest.finished
        assert loaded.started.tzinfo is not None
        assert loaded.to_json() == manifest.to_json()

    def test_named_save(self, tmp_path: Path):
        assert make_manifest().save(tmp_path, 'probe_action_known').name == 'probe_action_known.manifest.json'

    def test_verify(self, tmp_path: Path):
        for name in ('a.csv', 'b.csv'):
            (tmp_path / name).write_text(name)
        manifest = make_manifest()
        manifest.add_artifact(tmp_path, tmp_path / 'a.csv')
        manifest.add_artifact(tmp_path, tmp_path / 'b.csv')
        assert manifest.verify(tmp_path) == []

        (tmp_path / 'a.csv').write_text('changed')
        (tmp_path / 'b.csv').unlink()
        assert manifest.verify(tmp_path) == ['a.csv', 'b.csv']

    def test_inputs(self, tmp_path: Path):
        source = tmp_path / 'pretrain.ckpt'
        source.write_bytes(b'x')
        manifest = make_manifest()
        manifest.add_input(source)
        assert manifest.inputs == {str(source): digest_file(source)}

    def test_duration(self):
        manifest = make_manifest()
        assert manifest.duration is None
        manifest.finished = manifest.started + timedelta(seconds=90)
        assert manifest.duration == 90.0

    @pytest.mark.parametrize('text', ['not json', '{}', '{"command": "x", "config": "", "config_digest": "",'
                                                         ' "started": "yesterday-ish"}'])
    def test_malformed(self, tmp_path: Path, text: str):
        path = tmp_path / 'bad.manifest.json'
        path.write_text(text)
        with pytest.raises(ConfigException):
            RunManifest.load(path)

    def test_missing(self, tmp_path: Path):
        with pytest.raises(ConfigException) as info:
            RunManifest.load(tmp_path / 'nothing.manifest.json')
        assert info.value.exit_code == 2

    def test_saved_json(self, tmp_path: Path):
        data = json.loads(make_manifest().save(tmp_path).read_text())
        assert data['command'] == 'train'
        assert data['finished'] is not None


def test_digest_missing_file(tmp_path: Path):
    with pytest.raises(ArtifactIOException) as info:
        digest_file(tmp_path / 'missing')
    assert info.value.exit_code == 4
