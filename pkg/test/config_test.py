from pathlib import Path

import pytest

from anonybench import ConfigException, RunConfig, load_config
from anonybench.config import config_from_text, known_keys, parse_lines, parse_value

PARSE_CASES = [
    ('frames', ' 12 ', 12),
    ('noise', '0.25', 0.25),
    ('debug_checks', 'yes', True),
    ('wall_clock', 'False', False),
    ('optimizer', 'adam', 'adam'),
    ('sweep_limiters', '0.0, 0.5,1.0', [0.0, 0.5, 1.0]),
    ('sweep_protocols', 'known, raw-pretrained', ['known', 'raw-pretrained']),
]


class TestParseValue:
    @pytest.mark.parametrize('key, text, expected', PARSE_CASES)
    def test_types(self, key, text, expected):
        assert parse_value(key, text) == expected

    @pytest.mark.parametrize('key, text', [('frames', 'eight'), ('debug_checks', 'maybe'), ('mu', '')])
    def test_malformed(self, key, text):
        with pytest.raises(ConfigException) as info:
            parse_value(key, text)
        assert info.value.key == key

    def test_unknown_key(self):
        with pytest.raises(ConfigException) as info:
            parse_value('learning_rate', '0.1')
        assert info.value.key == 'learning_rate'
        assert info.value.exit_code == 2


class TestParseLines:
    def test_comments_and_blanks(self):
        values = parse_lines(['# header', '', 'seed = 3  # trailing', '  tau=0.5'])
        assert values == {'seed': 3, 'tau': 0.5}

    def test_missing_separator(self):
        with pytest.raises(ConfigException) as info:
            parse_lines(['seed 3'], 'run.conf')
        assert 'run.conf:1' in info.value.message


class TestRunConfig:
    def test_defaults_are_valid(self):
        config = RunConfig().validate()
        assert config.train.optimizer == 'sgd'
        assert config.train.mu == 1.0
        assert config.train.tau == 0.1
        assert config.train.skip == 4
        assert not config.train.wall_clock

    def test_replace_routes_keys(self):
        config = RunConfig().replace(frames=6, limiter=0.5)
        assert config.data.frames == 6
        assert config.train.limiter == 0.5

    def test_replace_unknown(self):
        with pytest.raises(ConfigException):
            RunConfig().replace(bogus=1)

    def test_render_reload(self):
        config = RunConfig().replace(seed=11, sweep_lambdas=[0.25, 1.0], debug_checks=True)
        again = config_from_text(config.render())
        assert again == config
        assert again.digest() == config.digest()

    def test_render_covers_every_key(self):
        rendered = RunConfig().render()
        assert [line.split(' = ')[0] for line in rendered.splitlines()] == known_keys()

    def test_digest_changes(self):
        assert RunConfig().digest() != RunConfig().replace(limiter=0.5).digest()

    @pytest.mark.parametrize('changes', [
        {'limiter': 1.5},
        {'lambda_penalty': -0.1},
        {'mu': 0.0},
        {'tau': 0.0},
        {'optimizer': 'rmsprop'},
        {'penalty_space': 'latent'},
        {'mu_mechanism': 'clip'},
        {'height': 10},
        {'num_attributes': 5},
        {'skip': 8},
        {'n_action_train': 3},
        {'sweep_limiters': [0.5, 2.0]},
        {'sweep_protocols': ['known', 'other']},
        {'batch_action': 0},
        {'f1_threshold': 1.0},
        {'variant': 'unseen'},
    ])
    def test_validation(self, changes):
        with pytest.raises(ConfigException) as info:
            RunConfig().replace(**changes).validate()
        assert info.value.key == next(iter(changes))


class TestLoadConfig:
    def test_defaults(self):
        assert load_config() == RunConfig()

    def test_file_and_overrides(self, tmp_path: Path):
        path = tmp_path / 'run.conf'
        path.write_text('seed = 4\nlimiter = 0.5\n', encoding='utf-8')
        config = load_config(path, ['limiter=0.7'])
        assert config.train.seed == 4
        assert config.train.limiter == 0.7

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(ConfigException):
            load_config(tmp_path / 'absent.conf')

    def test_invalid_override(self):
        with pytest.raises(ConfigException):
            load_config(overrides=['limiter=2'])

    def test_desk_profile(self):
        config = load_config(Path(__file__).parents[1] / 'conf' / 'desk.conf')
        assert config.train.optimizer == 'adam'
        assert not config.train.wall_clock
