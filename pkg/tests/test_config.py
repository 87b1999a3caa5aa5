import pytest

from config import HIDDEN_SIZES, debug_enabled, max_workers
from config.experiment import ExperimentConfig, config_hash, load_config, parse_config, serialize_config
from errors import ConfigurationError

SAMPLE = """
# scalar duel, oracle best responses
env.name = scalar-duel
fp.iterations = 5
fp.oracle = true
br.hidden = 32,16
br.opp.actor_lr = 0.001
diffusion.eta = 0.5
critic.gamma = 0.9
eval.br_steps = none
seed = 3   # trailing comment
"""


class TestParse:

    def test_values(self):
        config = parse_config(SAMPLE)
        assert config.env.name == 'scalar-duel'
        assert config.fp.iterations == 5
        assert config.fp.oracle is True
        assert config.br.hidden == (32, 16)
        assert config.critic.gamma == 0.9
        assert config.eval.br_steps is None
        assert config.seed == 3

    def test_side_override(self):
        config = parse_config(SAMPLE)
        assert config.br_for(1).actor_lr == 0.001
        assert config.br_for(0).actor_lr == config.br.actor_lr

    def test_shared_sections_reach_both_sides(self):
        config = parse_config(SAMPLE)
        for side in (0, 1):
            assert config.br_for(side).diffusion.eta == 0.5
            assert config.br_for(side).critic.gamma == 0.9

    def test_env_overrides(self):
        config = parse_config("env.name=particle-tag\nenv.num_pursuers=2\nenv.rho=0.2\n")
        assert config.env.overrides == {'num_pursuers': 2, 'rho': 0.2}

    def test_defaults(self):
        config = parse_config("")
        assert config.br.hidden == HIDDEN_SIZES
        assert config.critic.gamma is None
        assert config.fp.grid_episodes == 200
        assert config.diffusion.schedule == 'linear'
        assert config.diffusion.weight_baseline == 'min'
        assert config.br.guidance_source == 'fresh'

    def test_diffusion_keys(self):
        config = parse_config("diffusion.schedule=vp\ndiffusion.weight_baseline=mean\ndiffusion.denoise_weight=0.5")
        diffusion = config.br_for(0).diffusion
        assert (diffusion.schedule, diffusion.weight_baseline, diffusion.denoise_weight) == ('vp', 'mean', 0.5)

    @pytest.mark.parametrize('text, message', [
        ("fp.iteration=3", 'fp.iteration: unknown key'),
        ("br.ego.speed=3", 'br.ego.speed: unknown key'),
        ("optimizer.lr=3", 'unknown section'),
        ("fp.iterations=ten", 'fp.iterations'),
        ("fp.simultaneous=maybe", 'fp.simultaneous'),
        ("seed=1\njusttext", 'line 2'),
        ("iterations=3", 'iterations: unknown key'),
    ])
    def test_errors(self, text, message):
        with pytest.raises(ConfigurationError, match=message):
            parse_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(str(tmp_path / 'absent.txt'))

    def test_load(self, tmp_path):
        path = tmp_path / 'run.txt'
        path.write_text(SAMPLE, encoding='utf-8')
        assert load_config(str(path)).fp.iterations == 5


class TestValidate:

    def test_missing_env(self):
        with pytest.raises(ConfigurationError, match='env.name'):
            ExperimentConfig().validate()

    def test_warmup_beyond_budget(self):
        config = parse_config("env.name=scalar-duel\nbr.env_steps=100\nbr.ego.warmup_steps=200")
        with pytest.raises(ConfigurationError, match='br.ego.warmup_steps'):
            config.validate()

    def test_unknown_oracle(self):
        with pytest.raises(ConfigurationError, match='eval.oracle'):
            parse_config("env.name=scalar-duel\neval.oracle=exact").validate()

    @pytest.mark.parametrize('line, message', [
        ("diffusion.weight_baseline=median", 'diffusion.weight_baseline'),
        ("diffusion.schedule=cosine", 'diffusion.schedule'),
        ("diffusion.denoise_weight=-1", 'denoise_weight'),
        ("br.weight_target=distillation", 'guidance_source'),
    ])
    def test_diffusion_choices(self, line, message):
        with pytest.raises(ConfigurationError, match=message):
            parse_config(f"env.name=scalar-duel\n{line}").validate()

    def test_distillation_weights_with_replayed_actions(self):
        text = "env.name=scalar-duel\nbr.weight_target=distillation\nbr.guidance_source=buffer"
        assert parse_config(text).validate().br.weight_target == 'distillation'

    def test_valid(self):
        assert parse_config(SAMPLE).validate().env.name == 'scalar-duel'


class TestSerialize:

    def test_fixed_point(self):
        text = serialize_config(parse_config(SAMPLE))
        assert serialize_config(parse_config(text)) == text

    def test_sorted_lines(self):
        lines = serialize_config(parse_config(SAMPLE)).splitlines()
        assert lines == sorted(lines)
        assert 'br.opp.actor_lr=0.001' in lines
        assert 'eval.br_steps=none' in lines

    def test_hash_ignores_layout(self):
        tidy = parse_config("env.name=scalar-duel\nfp.iterations=3\n")
        messy = parse_config("\n  fp.iterations =   3   # three\n\nenv.name=scalar-duel\n")
        assert config_hash(tidy) == config_hash(messy)

    def test_hash_tracks_values(self):
        assert config_hash(parse_config("seed=1")) != config_hash(parse_config("seed=2"))


class TestEnvironment:

    def test_debug_flag(self, monkeypatch):
        monkeypatch.setenv('DIFFFP_DEBUG', '0')
        assert not debug_enabled()
        monkeypatch.setenv('DIFFFP_DEBUG', '1')
        assert debug_enabled()

    def test_thread_override(self, monkeypatch):
        monkeypatch.setenv('DIFFFP_THREADS', '3')
        assert max_workers() == 3
