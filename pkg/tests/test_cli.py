import csv
import json
import os

import numpy as np
import pytest

from config import EXIT_CHECKPOINT, EXIT_CONFIG, EXIT_OK, EXIT_TRACE
from experiment_runner import MANIFEST, checkpoint_file
from file_exporters import checkpoint_entry, save_checkpoint
from game_core import ConstantPolicy
from main import main
from policy_pool import PolicyCheckpoint

DUEL_CONFIG = """
env.name = scalar-duel
fp.iterations = 5
fp.oracle = true
fp.grid_n = 11
fp.grid_episodes = 5
eval.episodes = 20
eval.grid_n = 11
run.name = duel
seed = 3
"""

TAG_CONFIG = """
env.name = particle-tag
env.num_pursuers = 1
env.horizon = 8
fp.iterations = 1
br.env_steps = 16
br.warmup_steps = 16
br.batch_size = 8
br.hidden = 8,8
br.log_interval = 8
diffusion.steps = 2
eval.episodes = 2
eval.br_steps = 16
run.name = tag
seed = 1
"""


def write_config(tmp_path, text, name='run.txt'):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return str(path)


def read_rows(path):
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.DictReader(f))


def constant_run(root, name, x, y):
    """Run directory with one constant best response per side."""
    run_dir = os.path.join(str(root), name)
    manifest = {'run': name, 'env': 'scalar-duel', 'env_overrides': {}, 'seed': 0, 'config_hash': '',
                'shared_pool': False, 'iterations': 1, 'agents': []}
    for side, action in enumerate((x, y)):
        checkpoint = PolicyCheckpoint.from_actor(ConstantPolicy([action], 1), 0, side)
        file = checkpoint_file(side, 0)
        save_checkpoint(os.path.join(run_dir, file), checkpoint)
        manifest['agents'].append({'side': side, 'name': ('ego', 'opp')[side],
                                   'checkpoints': [checkpoint_entry(checkpoint, file)], 'weights': [1.0]})
    with open(os.path.join(run_dir, MANIFEST), 'w', encoding='utf-8') as f:
        json.dump(manifest, f)
    return run_dir


class TestTrain:

    def test_scalar_duel_oracle_run(self, tmp_path):
        config = write_config(tmp_path, DUEL_CONFIG)
        assert main(['--out', str(tmp_path / 'runs'), 'train', config]) == EXIT_OK
        run_dir = tmp_path / 'runs' / 'duel'
        rows = read_rows(run_dir / 'metrics.csv')
        evals = [r for r in rows if r['agent'] == 'eval']
        assert len(evals) == 5
        assert all(np.isfinite(float(r['eps_total'])) for r in evals)
        assert len(rows) == 15

        manifest = json.loads((run_dir / MANIFEST).read_text(encoding='utf-8'))
        assert manifest['iterations'] == 5
        assert [len(agent['checkpoints']) for agent in manifest['agents']] == [5, 5]
        assert manifest['agents'][0]['weights'] == pytest.approx([0.2] * 5)
        assert (run_dir / 'agent1' / 'iter4.ckpt').is_file()
        report = json.loads((run_dir / 'report.json').read_text(encoding='utf-8'))
        assert report['summary']['iterations'] == 5
        assert (run_dir / 'config.txt').is_file()

    def test_same_seed_same_metrics(self, tmp_path):
        config = write_config(tmp_path, DUEL_CONFIG)
        tables = []
        for out in ('a', 'b'):
            assert main(['--out', str(tmp_path / out), 'train', config]) == EXIT_OK
            rows = read_rows(tmp_path / out / 'duel' / 'metrics.csv')
            tables.append([{k: v for k, v in r.items() if k != 'wall_seconds'} for r in rows])
        assert tables[0] == tables[1]

    def test_missing_env(self, tmp_path):
        config = write_config(tmp_path, "fp.iterations = 2\n")
        assert main(['--out', str(tmp_path), 'train', config]) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert main(['train', str(tmp_path / 'absent.txt')]) == EXIT_CONFIG


class TestExploit:

    def test_constant_profile(self, tmp_path):
        run_dir = constant_run(tmp_path, 'ones', 1.0, 1.0)
        assert main(['exploit', run_dir, '--episodes', '10']) == EXIT_OK
        report = json.loads(open(os.path.join(run_dir, 'exploit_iter0.json'), encoding='utf-8').read())
        assert report['epsilon'] == pytest.approx([0.0, 2.0])
        assert report['total'] == pytest.approx(2.0)
        assert report['oracle'] == 'grid'
        assert report['iteration'] == 0

    def test_report_path(self, tmp_path):
        run_dir = constant_run(tmp_path, 'zeros', 0.0, 0.0)
        out = str(tmp_path / 'eps.json')
        assert main(['exploit', run_dir, '--episodes', '5', '--report', out]) == EXIT_OK
        assert json.loads(open(out, encoding='utf-8').read())['total'] == 0.0

    def test_iteration_out_of_range(self, tmp_path):
        run_dir = constant_run(tmp_path, 'ones', 1.0, 1.0)
        assert main(['exploit', run_dir, '--iteration', '3']) == EXIT_CHECKPOINT

    def test_missing_run(self, tmp_path):
        assert main(['exploit', str(tmp_path / 'nowhere')]) == EXIT_CHECKPOINT

    def test_corrupted_checkpoint(self, tmp_path):
        run_dir = constant_run(tmp_path, 'ones', 1.0, 1.0)
        path = os.path.join(run_dir, checkpoint_file(1, 0))
        with open(path, 'r+b') as f:
            f.seek(20)
            byte = f.read(1)
            f.seek(20)
            f.write(bytes([byte[0] ^ 0xFF]))
        assert main(['exploit', run_dir]) == EXIT_CHECKPOINT


class TestTournament:

    def test_two_runs(self, tmp_path):
        first = constant_run(tmp_path, 'up', 1.0, 1.0)
        second = constant_run(tmp_path, 'down', -1.0, -1.0)
        dest = tmp_path / 'cross'
        assert main(['tournament', first, second, '--episodes', '4', '--dest', str(dest)]) == EXIT_OK
        summary = json.loads((dest / 'crossplay_summary.json').read_text(encoding='utf-8'))
        assert len(summary['pairs']) == 4
        pair = next(p for p in summary['pairs'] if p['ego'] == 'up:ego' and p['opp'] == 'down:opp')
        assert (pair['wins'], pair['draws'], pair['losses']) == (0, 0, 4)
        assert (dest / 'crossplay.csv').is_file()
        assert (dest / 'crossplay.xlsx').is_file()

    def test_checkpoint_glob(self, tmp_path):
        constant_run(tmp_path, 'up', 1.0, 1.0)
        constant_run(tmp_path, 'down', -1.0, -1.0)
        pattern = str(tmp_path / '*' / 'agent*' / 'iter0.ckpt')
        dest = tmp_path / 'cross'
        assert main(['tournament', pattern, '--episodes', '2', '--dest', str(dest)]) == EXIT_OK
        rows = list(csv.reader(open(dest / 'crossplay.csv', newline='', encoding='utf-8')))
        assert rows[0][1:] == ['down/agent1/iter0', 'up/agent1/iter0']

    def test_needs_two_policies(self, tmp_path):
        constant_run(tmp_path, 'up', 1.0, 1.0)
        pattern = str(tmp_path / 'up' / 'agent0' / 'iter0.ckpt')
        assert main(['tournament', pattern]) == EXIT_CONFIG

    def test_no_match(self, tmp_path):
        assert main(['tournament', str(tmp_path / '*.ckpt'), str(tmp_path / 'x.ckpt')]) == EXIT_CHECKPOINT


class TestTrace:

    def test_untraceable_game(self, tmp_path):
        run_dir = constant_run(tmp_path, 'ones', 1.0, 1.0)
        assert main(['trace', run_dir]) == EXIT_TRACE

    def test_particle_tag_trace(self, tmp_path):
        config = write_config(tmp_path, TAG_CONFIG)
        assert main(['--out', str(tmp_path / 'runs'), 'train', config]) == EXIT_OK
        run_dir = str(tmp_path / 'runs' / 'tag')

        paths = [str(tmp_path / f"trace_{n}.csv") for n in ('a', 'b')]
        for path in paths:
            assert main(['trace', run_dir, '--csv', path]) == EXIT_OK
        with open(paths[0], 'rb') as a, open(paths[1], 'rb') as b:
            assert a.read() == b.read()

        rows = read_rows(paths[0])
        steps = sorted({int(r['step']) for r in rows})
        assert steps == list(range(len(steps)))
        assert 1 <= len(steps) <= 8
        assert len(rows) == 2 * len(steps)
        assert {'x', 'y', 'vx', 'vy', 'action', 'reward'} <= set(rows[0])

        assert main(['trace', run_dir, '--iteration', '5']) == EXIT_CHECKPOINT
