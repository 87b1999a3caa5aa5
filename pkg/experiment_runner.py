"""Experiment runner that orchestrates training, evaluation, tournaments and traces."""

import glob
import json
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import DEFAULT_OUT_DIR, EVAL_EPISODES, SIDE_NAMES
from config.experiment import ExperimentConfig, config_hash, load_config, parse_config, serialize_config
from envs import make_env
from errors import CheckpointNotFoundError, ConfigurationError, TraceError
from exploitability import (cross_play, grid_supported, measure_exploitability, resolve_oracle)
from file_exporters import FileExporter, checkpoint_entry, load_checkpoint, save_checkpoint
from fp_orchestrator import FpHistory, grid_operator, rl_operator, run_fictitious_play
from game_core import Env, SidePolicy, StreamSource, joint_policies, rollout
from policy_pool import MixturePolicy, PolicyCheckpoint, policy_from_checkpoint
from report_generator import ReportGenerator

logger = logging.getLogger(__name__)

MANIFEST = 'manifest.json'
CONFIG_FILE = 'config.txt'
METRICS_FILE = 'metrics.csv'


def checkpoint_file(side: int, iteration: int) -> str:
    return f"agent{side}/iter{iteration}.ckpt"


class ExperimentRunner:
    """Main class for running fictitious-play experiments and reading their run directories."""

    def __init__(self, out_dir: Optional[str] = None):
        self.out_dir = out_dir
        self.file_exporter = FileExporter()
        self.report_generator = ReportGenerator(self.file_exporter)

    # train

    def cmd_train(self, config_path: str) -> str:
        """Run fictitious play for a config file; returns the run directory."""
        config = load_config(config_path).validate()
        env = make_env(config.env.name, config.env.overrides)
        run_dir = os.path.join(self.out_dir or config.run.out_dir or DEFAULT_OUT_DIR, config.run.name)
        os.makedirs(run_dir, exist_ok=True)
        digest = config_hash(config)
        self.file_exporter.write_text(serialize_config(config), os.path.join(run_dir, CONFIG_FILE))
        print(f"Starting run '{config.run.name}' on {env.name} ({config.fp.iterations} iterations)")
        print(f"Run directory: {run_dir}")

        history = self.train(env, config, run_dir, digest)

        self.file_exporter.write_metrics(history.metrics_rows(), os.path.join(run_dir, METRICS_FILE))
        self.report_generator.results = []
        for report in history.reports:
            self.report_generator.add_result(report.to_dict())
        self.report_generator.generate_report(run_dir, config.run.name, env.name, digest,
                                              {'pool_digests': history.pool_hashes()})
        return run_dir

    def train(self, env: Env, config: ExperimentConfig, run_dir: str, digest: str) -> FpHistory:
        metadata = {'seed': str(config.seed), 'env': env.name, 'config_hash': digest}
        br_configs = [config.br_for(0), config.br_for(1)]
        if config.fp.oracle:
            if not grid_supported(env):
                raise ConfigurationError(f"fp.oracle: {env.name} does not support grid best responses")
            operator = grid_operator(config.fp.grid_n, config.fp.grid_episodes, metadata)
        else:
            operator = rl_operator(br_configs, metadata)
        oracle = resolve_oracle(env, config.eval.oracle)

        def evaluate(seed, profile):
            return measure_exploitability(env, profile, oracle, config.eval.episodes, seed, config.eval.grid_n,
                                          br_configs, config.eval.br_steps, config.eval.discounted)

        manifest = self._new_manifest(env, config, digest)

        def on_checkpoint(checkpoint: PolicyCheckpoint):
            file = checkpoint_file(checkpoint.side, checkpoint.fp_iteration)
            save_checkpoint(os.path.join(run_dir, file), checkpoint)
            manifest['agents'][checkpoint.side]['checkpoints'].append(checkpoint_entry(checkpoint, file))

        def on_iteration(k: int, history: FpHistory):
            manifest['iterations'] = k + 1
            for side, agent in enumerate(manifest['agents']):
                agent['weights'] = history.mixtures[side].weights.tolist()
            self.file_exporter.write_json(manifest, os.path.join(run_dir, MANIFEST))
            self.file_exporter.write_metrics(history.metrics_rows(), os.path.join(run_dir, METRICS_FILE))
            if history.reports:
                print(f"   iteration {k}: exploitability {history.reports[-1].total:.4f}")

        return run_fictitious_play(env, config.fp.iterations, operator, config.seed,
                                   simultaneous=config.fp.simultaneous, shared_pool=config.fp.shared_pool,
                                   evaluate=evaluate, initial_kind=config.br.learner_kind,
                                   on_checkpoint=on_checkpoint, on_iteration=on_iteration)

    def _new_manifest(self, env: Env, config: ExperimentConfig, digest: str) -> Dict:
        return {
            'run': config.run.name, 'env': env.name, 'env_overrides': dict(config.env.overrides),
            'seed': config.seed, 'config_hash': digest, 'shared_pool': config.fp.shared_pool, 'iterations': 0,
            'agents': [{'side': side, 'name': name, 'checkpoints': [], 'weights': []}
                       for side, name in enumerate(SIDE_NAMES)],
        }

    # run directory access

    def read_manifest(self, run_dir: str) -> Dict:
        path = os.path.join(run_dir, MANIFEST)
        if not os.path.isfile(path):
            raise CheckpointNotFoundError(f"no {MANIFEST} in {run_dir}")
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)

    def read_config(self, run_dir: str) -> ExperimentConfig:
        path = os.path.join(run_dir, CONFIG_FILE)
        if not os.path.isfile(path):
            return ExperimentConfig()
        with open(path, 'r', encoding='utf-8') as f:
            return parse_config(f.read())

    def load_profile(self, run_dir: str, iteration: Optional[int] = None
                     ) -> Tuple[Env, Tuple[MixturePolicy, MixturePolicy], Dict, int]:
        """Average strategies over every best response up to and including `iteration` (default: last)."""
        manifest = self.read_manifest(run_dir)
        done = int(manifest['iterations'])
        if iteration is None:
            iteration = done - 1
        if not 0 <= iteration < done:
            raise CheckpointNotFoundError(f"iteration {iteration} is outside the {done} stored iterations")
        env = make_env(manifest['env'], manifest.get('env_overrides', {}))
        pools: List[List[PolicyCheckpoint]] = []
        for agent in manifest['agents']:
            entries = [e for e in agent['checkpoints'] if e['fp_iteration'] <= iteration]
            pools.append([load_checkpoint(os.path.join(run_dir, e['file']), e) for e in entries])
        if manifest.get('shared_pool'):
            shared = sorted(pools[0] + pools[1], key=lambda c: (c.fp_iteration, c.side))
            profile = (MixturePolicy(shared), MixturePolicy(shared))
        else:
            profile = (MixturePolicy(pools[0]), MixturePolicy(pools[1]))
        return env, profile, manifest, iteration

    # exploit

    def cmd_exploit(self, run_dir: str, iteration: Optional[int] = None, oracle: Optional[str] = None,
                    episodes: Optional[int] = None, seed: Optional[int] = None, br_steps: Optional[int] = None,
                    out: Optional[str] = None) -> str:
        """Exploitability of the stored average strategies; returns the report path."""
        env, profile, manifest, iteration = self.load_profile(run_dir, iteration)
        config = self.read_config(run_dir)
        report = measure_exploitability(
            env, profile, oracle or config.eval.oracle, episodes or config.eval.episodes or EVAL_EPISODES,
            manifest['seed'] if seed is None else seed, config.eval.grid_n, [config.br_for(0), config.br_for(1)],
            br_steps or config.eval.br_steps, config.eval.discounted)
        report.iteration = iteration
        data = report.to_dict()
        self.report_generator.print_exploitability(data)
        out = out or os.path.join(run_dir, f"exploit_iter{iteration}.json")
        self.file_exporter.write_json(data, out)
        print(f"\nReport saved in: {out}")
        return out

    # tournament

    def _entries_from_source(self, source: str) -> List[Tuple[str, SidePolicy, int, Dict]]:
        if os.path.isdir(source):
            _, profile, manifest, iteration = self.load_profile(source)
            run = manifest['run']
            return [(f"{run}:{SIDE_NAMES[side]}", profile[side], side, manifest) for side in (0, 1)]
        paths = sorted(glob.glob(source))
        if not paths:
            raise CheckpointNotFoundError(f"no checkpoint matches {source}")
        entries = []
        for path in paths:
            run_dir = os.path.dirname(os.path.dirname(os.path.abspath(path)))
            manifest = self.read_manifest(run_dir)
            relative = os.path.relpath(os.path.abspath(path), run_dir).replace(os.sep, '/')
            known = [e for agent in manifest['agents'] for e in agent['checkpoints'] if e['file'] == relative]
            if not known:
                raise CheckpointNotFoundError(f"{path} is not listed in {run_dir}/{MANIFEST}")
            checkpoint = load_checkpoint(path, known[0])
            name = f"{manifest['run']}/{relative[:-len('.ckpt')]}"
            entries.append((name, policy_from_checkpoint(checkpoint), checkpoint.side, manifest))
        return entries

    def cmd_tournament(self, sources: Sequence[str], episodes: int, seed: int = 0, env_name: Optional[str] = None,
                       include_self: bool = False, out: Optional[str] = None) -> str:
        """Round-robin cross-play between run averages or single checkpoints; returns the CSV path."""
        entries = [e for source in sources for e in self._entries_from_source(source)]
        if len(entries) < 2:
            raise ConfigurationError("a tournament needs at least two policies")
        manifest = entries[0][3]
        env = make_env(env_name or manifest['env'], manifest.get('env_overrides', {}) if not env_name else {})
        named = [(name, policy) for name, policy, _, _ in entries]
        if env.spec.symmetric:
            table = cross_play(env, named, episodes, seed, include_self=include_self)
        else:
            rows = [(n, p) for n, p, side, _ in entries if side == 0]
            cols = [(n, p) for n, p, side, _ in entries if side == 1]
            table = cross_play(env, rows, episodes, seed, opponents=cols, include_self=include_self)

        out = out or os.path.join(self.out_dir or DEFAULT_OUT_DIR, 'tournament')
        os.makedirs(out, exist_ok=True)
        csv_path = os.path.join(out, 'crossplay.csv')
        summary = table.summary()
        self.file_exporter.write_crossplay_csv(table, csv_path)
        self.file_exporter.write_crossplay_excel(table, os.path.join(out, 'crossplay.xlsx'))
        self.file_exporter.write_json({
            'env': env.name, 'episodes': episodes, 'seed': seed, 'policies': summary,
            'pairs': [{'ego': row, 'opp': col, 'wins': int(table.wins[i, j]), 'draws': int(table.draws[i, j]),
                       'losses': int(table.losses[i, j]), 'mean_payoff': float(table.mean_payoff[i, j]),
                       'info': table.info[(row, col)]}
                      for i, j, row, col in table.cells()],
        }, os.path.join(out, 'crossplay_summary.json'))
        self.report_generator.print_crossplay(summary)
        return csv_path

    # trace

    def cmd_trace(self, run_dir: str, iteration: Optional[int] = None, episodes: int = 1,
                  seed: Optional[int] = None, out: Optional[str] = None) -> str:
        """Replay seeded episodes between the stored averages and dump per-step positions."""
        manifest = self.read_manifest(run_dir)
        env = make_env(manifest['env'], manifest.get('env_overrides', {}))
        if not env.traceable:
            raise TraceError(f"{env.name} exposes no positional state to trace")
        env, profile, manifest, iteration = self.load_profile(run_dir, iteration)
        seed = manifest['seed'] if seed is None else seed
        policies = joint_policies(env.spec, profile)
        rows: List[Dict[str, object]] = []
        fields: List[str] = []
        source = StreamSource(seed, env.spec.num_agents)

        for e in range(episodes):
            def observer(h, game, actions, rewards, episode=e):
                for agent, state in enumerate(game.trace_state()):
                    for key in state:
                        if key not in fields:
                            fields.append(key)
                    rows.append(dict(state, episode=episode, step=h, agent=agent,
                                     action=';'.join(f"{a:.6f}" for a in np.ravel(actions[agent])),
                                     reward=float(rewards[agent])))
            rollout(env, policies, seed, observer=observer, streams=source.episode(e))

        out = out or os.path.join(run_dir, f"trace_iter{iteration}.csv")
        self.file_exporter.write_trace(rows, fields, out)
        print(f"Trace saved in: {out} ({len(rows)} rows)")
        return out
