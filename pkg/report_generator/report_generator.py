"""Run summaries: console report plus report.json."""

import os
from datetime import datetime
from typing import Dict, List, Optional

from config import SIDE_NAMES
from file_exporters import FileExporter


class ReportGenerator:
    """Collects per-iteration exploitability results and writes the run report."""

    def __init__(self, exporter: Optional[FileExporter] = None):
        self.results: List[Dict] = []
        self.exporter = exporter or FileExporter()

    def add_result(self, result: Dict):
        """Add one iteration's exploitability report (as a dict)."""
        self.results.append(result)

    def build(self, run_name: str, env_name: str, config_hash: str, extra: Optional[Dict] = None) -> Dict:
        totals = [r['total'] for r in self.results]
        data = {
            'run': run_name,
            'env': env_name,
            'config_hash': config_hash,
            'created': datetime.now().isoformat(timespec='seconds'),
            'summary': {
                'iterations': len(self.results),
                'final_exploitability': totals[-1] if totals else None,
                'best_exploitability': min(totals) if totals else None,
            },
            'iterations': self.results,
        }
        data.update(extra or {})
        return data

    def generate_report(self, run_dir: str, run_name: str, env_name: str, config_hash: str,
                        extra: Optional[Dict] = None) -> str:
        """Print the final report and save report.json in `run_dir`."""
        data = self.build(run_name, env_name, config_hash, extra)
        print(f"\n{'='*60}")
        print("FINAL REPORT")
        print('='*60)
        print(f"Run: {run_name} ({env_name})")
        print(f"Iterations evaluated: {data['summary']['iterations']}")
        if self.results:
            self._print_trace()
        for warning in sorted({w for r in self.results for w in r.get('warnings', [])}):
            print(f"Warning: {warning}")

        report_file = os.path.join(run_dir, 'report.json')
        self.exporter.write_json(data, report_file)
        print(f"\nDetailed report saved in: {report_file}")
        return report_file

    def _print_trace(self):
        """Print exploitability per evaluated iteration."""
        header = f"   {'iter':>4}  " + '  '.join(f"{'eps_' + n:>10}" for n in SIDE_NAMES) + f"  {'total':>10}"
        print(header)
        for r in self.results:
            eps = '  '.join(f"{e:>10.4f}" for e in r['epsilon'])
            print(f"   {r['iteration']:>4}  {eps}  {r['total']:>10.4f}")
        last = self.results[-1]
        if last.get('lower_bound'):
            print("   (rl oracle: values are lower bounds on the true exploitability)")

    def print_exploitability(self, report: Dict):
        """Console view of a single exploitability report."""
        print(f"\n{'='*60}")
        print("EXPLOITABILITY")
        print('='*60)
        print(f"Oracle: {report['oracle']}  episodes: {report['episodes']}")
        for side, name in enumerate(SIDE_NAMES):
            print(f"   {name}: br {report['br_payoffs'][side]:+.4f}  profile {report['profile_payoffs'][side]:+.4f}"
                  f"  eps {report['epsilon'][side]:+.4f} (+/- {report['half_widths'][side]:.4f})")
        print(f"   total: {report['total']:+.4f}")
        for warning in report.get('warnings', []):
            print(f"Warning: {warning}")

    def print_crossplay(self, summary: Dict[str, Dict[str, int]]):
        """Per-policy win/draw/loss totals."""
        print(f"\n{'='*60}")
        print("CROSS-PLAY")
        print('='*60)
        for name, totals in sorted(summary.items()):
            print(f"   {name}: W {totals['wins']}  D {totals['draws']}  L {totals['losses']}  ({totals['pairs']} pairs)")
