"""
Plots and a text summary for a finished run directory. Reads artifacts only,
so rerunning on the same directory gives the same output.
"""

import json
import logging
from pathlib import Path

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from . import scoring

logger = logging.getLogger(__name__)

REQUIRED_ARTIFACTS = ('summary.json', 'analysis.json', 'tree.json', 'run_log.jsonl', 'curves.json')


class IncompleteRun(Exception):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"run directory is missing: {', '.join(self.missing)}")


def missing_artifacts(run_dir):
    run_dir = Path(run_dir)
    return [name for name in REQUIRED_ARTIFACTS if not (run_dir / name).exists()]


def load_run(run_dir):
    run_dir = Path(run_dir)
    missing = missing_artifacts(run_dir)
    if missing:
        raise IncompleteRun(missing)
    return {
        'summary': json.loads((run_dir / 'summary.json').read_text()),
        'analysis': json.loads((run_dir / 'analysis.json').read_text()),
        'tree': json.loads((run_dir / 'tree.json').read_text()),
        'curves': json.loads((run_dir / 'curves.json').read_text()),
    }


def plot_trajectory(analysis_report, path):
    """Best-so-far fitness per evaluation with phase transitions marked."""
    frame = pd.DataFrame(analysis_report['evaluations'])
    transitions = analysis_report['phase_transitions']
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(frame['index'], frame['fitness'], '.', color='0.6', label='evaluation')
    ax.step(frame['index'], frame['best_so_far'], where='post', color='C0', label='best so far')
    if transitions:
        ax.plot([e['index'] for e in transitions], [e['fitness'] for e in transitions], 'v',
                color='C3', markersize=9, label='phase transition')
    ax.set_xlabel('evaluation')
    ax.set_ylabel('fitness (AUC)')
    ax.legend(loc='lower right')
    fig.savefig(path, bbox_inches='tight')
    plt.close(fig)
    return len(transitions)


def plot_diversity(analysis_report, path):
    frame = pd.DataFrame(analysis_report['diversity'])
    fig, ax = plt.subplots(figsize=(8, 4))
    if len(frame):
        ax.plot(frame['index'], frame['shannon'], color='C0', label='Shannon index')
        twin = ax.twinx()
        twin.plot(frame['index'], frame['cid'], color='C1', label='CID')
        twin.set_ylabel('CID')
    ax.set_xlabel(f"evaluation (window {analysis_report['diversity_window']})")
    ax.set_ylabel('Shannon index')
    fig.savefig(path, bbox_inches='tight')
    plt.close(fig)


def plot_sensitivity(curves, path, far_range=scoring.FAR_RANGE):
    """Sensitive distance against false-alarm rate, x clamped to the scoring range."""
    fig, ax = plt.subplots(figsize=(7, 5))
    for node_id, curve in sorted(curves.items(), key=lambda item: int(item[0])):
        far = np.asarray(curve['far'])
        d_sens = np.asarray(curve['d_sens'])
        keep = (far >= far_range[0]) & (far <= far_range[1])
        ax.plot(far[keep], d_sens[keep], label=f"{curve['label']} #{node_id} ({curve['fitness']:.1f})")
    ax.set_xscale('log')
    ax.set_xlim(*far_range)
    ax.set_xlabel('false-alarm rate (per month)')
    ax.set_ylabel('sensitive distance (Mpc)')
    ax.legend(loc='best', fontsize='small')
    fig.savefig(path, bbox_inches='tight')
    plt.close(fig)
    return ax.get_xlim()


def summary_text(run):
    summary = run['summary']
    lines = [
        f"status: {summary['status']}",
        f"evaluations: {summary['evaluations']} of {summary['budget']}",
        f"seed fitness: {summary['seed_fitness']}",
        f"elite fitness: {summary['elite_fitness']} (node {summary['elite_node']})",
        f"test-split fitness: {summary['test_fitness']}",
        "elite lineage: " + ' -> '.join(f"{step['op']}#{step['id']}" for step in summary['lineage']),
        f"phase transitions: {len(run['analysis']['phase_transitions'])}",
    ]
    for event in run['analysis']['phase_transitions']:
        lines.append(f"  evaluation {event['index']}: {event['previous']:.2f} -> {event['fitness']:.2f} "
                     f"(+{event['gain']:.2f})")
    if summary.get('message'):
        lines.append(f"message: {summary['message']}")
    return '\n'.join(lines) + '\n'


def build_report(run_dir, far_range=scoring.FAR_RANGE, image_format='png'):
    """Write trajectory, diversity and sensitivity plots plus report.txt; returns the written paths."""
    run_dir = Path(run_dir)
    run = load_run(run_dir)
    paths = {
        'trajectory': run_dir / f"trajectory.{image_format}",
        'diversity': run_dir / f"diversity.{image_format}",
        'sensitivity': run_dir / f"sensitivity.{image_format}",
        'summary': run_dir / 'report.txt',
    }
    plot_trajectory(run['analysis'], paths['trajectory'])
    plot_diversity(run['analysis'], paths['diversity'])
    plot_sensitivity(run['curves'], paths['sensitivity'], far_range)
    paths['summary'].write_text(summary_text(run))
    logger.info("Report written to %s", run_dir)
    return paths
