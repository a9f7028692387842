#!/usr/bin/env python
"""
Command-line entry point: simulate, rank, analyze, ingest and probe.

    python app.py simulate --config configs/setting1.json --out results/setting1 --threads 4
    python app.py rank --config configs/rank_table.json
    python app.py analyze --data rates.csv --schema wide --q 20 --kmax 8 --out results/rates
    python app.py ingest --data rates.csv --schema long --q 20 --out results/panel
    python app.py probe --config configs/probe_acf.json

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

import argparse
import logging
import os
import sys
from contextlib import contextmanager
from dataclasses import replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.basis_algebra import build_fourier_basis, save_panel
from src.data_pipeline import aggregate_tail, load_panel_csv, log_smooth
from src.dgp import ModelConfig, model_config_to_dict, simulate_panel
from src.errors import ConfigError, DataError, SpftsError
from src.experiment_config import (
    ExperimentConfig,
    build_models,
    experiment_config_from_dict,
    experiment_config_to_dict,
    load_experiment_config,
    validate_experiment_config,
)
from src.experiment_tracker import record_report, run_replicates, summarize_replicates, summary_frame
from src.operator_calculus import build_omega
from src.plotting import plot_acf, plot_eigenvector_sweep, plot_eigenvectors, plot_scree, plot_scree_sweep
from src.rank_analyzer import (
    build_rank_report,
    format_rank_table,
    rank_report_to_dict,
    rank_table,
    trace_ce_omega,
)
from src.spectral_engine import eigendecompose, gram_matrix
from src.spurious_diagnostics import build_report, report_to_dict
from src.utils import SCHEMA_VERSION, configure_logging, export_frame_to_csv, write_json

logger = logging.getLogger(__name__)


@contextmanager
def stage(label: str):
    """Tag errors raised inside the block with a pipeline stage label"""
    try:
        yield
    except SpftsError as e:
        if getattr(e, 'stage', None) is None:
            e.stage = label
        raise


def _envelope(cfg: ExperimentConfig) -> Dict[str, Any]:
    return {
        'schema_version': SCHEMA_VERSION,
        'config_hash': cfg.digest,
        'config': experiment_config_to_dict(cfg)
    }


def _simulate_model(cfg: ExperimentConfig, model: ModelConfig, out_dir: str) -> Tuple[Dict[str, Any], np.ndarray]:
    """Replicates, records, summary and figures of one model; returns the summary and replicate-0 eigenvectors"""
    trace_CeOm = trace_ce_omega(model.cov, build_omega(model.loadings))

    with stage('eigen'):
        reports = run_replicates(
            model, cfg.replicates, cfg.k_max, cfg.threads, trace_CeOm, cfg.max_lag, cfg.persistence_cutoff, cfg.digest
        )

    with stage('report'):
        for replicate, report in enumerate(reports):
            record_report(report, replicate, out_dir)

        summary = summarize_replicates(reports)
        summary['trace_CeOm'] = trace_CeOm
        document = _envelope(cfg)
        document['model'] = model_config_to_dict(model)
        document['summary'] = summary
        write_json(document, os.path.join(out_dir, 'summary.json'))
        export_frame_to_csv(summary_frame(summary), os.path.join(out_dir, 'summary.csv'))

        # Figures from replicate 0 and the replicate medians
        eig = eigendecompose(gram_matrix(simulate_panel(model, 0)['panel']), min(cfg.k_max, model.T))
        plot_eigenvectors(eig['vectors'], out_dir, title=f"Setting {model.setting or 'custom'}, K={model.K}, replicate 0")
        plot_scree(summary['share_median'], summary['theory_shares'], out_dir,
                   summary['share_q25'], summary['share_q75'])

    logger.info(f"K={model.K}: median alignments {[round(a, 3) for a in summary['alignment_median'][:5]]}")
    return summary, eig['vectors']


def _sweep_labels(models: List[ModelConfig]) -> List[Tuple[str, str]]:
    """(label, subdirectory) per model: by K when the K values are distinct, by position otherwise"""
    Ks = [model.K for model in models]
    if len(set(Ks)) == len(Ks):
        return [(f"K={K}", f"K{K}") for K in Ks]
    return [(f"model {i} K={K}", f"model{i}_K{K}") for i, K in enumerate(Ks)]


def cmd_simulate(cfg: ExperimentConfig) -> Dict[str, Any]:
    """
    Monte Carlo replicates of one model, or of a sweep of models (typically K in
    {50, 10, 2}): per-replicate reports, summaries and figures

    A sweep writes each model into its own subdirectory and adds
    eigenvectors_sweep and scree_sweep figures comparing the models on shared axes.

    Args:
        cfg: Experiment configuration in simulate mode

    Returns:
        Summary dictionary (keyed by model label for a sweep)
    """
    models = build_models(cfg)
    if len(models) == 1:
        return _simulate_model(cfg, models[0], cfg.out_dir)[0]
    if len({model.T for model in models}) != 1:
        raise ConfigError("Models in a simulate sweep must share T")

    summaries, vectors, frames = {}, {}, []
    for (label, subdir), model in zip(_sweep_labels(models), models):
        summary, vectors[label] = _simulate_model(cfg, model, os.path.join(cfg.out_dir, subdir))
        summaries[label] = {'directory': subdir, 'model': model_config_to_dict(model), 'summary': summary}
        frames.append(summary_frame(summary).assign(model=label))

    with stage('report'):
        document = _envelope(cfg)
        document['models'] = summaries
        write_json(document, os.path.join(cfg.out_dir, 'summary.json'))
        export_frame_to_csv(pd.concat(frames, ignore_index=True), os.path.join(cfg.out_dir, 'summary.csv'))

        theory = next(iter(summaries.values()))['summary']['theory_shares']
        plot_eigenvector_sweep(vectors, cfg.out_dir, title=f"Setting {models[0].setting or 'custom'}")
        plot_scree_sweep({label: entry['summary']['share_median'] for label, entry in summaries.items()},
                         theory, cfg.out_dir)

    return {label: entry['summary'] for label, entry in summaries.items()}


def cmd_rank(cfg: ExperimentConfig) -> Dict[str, Any]:
    """
    Effective rank ledger of every model in the config, printed as a rank table

    Args:
        cfg: Experiment configuration in rank mode

    Returns:
        Dictionary with the reports and the rendered table
    """
    divergence = cfg.divergence or {}
    reports = [
        build_rank_report(model, cfg.rank_method, divergence.get('axis'), divergence.get('values'), cfg.digest)
        for model in build_models(cfg)
    ]

    with stage('report'):
        table = rank_table(reports)
        text = format_rank_table(table)
        document = _envelope(cfg)
        document['reports'] = [rank_report_to_dict(report) for report in reports]
        write_json(document, os.path.join(cfg.out_dir, 'rank_report.json'))
        export_frame_to_csv(table, os.path.join(cfg.out_dir, 'rank_table.csv'))

    print(text)
    return {'reports': reports, 'table': table, 'text': text}


def _ingest(cfg: ExperimentConfig):
    with stage('ingest'):
        raw = load_panel_csv(cfg.data, cfg.schema)
        if cfg.tail_cutoff is not None:
            raw = aggregate_tail(raw, cfg.tail_cutoff)

    with stage('smooth'):
        ctx = build_fourier_basis(cfg.q, cfg.m or raw.shape[2])
        panel = log_smooth(raw, ctx)

    return panel


def cmd_analyze(cfg: ExperimentConfig) -> Dict[str, Any]:
    """
    Full pipeline on a data file: ingest, smooth, Gram, eigen, report and figures

    Args:
        cfg: Experiment configuration in analyze mode

    Returns:
        Report dictionary as written to report.json
    """
    panel = _ingest(cfg)

    with stage('gram'):
        S = gram_matrix(panel)

    with stage('eigen'):
        eig = eigendecompose(S, min(cfg.k_max, S.T))

    with stage('report'):
        report = build_report(eig, panel.p, None, min(cfg.max_lag, S.T - 1), cfg.persistence_cutoff, cfg.digest)
        document = _envelope(cfg)
        document['report'] = report_to_dict(report)
        document['provenance'] = {
            'source': panel.provenance.get('source'),
            'interpolated_cells': len(panel.provenance.get('interpolated_cells', [])),
            'tail_aggregation': panel.provenance.get('tail_aggregation')
        }
        write_json(document, os.path.join(cfg.out_dir, 'report.json'))

        plot_eigenvectors(eig['vectors'], cfg.out_dir, title=os.path.basename(cfg.data))
        plot_scree(report.variance_shares[:report.k_max], report.theory_shares, cfg.out_dir)
        if report.acf:
            plot_acf(report.acf, report.white_noise_band, cfg.out_dir)

    logger.info(f"Alignments: {[round(a, 3) for a in report.alignments[:5]]}")
    return document['report']


def cmd_ingest(cfg: ExperimentConfig) -> Dict[str, Any]:
    """
    Ingest and smooth a data file into a coefficient panel container

    Args:
        cfg: Experiment configuration in ingest mode

    Returns:
        Dictionary describing the written panel
    """
    panel = _ingest(cfg)

    with stage('report'):
        path = save_panel(panel, os.path.join(_ensure_dir(cfg.out_dir), 'panel.npz'))
        document = _envelope(cfg)
        document.update({
            'panel': path,
            'p': panel.p,
            'T': panel.T,
            'q': panel.context.q,
            'm': panel.context.m,
            'interpolated_cells': panel.provenance.get('interpolated_cells', [])
        })
        write_json(document, os.path.join(cfg.out_dir, 'ingest.json'))

    return document


def cmd_probe_conjecture(cfg: ExperimentConfig) -> Dict[str, Any]:
    """
    Eigenvector persistence probe: lag-1 autocorrelations per eigenvector and the split
    between persistent and white-noise-like eigenvectors

    Args:
        cfg: Experiment configuration in probe mode

    Returns:
        Probe summary as written to probe.json
    """
    model = build_models(cfg)[0]

    with stage('eigen'):
        reports = run_replicates(
            model, cfg.replicates, cfg.k_max, cfg.threads, None, cfg.max_lag, cfg.persistence_cutoff, cfg.digest
        )

    with stage('report'):
        rows = []
        for replicate, report in enumerate(reports):
            for k, (value, persistent) in enumerate(zip(report.acf_lag1, report.persistent), start=1):
                rows.append({'replicate': replicate, 'k': k, 'acf_lag1': value, 'persistent': persistent})
        table = pd.DataFrame(rows, columns=['replicate', 'k', 'acf_lag1', 'persistent'])

        splits = [report.split for report in reports]
        summary = summarize_replicates(reports)
        document = _envelope(cfg)
        document['model'] = model_config_to_dict(model)
        document['probe'] = {
            'replicates': len(reports),
            'acf_lag1_median': summary['acf_lag1_median'],
            'persistent_fraction': table.groupby('k')['persistent'].mean().tolist() if rows else [],
            'split_counts': summary['split_counts'],
            'expected_split': cfg.expected_split,
            'expected_split_fraction': (
                sum(1 for s in splits if s == cfg.expected_split) / len(splits)
                if cfg.expected_split is not None else None
            ),
            'white_noise_band': reports[0].white_noise_band
        }
        write_json(document, os.path.join(cfg.out_dir, 'probe.json'))
        export_frame_to_csv(table, os.path.join(cfg.out_dir, 'probe_acf.csv'))
        if reports[0].acf:
            plot_acf(reports[0].acf, reports[0].white_noise_band, cfg.out_dir)

    print(table.groupby('k')['acf_lag1'].median().to_string())
    return document['probe']


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _resolve(args: argparse.Namespace, mode: str) -> ExperimentConfig:
    """Experiment config from --config (when given) with command-line overrides"""
    if getattr(args, 'config', None):
        cfg = load_experiment_config(args.config)
        if cfg.mode != mode:
            logger.warning(f"Config mode '{cfg.mode}' run as '{mode}'")
        cfg = replace(cfg, mode=mode)
    else:
        doc = {'mode': mode}
        if getattr(args, 'data', None):
            doc['data'] = args.data
        cfg = experiment_config_from_dict(doc)

    overrides = {}
    for name, field_name in [('out', 'out_dir'), ('threads', 'threads'), ('kmax', 'k_max'), ('data', 'data'),
                             ('schema', 'schema'), ('q', 'q'), ('m', 'm'), ('tail_cutoff', 'tail_cutoff'),
                             ('replicates', 'replicates')]:
        value = getattr(args, name, None)
        if value is not None:
            overrides[field_name] = value
    cfg = replace(cfg, **overrides)
    validate_experiment_config(cfg)

    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='spfts',
        description='Spurious factor diagnostics for non-stationary functional panels'
    )
    parser.add_argument('--log-level', default='INFO', dest='log_level',
                        help='Logging level (DEBUG, INFO, WARNING, ERROR).')
    subparsers = parser.add_subparsers(dest='command', required=True)

    simulate = subparsers.add_parser('simulate', help='Monte Carlo replicates of a model configuration.')
    simulate.add_argument('--config', required=True, help='Experiment config (JSON).')
    simulate.add_argument('--out', help='Output directory.')
    simulate.add_argument('--threads', type=int, help='Worker threads for replicates.')
    simulate.add_argument('--kmax', type=int, help='Number of eigenvectors to analyze.')
    simulate.add_argument('--replicates', type=int, help='Number of replicates.')

    rank = subparsers.add_parser('rank', help='Effective rank table for model configurations.')
    rank.add_argument('--config', required=True, help='Experiment config (JSON).')
    rank.add_argument('--out', help='Output directory.')

    for name, text in [('analyze', 'Eigen-analysis of a data file.'), ('ingest', 'Smooth a data file into a panel.')]:
        sub = subparsers.add_parser(name, help=text)
        sub.add_argument('--config', help='Optional experiment config (JSON).')
        sub.add_argument('--data', help='CSV file.')
        sub.add_argument('--schema', choices=['long', 'wide'], help='CSV layout.')
        sub.add_argument('--q', type=int, help='Number of basis functions.')
        sub.add_argument('--m', type=int, help='Grid points (defaults to the number of grid labels).')
        sub.add_argument('--tail-cutoff', dest='tail_cutoff', help='Grid label where the pooled tail starts.')
        sub.add_argument('--out', help='Output directory.')
        if name == 'analyze':
            sub.add_argument('--kmax', type=int, help='Number of eigenvectors to analyze.')

    probe = subparsers.add_parser('probe', help='Eigenvector autocorrelation probe.')
    probe.add_argument('--config', required=True, help='Experiment config (JSON).')
    probe.add_argument('--out', help='Output directory.')
    probe.add_argument('--threads', type=int, help='Worker threads for replicates.')
    probe.add_argument('--replicates', type=int, help='Number of replicates.')

    return parser


commands = {
    'simulate': cmd_simulate,
    'rank': cmd_rank,
    'analyze': cmd_analyze,
    'ingest': cmd_ingest,
    'probe': cmd_probe_conjecture
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run one subcommand and map failures to exit codes

    Args:
        argv: Argument list (defaults to sys.argv[1:])

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        cfg = _resolve(args, args.command)
        commands[args.command](cfg)
    except SpftsError as e:
        logger.error(f"{args.command} failed at stage '{getattr(e, 'stage', None) or 'config'}': {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed writing or reading files: {e}")
        return DataError.exit_code

    return 0


if __name__ == "__main__":
    sys.exit(main())
