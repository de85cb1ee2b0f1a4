"""Experiment runner.

    coopoap run --scenario fig2 [--root-seed N] [--out DIR] [--format csv|plot|both]
                [--protocols coop,synapse] [--jobs N]
    coopoap trace --scenario fig1.scripted --protocol coop [--out FILE]
    coopoap list

`run` simulates every (protocol, k, erasure, replicate) of a scenario and
writes

    results.csv         one `ResultRow` per replicate
    summary.csv         one `SummaryRow` per (protocol, k, erasure)
    completion-e<erasure>.svg
                        completion time over k, one line per protocol

Replicate r of every protocol runs with seed root_seed + r, so protocols are
compared on paired seeds.  Rows are sorted before writing, the output does
not depend on `--jobs`.

"""
import argparse
import csv
import logging
import sys

from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from itertools import groupby
from pathlib import Path

import numpy as np

from pgcooldown import Cooldown

from coopoap.codec import Page
from coopoap.engine import Simulation, derive_rng
from coopoap.protocols import available_protocols, load_protocol
from coopoap.scenario import bundled_scenarios, load_scenario

log = logging.getLogger(__name__)

__all__ = ['ResultRow', 'SummaryRow', 'simulate', 'run_replicate', 'run_scenario',
           'summarize', 'emit', 'trace_text', 'main', 'OutputError', 'DisseminationError']

BASELINES = ('flood', 'deluge', 'rateless_deluge', 'synapse')


class OutputError(Exception):
    def __init__(self, path, reason):
        super().__init__(f'{path}: {reason}')
        self.path = path


class DisseminationError(RuntimeError):
    pass


@dataclass(frozen=True, kw_only=True)
class ResultRow:
    """One replicate.  The field order is the CSV column order."""
    scenario: str
    protocol: str
    k: int
    erasure: float
    seed: int
    completion_slots: int | None
    timed_out: bool
    tx_total: int
    rx_total: int
    redundant_rx: int
    nacks: int
    decoder_row_ops: int
    header_bits: int


@dataclass(frozen=True, kw_only=True)
class SummaryRow:
    """Completion time statistics of one (protocol, k, erasure) group.

    mean, sd, min and max are over the replicates that completed, sd with
    ddof=0.  `available` is False if none did, the statistics are None then.
    The coop rows carry the lowest baseline mean of their group and the
    relative reduction against it, in percent.

    """
    protocol: str
    k: int
    erasure: float
    n: int
    timeouts: int
    available: bool
    mean: float | None
    sd: float | None
    min: int | None
    max: int | None
    best_baseline: str | None = None
    reduction_pct: float | None = None


def simulate(scenario, protocol, k, erasure, seed, record_trace=False):
    """Run one replicate, returns the `SimOutcome`.

    The page content is drawn from the seed's 'page' stream.  Every node that
    completed must hold exactly the source's page.

    """
    page = Page.random(k, scenario.L, derive_rng(seed, 'page'))
    cls = load_protocol(protocol)
    sim = Simulation(topology=scenario.load_topology(), channel=scenario.channel(erasure),
                     protocol=cls(cfg=scenario.protocol_config(protocol, k)),
                     page=page, seed=seed, record_trace=record_trace)
    outcome = sim.run(scenario.max_slots)

    for node in outcome.nodes:
        if node.complete and node.page != page:
            raise DisseminationError(f'{protocol}: {node.node_id} completed with a corrupt page (seed {seed})')
    return outcome


def run_replicate(scenario, protocol, k, erasure, seed):
    outcome = simulate(scenario, protocol, k, erasure, seed)
    return ResultRow(
        scenario=scenario.name, protocol=protocol, k=k, erasure=erasure, seed=seed,
        completion_slots=outcome.completion_time,
        timed_out=outcome.timed_out,
        tx_total=outcome.tx_total,
        rx_total=outcome.rx_total,
        redundant_rx=outcome.redundant_rx,
        nacks=outcome.nacks,
        decoder_row_ops=outcome.decoder_row_ops,
        header_bits=outcome.header_bits,
    )


def _sort_key(row):
    return (row.protocol, row.k, row.erasure, row.seed)


def run_scenario(scenario, root_seed=None, protocols=None, jobs=1):
    """All replicates of `scenario`, sorted by (protocol, k, erasure, seed).

    Parameters
    ----------
    root_seed: int | None
        Overrides the scenario's root seed.

    protocols: list[str] | None
        Subset of the scenario's protocols to run.

    jobs: int = 1
        Worker processes.  The ECS is global per process, so parallel
        replicates run in separate processes.

    """
    if root_seed is not None:
        scenario = scenario.replace(root_seed=root_seed)
    if protocols:
        scenario = scenario.replace(protocols=tuple(protocols))

    tasks = [(scenario, protocol, k, erasure, scenario.root_seed + r)
             for protocol in scenario.protocols
             for k in scenario.k
             for erasure in scenario.erasure
             for r in range(scenario.replicates)]
    log.info('scenario %s: %d replicates on %d job(s)', scenario.name, len(tasks), jobs)

    progress = Cooldown(1.0)
    rows = []

    def collect(row):
        rows.append(row)
        if row.timed_out:
            log.warning('%s k=%d erasure=%g seed %d timed out after %d slots',
                        row.protocol, row.k, row.erasure, row.seed, scenario.max_slots)
        if progress.cold():
            progress.reset()
            log.info('%d/%d replicates done', len(rows), len(tasks))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for row in pool.map(run_replicate, *zip(*tasks), chunksize=8):
                collect(row)
    else:
        for task in tasks:
            collect(run_replicate(*task))

    log.info('scenario %s finished, %d timeouts', scenario.name, sum(row.timed_out for row in rows))
    return sorted(rows, key=_sort_key)


def summarize(rows):
    """Per (protocol, k, erasure) completion statistics, see `SummaryRow`."""
    if not rows:
        raise ValueError('nothing to summarize, no result rows')

    groups = {}
    for key, members in groupby(sorted(rows, key=_sort_key), key=lambda row: (row.protocol, row.k, row.erasure)):
        members = list(members)
        done = np.array([row.completion_slots for row in members if not row.timed_out], dtype=float)
        groups[key] = dict(
            protocol=key[0], k=key[1], erasure=key[2],
            n=len(members),
            timeouts=len(members) - len(done),
            available=len(done) > 0,
            mean=float(done.mean()) if len(done) else None,
            sd=float(done.std()) if len(done) else None,
            min=int(done.min()) if len(done) else None,
            max=int(done.max()) if len(done) else None,
        )

    for (protocol, k, erasure), group in groups.items():
        if protocol != 'coop' or not group['available']:
            continue
        baselines = [groups[(name, k, erasure)] for name in BASELINES
                     if (name, k, erasure) in groups and groups[(name, k, erasure)]['available']]
        if not baselines:
            continue
        best = min(baselines, key=lambda g: g['mean'])
        group['best_baseline'] = best['protocol']
        group['reduction_pct'] = 100 * (best['mean'] - group['mean']) / best['mean']

    return [SummaryRow(**group) for group in groups.values()]


def _csv_value(value):
    match value:
        case None:
            return ''
        case bool():
            return 'true' if value else 'false'
        case float():
            return f'{value:.6g}'
        case _:
            return value


def write_csv(path, cls, rows):
    try:
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow([f.name for f in fields(cls)])
            for row in rows:
                writer.writerow([_csv_value(v) for v in astuple(row)])
    except OSError as e:
        raise OutputError(path, e.strerror or str(e)) from e
    log.info('wrote %s', path)


def emit(rows, summary, out_dir, format='csv', slot_seconds=None):
    """Write the result files to `out_dir`, returns their paths.

    `format` is 'csv', 'plot' or 'both'.

    """
    if format not in ('csv', 'plot', 'both'):
        raise ValueError(f'unknown output format {format!r}')

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(out_dir, e.strerror or str(e)) from e

    written = []
    if format in ('csv', 'both'):
        write_csv(out_dir / 'results.csv', ResultRow, rows)
        write_csv(out_dir / 'summary.csv', SummaryRow, summary)
        written += [out_dir / 'results.csv', out_dir / 'summary.csv']

    if format in ('plot', 'both'):
        from coopoap.plotting import plot_completion, save_svg

        for erasure in sorted({row.erasure for row in summary}):
            path = out_dir / f'completion-e{erasure:g}.svg'
            try:
                save_svg(plot_completion(summary, erasure, slot_seconds=slot_seconds), path)
            except OSError as e:
                raise OutputError(path, e.strerror or str(e)) from e
            written.append(path)

    return written


def trace_text(outcome):
    """The slot trace of a run, plus a closing summary line."""
    lines = list(outcome.trace)
    if outcome.timed_out:
        lines.append(f'# timed out, nacks {outcome.nacks}')
    else:
        lines.append(f'# completion {outcome.completion_time} nacks {outcome.nacks}')
    return '\n'.join(lines) + '\n'


def _cmd_run(opts):
    scenario = load_scenario(opts.scenario)
    protocols = opts.protocols.split(',') if opts.protocols else None
    rows = run_scenario(scenario, root_seed=opts.root_seed, protocols=protocols, jobs=opts.jobs)
    summary = summarize(rows)
    for row in summary:
        if row.reduction_pct is not None:
            log.info('k=%d erasure=%g: coop %.1f slots, %.1f%% below %s',
                     row.k, row.erasure, row.mean, row.reduction_pct, row.best_baseline)
    emit(rows, summary, opts.out, opts.format, slot_seconds=scenario.slot_seconds)


def _cmd_trace(opts):
    scenario = load_scenario(opts.scenario)
    k = opts.k if opts.k is not None else scenario.k[0]
    erasure = opts.erasure if opts.erasure is not None else scenario.erasure[0]
    seed = opts.seed if opts.seed is not None else scenario.root_seed
    text = trace_text(simulate(scenario, opts.protocol, k, erasure, seed, record_trace=True))

    if opts.out is None:
        sys.stdout.write(text)
        return
    try:
        Path(opts.out).write_text(text)
    except OSError as e:
        raise OutputError(opts.out, e.strerror or str(e)) from e


def _cmd_list(opts):
    print('Available protocols:')
    for name in available_protocols():
        print(f'    {name}')
    print('Bundled scenarios:')
    for name in bundled_scenarios():
        print(f'    {name}')


def main(argv=None):
    cmdline = argparse.ArgumentParser(prog='coopoap', description='coopoap experiment runner')
    cmdline.add_argument('-v', '--verbose', action='store_true', help='Debug output')
    cmdline.add_argument('-q', '--quiet', action='store_true', help='Only warnings and errors')
    commands = cmdline.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help='Run a scenario, write CSV and plots')
    run.add_argument('--scenario', required=True, help='Scenario file or bundled scenario name')
    run.add_argument('--root-seed', type=int, default=None, help='Override the scenario root seed')
    run.add_argument('--out', default='.', help='Output directory')
    run.add_argument('--format', choices=('csv', 'plot', 'both'), default='both')
    run.add_argument('--protocols', default=None, help='Comma separated subset of protocols')
    run.add_argument('--jobs', type=int, default=1, help='Worker processes')
    run.set_defaults(cmd=_cmd_run)

    trace = commands.add_parser('trace', help='Dump the message trace of one replicate')
    trace.add_argument('--scenario', required=True)
    trace.add_argument('--protocol', required=True)
    trace.add_argument('--k', type=int, default=None, help='Default: the first k of the scenario')
    trace.add_argument('--erasure', type=float, default=None, help='Default: the first erasure of the scenario')
    trace.add_argument('--seed', type=int, default=None, help='Default: the scenario root seed')
    trace.add_argument('--out', default=None, help='Output file, default stdout')
    trace.set_defaults(cmd=_cmd_trace)

    commands.add_parser('list', help='List protocols and bundled scenarios').set_defaults(cmd=_cmd_list)

    opts = cmdline.parse_args(sys.argv[1:] if argv is None else argv)

    level = logging.DEBUG if opts.verbose else logging.WARNING if opts.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')

    try:
        opts.cmd(opts)
    except (ValueError, OSError, RuntimeError, OutputError) as e:
        sys.exit(str(e))


if __name__ == '__main__':
    main()
