"""Completion time plots.

One figure per erasure rate: mean completion time over k, one line per
protocol, standard deviation as error bars.  Rendering uses the Agg backend,
nothing is ever shown on screen.

"""
import logging

import matplotlib

matplotlib.use('Agg')
matplotlib.rcParams['svg.hashsalt'] = 'coopoap'

import matplotlib.pyplot as plt  # noqa: E402

log = logging.getLogger(__name__)

__all__ = ['plot_completion', 'save_svg']

MARKERS = {
    'flood': 'x',
    'deluge': 's',
    'rateless_deluge': '^',
    'synapse': 'v',
    'coop': 'o',
}


def plot_completion(summary, erasure, slot_seconds=None, title=None):
    """Build the completion time figure for one erasure rate.

    Parameters
    ----------
    summary: list[SummaryRow]
        As returned by `coopoap.expcli.summarize`.  Groups without a single
        completed replicate are left out of their line.

    erasure: float
        The erasure rate to plot.

    slot_seconds: float | None = None
        Scale the y axis to seconds instead of slots.

    Returns
    -------
    matplotlib.figure.Figure

    """
    scale = slot_seconds or 1
    fig, ax = plt.subplots(figsize=(6.4, 4.8))

    protocols = sorted({row.protocol for row in summary if row.erasure == erasure})
    for protocol in protocols:
        rows = sorted((row for row in summary
                       if row.protocol == protocol and row.erasure == erasure and row.available),
                      key=lambda row: row.k)
        ax.errorbar([row.k for row in rows],
                    [row.mean * scale for row in rows],
                    yerr=[row.sd * scale for row in rows],
                    label=protocol, marker=MARKERS.get(protocol, '.'), capsize=3)

    ax.set_xlabel('packets per page (k)')
    ax.set_ylabel('completion time (s)' if slot_seconds else 'completion time (slots)')
    ax.set_title(title or f'erasure {erasure:g}')
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def save_svg(fig, path):
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    log.debug('wrote %s', path)
