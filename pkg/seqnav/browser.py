'''
Interactive TUI browser for benchmark results, powered by Textual.

Launched via ``seqnav browse DIR``. Arrow keys navigate the report cells found
in ``DIR``; Enter opens a cell's detail view; Escape / Left arrow goes back.
T shows the formatted results table, M the training metrics summary.
'''

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Optional

import pandas as pd
from rich.markup import escape as markup_escape
from textual.app import App, ComposeResult
from textual.binding import Binding
from textual.containers import ScrollableContainer
from textual.screen import ModalScreen, Screen
from textual.widgets import Footer, Header, Label, ListItem, ListView, Static

from .bench import BenchReport, format_table
from .errors import InvalidArgumentError

REPORT_KEYS = ('policy', 'sequence', 'preset', 'n_episodes', 'fr_pct', 'sr_pct', 'timeout_pct')


def _is_report(obj: Any) -> bool:
    return isinstance(obj, dict) and all(k in obj for k in REPORT_KEYS)


def load_reports(directory: str | Path) -> list[dict[str, Any]]:
    '''Collect report cells from every ``*.json`` file in *directory* (sweep lists or single reports).'''
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidArgumentError(f'{directory} is not a directory')
    cells: list[dict[str, Any]] = []
    for path in sorted(directory.glob('*.json')):
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError:
            continue
        items = data if isinstance(data, list) else [data]
        cells.extend(dict(item, source=path.name) for item in items if _is_report(item))
    return cells


def load_metrics(directory: str | Path) -> Optional[pd.DataFrame]:
    path = Path(directory) / 'metrics.jsonl'
    if not path.exists():
        return None
    return pd.read_json(path, lines=True)


def _fmt(value: Any) -> str:
    if value is None:
        return '-'
    if isinstance(value, float):
        return f'{value:.3f}'
    return str(value)


# ---------------------------------------------------------------------------
# Content modal - overlay shown by T / M key bindings
# ---------------------------------------------------------------------------

class ContentModal(ModalScreen):
    '''Scrollable overlay that displays a block of text.'''

    DEFAULT_CSS = '''
    ContentModal {
        align: center middle;
    }
    ContentModal > ScrollableContainer {
        background: $surface;
        border: thick $primary;
        width: 90%;
        height: 80%;
        padding: 1 2;
        overflow: auto auto;
    }
    '''

    BINDINGS = [
        Binding('escape', 'dismiss', 'Close', show=True),
        Binding('q', 'dismiss', 'Close', show=True),
    ]

    def __init__(self, title: str, content: str, **kwargs) -> None:
        super().__init__(**kwargs)
        self._modal_title = title
        self._content = content

    def compose(self) -> ComposeResult:
        with ScrollableContainer():
            yield Static(f'[bold]{markup_escape(self._modal_title)}[/bold]\n\n{markup_escape(self._content)}')

    def on_mount(self) -> None:
        # wide result tables scroll instead of wrapping
        widest = max((len(line) for line in self._content.splitlines()), default=0)
        self.query_one(Static).styles.width = max(widest, len(self._modal_title)) + 2


# ---------------------------------------------------------------------------
# Screens
# ---------------------------------------------------------------------------

class ReportListScreen(Screen):
    '''One line per report cell: policy, sequence, preset and headline rates.'''

    BINDINGS = [
        Binding('q', 'app.quit', 'Quit', show=True),
    ]

    def __init__(self, cells: list[dict[str, Any]], **kwargs) -> None:
        super().__init__(**kwargs)
        self.cells = cells

    def compose(self) -> ComposeResult:
        yield Header()
        if self.cells:
            yield ListView(*[ListItem(Label(self._label(c)), id=f'cell_{i}') for i, c in enumerate(self.cells)])
        else:
            yield Static('(no reports)')
        yield Footer()

    def on_mount(self) -> None:
        self.app.sub_title = self.app.directory

    def on_list_view_selected(self, event: ListView.Selected) -> None:
        idx = int(event.item.id.split('_', 1)[1])
        self.app.push_screen(ReportScreen(self.cells[idx]))

    @staticmethod
    def _label(cell: dict[str, Any]) -> str:
        head = markup_escape(f"{cell['policy']:<16}{cell['sequence']:<8}{cell['preset']:<14}")
        return (f'{head}FR {cell["fr_pct"]:5.1f}%  [bold green]SR {cell["sr_pct"]:5.1f}%[/bold green]  '
                f'time {_fmt(cell.get("time_median_s"))}')


class ReportScreen(Screen):
    '''All fields of a single report cell.'''

    BINDINGS = [
        Binding('escape', 'app.pop_screen', 'Back', show=True),
        Binding('left', 'app.pop_screen', 'Back', show=False),
        Binding('q', 'app.quit', 'Quit', show=True),
    ]

    def __init__(self, cell: dict[str, Any], **kwargs) -> None:
        super().__init__(**kwargs)
        self.cell = cell

    def compose(self) -> ComposeResult:
        yield Header()
        yield Static(markup_escape(self._build_content()))
        yield Footer()

    def on_mount(self) -> None:
        self.app.sub_title = f"{self.cell['policy']} > {self.cell['sequence']} > {self.cell['preset']}"

    def _build_content(self) -> str:
        return '\n'.join(f'{key:<16}{_fmt(value)}' for key, value in self.cell.items())


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------

class ReportBrowserApp(App):
    '''Textual TUI over the report cells and metrics of one output directory.'''

    TITLE = 'seqnav Reports'
    ENABLE_COMMAND_PALETTE = False

    BINDINGS = [
        Binding('t', 'table', 'Table', show=True),
        Binding('m', 'metrics', 'Metrics', show=True),
    ]

    def __init__(self, directory: str | Path) -> None:
        super().__init__()
        self.directory = str(directory)
        self.cells = load_reports(directory)
        self.metrics = load_metrics(directory)

    def on_mount(self) -> None:
        self.push_screen(ReportListScreen(self.cells))

    def action_table(self) -> None:
        fields = BenchReport.__dataclass_fields__
        reports = [BenchReport(**{k: v for k, v in c.items() if k in fields}) for c in self.cells]
        self.push_screen(ContentModal('Results', format_table(reports)))

    def action_metrics(self) -> None:
        df = self.metrics
        if df is None or df.empty:
            content = 'No training metrics found.'
        else:
            cols = [c for c in ('iteration', 'c', 'success_rate', 'mean_reward', 'fall_rate') if c in df]
            content = f'{len(df)} iterations\n\n' + df[cols].tail(20).to_string(index=False)
        self.push_screen(ContentModal('Training metrics', content))


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def run_browser(directory: str = '.') -> None:
    '''
    Open the report browser on *directory*.

    :param str directory: folder holding ``sweep.json`` / report JSON files and
                          optionally ``metrics.jsonl``
    '''
    ReportBrowserApp(os.path.abspath(directory)).run()
