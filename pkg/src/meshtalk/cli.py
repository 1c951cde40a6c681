"""Command line entry points: terminal chat, scenario runner, session service."""

from __future__ import annotations

import json
import select
import socket
import sys
from pathlib import Path

import click

from meshtalk import phrasing
from meshtalk.engine import EngineConfig, SessionEnded
from meshtalk.harness import run_suite
from meshtalk.library import LibraryError, parse_library
from meshtalk.sessions import DialogSession

_EOF = object()
_IDLE = object()


def _load_library(path: str):
    try:
        return parse_library(Path(path).read_text(encoding="utf-8"))
    except (OSError, LibraryError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


def _load_config(path: str | None, mode: str | None) -> EngineConfig:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            click.echo(f"error: cannot load config: {exc}", err=True)
            sys.exit(2)
    try:
        config = EngineConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        click.echo(f"error: bad config: {exc}", err=True)
        sys.exit(2)
    if mode:
        config.mode = mode
    return config


def _read_line(timeout_ms: int):
    """Next stdin line, _IDLE on timeout, _EOF when input closes."""
    if timeout_ms <= 0:
        line = sys.stdin.readline()
        return _EOF if line == "" else line.rstrip("\n")
    ready, _, _ = select.select([sys.stdin], [], [], timeout_ms / 1000.0)
    if not ready:
        return _IDLE
    line = sys.stdin.readline()
    return _EOF if line == "" else line.rstrip("\n")


def _emit(action, verbose: bool) -> None:
    if verbose:
        for event in action.events:
            target = f" {event.behaviour_id}" if event.behaviour_id else ""
            click.echo(f"  [{event.kind}{target}] {event.detail}")
        for effect in action.effects:
            click.echo(f"  [effect] {effect}")
    if action.utterance:
        click.echo(f"system> {action.utterance}")


@click.group()
def main() -> None:
    """Dialog manager built on meshing behaviours."""


@main.command()
@click.option("--library", "library_path", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.option("--mode", type=click.Choice([phrasing.GOAL_TAGGED, phrasing.GOAL_FREE]))
@click.option("--verbose", is_flag=True, help="Print mesh events and effects.")
@click.option(
    "--transcript",
    "transcript_path",
    type=click.Path(dir_okay=False),
    default="session.jsonl",
    show_default=True,
    help="Where to write the transcript when the session ends.",
)
def chat(library_path, config_path, mode, verbose, transcript_path) -> None:
    """Interactive terminal chat against a plan library."""
    library = _load_library(library_path)
    config = _load_config(config_path, mode)
    session = DialogSession(library, config)
    for action in session.drain_pending():
        _emit(action, verbose)
    while not session.ended:
        line = _read_line(config.timeout_ms)
        if line is _EOF:
            break
        try:
            if line is _IDLE:
                _emit(session.timeout(), verbose)
                continue
            text = str(line).strip()
            if not text:
                continue
            if text == "/explain":
                click.echo(session.explain())
                continue
            _emit(session.user(text), verbose)
        except SessionEnded:
            break
    lines = [json.dumps(e.to_dict(), ensure_ascii=False) for e in session.history]
    Path(transcript_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"transcript written to {transcript_path}", err=True)


@main.command()
@click.argument("scripts_dir", type=click.Path())
@click.option("--update-golden", is_flag=True, help="Rewrite golden transcripts from this run.")
def simulate(scripts_dir, update_golden) -> None:
    """Run every scenario script in a directory; exit 1 on any failure."""
    if not Path(scripts_dir).is_dir():
        click.echo(f"error: {scripts_dir} is not a directory", err=True)
        sys.exit(2)
    summary = run_suite(scripts_dir, update_golden=update_golden)
    for name in summary.passed:
        click.echo(f"PASS {name}")
    for name, problems in summary.failed.items():
        click.echo(f"FAIL {name}")
        for problem in problems:
            click.echo(f"  {problem}")
    for warning in summary.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(f"{len(summary.passed)} passed, {len(summary.failed)} failed")
    sys.exit(summary.exit_code)


@main.command()
@click.option("--library", "library_path", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option(
    "--sessions-dir",
    type=click.Path(file_okay=False),
    default="sessions",
    show_default=True,
    help="Directory for persisted session transcripts.",
)
@click.option("--ui-dir", type=click.Path(file_okay=False), default=None)
def serve(library_path, config_path, port, host, sessions_dir, ui_dir) -> None:
    """Serve the engine over the wire protocol (REST + WebSocket streams)."""
    import uvicorn

    from meshtalk.service import create_app

    library = _load_library(library_path)
    config = _load_config(config_path, None)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as exc:
        click.echo(f"error: cannot bind {host}:{port}: {exc}", err=True)
        sys.exit(2)
    finally:
        probe.close()
    app = create_app(library, config, sessions_dir=sessions_dir, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
