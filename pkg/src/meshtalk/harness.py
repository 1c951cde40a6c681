"""Scripted-user simulation: replay scenarios, check expectations, freeze goldens.

A script is a JSON document of steps: user utterances, logical timeouts, and
inline expectations over the most recent system action. Replays are
deterministic, so a passing scenario can be frozen as a golden JSON-lines
transcript and every later run compared byte for byte.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from meshtalk.engine import (
    CLASSIFICATION_KINDS,
    COMPLETION,
    DISENGAGE,
    EngineConfig,
    MeshEvent,
    SANCTION_STEP,
    SessionEnded,
    SystemAction,
    TIMEOUT_PROMPT,
    TranscriptEntry,
)
from meshtalk.library import LibraryError, parse_library
from meshtalk.sessions import DialogSession

KNOWN_KINDS = set(CLASSIFICATION_KINDS) | {TIMEOUT_PROMPT, COMPLETION, SANCTION_STEP, DISENGAGE}

SCRIPT_SUFFIX = ".script.json"
GOLDEN_DIR = "golden"
GOLDEN_SUFFIX = ".golden.jsonl"


class ScriptError(Exception):
    """The script document is malformed."""


@dataclass(frozen=True)
class Expectation:
    kind: str | None = None
    behaviour_id: str | None = None
    utterance_matches: str | None = None

    def describe(self) -> str:
        bits = []
        if self.kind:
            bits.append(f"kind={self.kind}")
        if self.behaviour_id:
            bits.append(f"behaviour_id={self.behaviour_id}")
        if self.utterance_matches:
            bits.append(f"utterance~/{self.utterance_matches}/")
        return " ".join(bits)


@dataclass(frozen=True)
class Step:
    action: str  # "user" | "timeout" | "expect"
    text: str | None = None
    expectation: Expectation | None = None


@dataclass(frozen=True)
class Script:
    name: str
    library_path: Path
    config: dict
    steps: tuple[Step, ...]


@dataclass
class ScenarioResult:
    name: str
    transcript: list[TranscriptEntry] = field(default_factory=list)
    events: list[MeshEvent] = field(default_factory=list)
    failures: list[tuple[int, str, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def load_script(path: str | Path) -> Script:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ScriptError(f"{path}: cannot load script: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScriptError(f"{path}: script must be an object")
    name = doc.get("name")
    library = doc.get("library")
    steps_raw = doc.get("steps")
    if not isinstance(name, str) or not isinstance(library, str):
        raise ScriptError(f"{path}: 'name' and 'library' are required strings")
    if not isinstance(steps_raw, list) or not steps_raw:
        raise ScriptError(f"{path}: 'steps' must be a non-empty array")
    config = doc.get("config", {})
    if not isinstance(config, dict):
        raise ScriptError(f"{path}: 'config' must be an object")

    steps: list[Step] = []
    for i, raw in enumerate(steps_raw):
        if not isinstance(raw, dict):
            raise ScriptError(f"{path}: step {i} must be an object")
        if "user" in raw:
            if not isinstance(raw["user"], str):
                raise ScriptError(f"{path}: step {i}: 'user' must be a string")
            steps.append(Step(action="user", text=raw["user"]))
        elif raw.get("timeout"):
            steps.append(Step(action="timeout"))
        elif "expect" in raw:
            exp_raw = raw["expect"]
            if not isinstance(exp_raw, dict):
                raise ScriptError(f"{path}: step {i}: 'expect' must be an object")
            expectation = Expectation(
                kind=exp_raw.get("kind"),
                behaviour_id=exp_raw.get("behaviour_id"),
                utterance_matches=exp_raw.get("utterance_matches"),
            )
            if not (expectation.kind or expectation.behaviour_id or expectation.utterance_matches):
                raise ScriptError(f"{path}: step {i}: expectation has no fields")
            if expectation.kind and expectation.kind not in KNOWN_KINDS:
                raise ScriptError(
                    f"{path}: step {i}: unknown event kind {expectation.kind!r}"
                )
            steps.append(Step(action="expect", expectation=expectation))
        else:
            raise ScriptError(f"{path}: step {i}: must be user, timeout or expect")

    return Script(
        name=name,
        library_path=(path.parent / library).resolve(),
        config=config,
        steps=tuple(steps),
    )


def _describe_action(action: SystemAction | None) -> str:
    if action is None:
        return "no system action yet"
    kinds = ", ".join(
        f"{e.kind}({e.behaviour_id})" if e.behaviour_id else e.kind for e in action.events
    )
    return f'utterance="{action.utterance}" events=[{kinds}]'


def _check(expectation: Expectation, action: SystemAction | None) -> bool:
    if action is None:
        return False
    if expectation.kind or expectation.behaviour_id:
        hit = any(
            (expectation.kind is None or e.kind == expectation.kind)
            and (expectation.behaviour_id is None or e.behaviour_id == expectation.behaviour_id)
            for e in action.events
        )
        if not hit:
            return False
    if expectation.utterance_matches:
        if not re.search(expectation.utterance_matches, action.utterance):
            return False
    return True


def run_scenario(script: Script) -> ScenarioResult:
    """Deterministic replay of one script; LibraryError propagates."""
    library = parse_library(script.library_path.read_text(encoding="utf-8"))
    config = EngineConfig().replaced(script.config)
    session = DialogSession(library, config)
    result = ScenarioResult(name=script.name)

    last_action: SystemAction | None = None
    pending = session.drain_pending()
    if pending:
        last_action = pending[-1]

    for i, step in enumerate(script.steps):
        if step.action == "user":
            try:
                last_action = session.user(step.text or "")
            except SessionEnded:
                result.failures.append((i, "session live", "session already disengaged"))
        elif step.action == "timeout":
            try:
                last_action = session.timeout()
            except SessionEnded:
                result.failures.append((i, "session live", "session already disengaged"))
        else:
            assert step.expectation is not None
            if not _check(step.expectation, last_action):
                result.failures.append(
                    (i, step.expectation.describe(), _describe_action(last_action))
                )

    result.transcript = list(session.history)
    result.events = list(session.events)
    return result


def transcript_lines(result: ScenarioResult) -> list[str]:
    return [json.dumps(entry.to_dict(), ensure_ascii=False) for entry in result.transcript]


def golden_path_for(script_path: Path) -> Path:
    name = script_path.name
    if name.endswith(SCRIPT_SUFFIX):
        name = name[: -len(SCRIPT_SUFFIX)]
    return script_path.parent / GOLDEN_DIR / f"{name}{GOLDEN_SUFFIX}"


def record_golden(script: Script, path: str | Path) -> None:
    """Freeze a passing scenario's transcript as the golden file."""
    result = run_scenario(script)
    if not result.passed:
        raise ScriptError(
            f"{script.name}: refusing to record golden from a failing scenario: "
            + "; ".join(f"step {i}: wanted {want}, got {got}" for i, want, got in result.failures)
        )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(transcript_lines(result)) + "\n", encoding="utf-8")


@dataclass
class SuiteSummary:
    passed: list[str] = field(default_factory=list)
    failed: dict[str, list[str]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0


def run_suite(directory: str | Path, update_golden: bool = False) -> SuiteSummary:
    """Run every *.script.json under a directory; compare goldens byte-exactly."""
    directory = Path(directory)
    summary = SuiteSummary()
    script_paths = sorted(directory.glob(f"*{SCRIPT_SUFFIX}"))
    if not script_paths:
        summary.warnings.append(f"no scripts found under {directory}")
        return summary

    for script_path in script_paths:
        problems: list[str] = []
        try:
            script = load_script(script_path)
            result = run_scenario(script)
        except (ScriptError, LibraryError, OSError) as exc:
            summary.failed[script_path.name] = [str(exc)]
            continue
        for i, want, got in result.failures:
            problems.append(f"step {i}: wanted {want}; got {got}")
        golden = golden_path_for(script_path)
        produced = "\n".join(transcript_lines(result)) + "\n"
        if update_golden:
            if result.passed:
                golden.parent.mkdir(parents=True, exist_ok=True)
                golden.write_text(produced, encoding="utf-8")
            else:
                problems.append("golden not updated: inline expectations failed")
        elif golden.exists():
            recorded = golden.read_text(encoding="utf-8")
            if recorded != produced:
                problems.append(_golden_diff(golden, recorded, produced))
        else:
            summary.warnings.append(f"{script.name}: no golden recorded yet")
        if problems:
            summary.failed[script.name] = problems
        else:
            summary.passed.append(script.name)
    return summary


def _golden_diff(golden: Path, recorded: str, produced: str) -> str:
    recorded_lines = recorded.splitlines()
    produced_lines = produced.splitlines()
    for n, (a, b) in enumerate(zip(recorded_lines, produced_lines)):
        if a != b:
            return (
                f"golden mismatch at {golden.name}:{n + 1}\n"
                f"  golden:  {a}\n  current: {b}"
            )
    return (
        f"golden mismatch: {golden.name} has {len(recorded_lines)} lines,"
        f" run produced {len(produced_lines)}"
    )
