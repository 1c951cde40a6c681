"""Plan library: behaviours as forms with slots, fill rules and prompts.

The library is loaded from a JSON document (see ``docs/formats.md`` for the
key names) and is immutable after parsing, so a single library can be shared
read-only by any number of concurrent sessions.
"""

from __future__ import annotations

import functools
import json
import re
from dataclasses import dataclass, field

# Gazetteer names starting with "@" are built in (resolved by the matcher,
# not the document's gazetteers map). Only these names are recognised.
BUILTIN_GAZETTEERS = frozenset({"@date"})

_REGEX_METACHARS = set("[](){}?*+|^$\\.")


class LibraryError(Exception):
    """Base for everything that can go wrong loading a plan library."""


class LibrarySyntaxError(LibraryError):
    """The document is not well-formed (not parseable at all)."""


class SchemaError(LibraryError):
    """A field is missing, has the wrong type, or an invalid value."""


class LibraryReferenceError(LibraryError):
    """A rule or dependency points at something that does not resolve."""


class DuplicateIdError(LibraryError):
    """Two behaviours share an id."""


class NotFound(LibraryError):
    """Lookup of a behaviour id that is not in the library."""


@dataclass(frozen=True)
class FillRule:
    """One way a slot can be filled (or a behaviour triggered).

    ``pattern`` is either a literal token sequence ("cheese burger") or a
    regular expression; anything containing a regex metacharacter is treated
    as a regex. ``capture`` picks the regex group whose text becomes the
    value (default: group 1 when the pattern has groups, else the whole
    match). ``gazetteer`` names a lookup used to canonicalize the captured
    text; when the lookup misses, the rule does not fire.
    """

    id: str
    pattern: str
    gazetteer: str | None = None
    capture: int | None = None

    @property
    def is_regex(self) -> bool:
        return any(ch in _REGEX_METACHARS for ch in self.pattern)


@dataclass(frozen=True)
class Slot:
    name: str
    fill_rules: tuple[FillRule, ...]
    prompts: tuple[str, ...]
    required: bool = True


@dataclass(frozen=True)
class Behaviour:
    """An interruptible, time-extended unit of action: a form to fill.

    ``goal_description`` is only ever used for surface text (acknowledgments,
    explanations). Arbitration never reads it; deleting it from a document
    must not change which behaviour any utterance routes to.
    """

    id: str
    slots: tuple[Slot, ...] = ()
    trigger_rules: tuple[FillRule, ...] = ()
    goal_description: str | None = None
    dependencies: tuple[str, ...] = ()
    resources: tuple[str, ...] = ()
    completion_effect: str | None = None

    def slot(self, name: str) -> Slot | None:
        for s in self.slots:
            if s.name == name:
                return s
        return None

    @property
    def required_slots(self) -> tuple[Slot, ...]:
        return tuple(s for s in self.slots if s.required)


@dataclass(frozen=True)
class Gazetteer:
    """Surface-form to canonical-value lookup, case-folded."""

    name: str
    entries: dict[str, str]  # case-folded surface -> canonical

    def surfaces_longest_first(self) -> list[str]:
        return sorted(self.entries, key=lambda s: (-len(s), s))


@dataclass(frozen=True)
class PlanLibrary:
    behaviours: tuple[Behaviour, ...]
    gazetteers: dict[str, Gazetteer] = field(default_factory=dict)

    def behaviour_ids(self) -> list[str]:
        return [b.id for b in self.behaviours]


@dataclass(frozen=True)
class Finding:
    code: str
    location: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[Finding, ...]
    warnings: tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return not self.errors


@functools.lru_cache(maxsize=1024)
def compile_pattern(pattern: str) -> re.Pattern:
    return re.compile(pattern, re.IGNORECASE)


def lookup(library: PlanLibrary, behaviour_id: str) -> Behaviour:
    for b in library.behaviours:
        if b.id == behaviour_id:
            return b
    raise NotFound(f"no behaviour {behaviour_id!r} in library")


# ---------------------------------------------------------------------------
# Parsing

_MISSING = object()


def _require(obj: dict, key: str, kind, location: str, default=_MISSING):
    if key not in obj:
        if default is not _MISSING:
            return default
        raise SchemaError(f"{location}: missing key {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise SchemaError(
            f"{location}: key {key!r} must be {getattr(kind, '__name__', kind)},"
            f" got {type(value).__name__}"
        )
    return value


def _parse_rule(obj, location: str) -> FillRule:
    if not isinstance(obj, dict):
        raise SchemaError(f"{location}: rule must be an object")
    rule_id = _require(obj, "id", str, location)
    pattern = _require(obj, "pattern", str, location)
    gazetteer = obj.get("gazetteer")
    if gazetteer is not None and not isinstance(gazetteer, str):
        raise SchemaError(f"{location}: 'gazetteer' must be a string")
    capture = obj.get("capture")
    if capture is not None and not isinstance(capture, int):
        raise SchemaError(f"{location}: 'capture' must be an integer")
    return FillRule(id=rule_id, pattern=pattern, gazetteer=gazetteer, capture=capture)


def _parse_slot(obj, location: str) -> Slot:
    if not isinstance(obj, dict):
        raise SchemaError(f"{location}: slot must be an object")
    name = _require(obj, "name", str, location)
    loc = f"{location}.slot[{name}]"
    required = _require(obj, "required", bool, loc, default=True)
    rules_raw = _require(obj, "rules", list, loc, default=[])
    prompts_raw = _require(obj, "prompts", list, loc, default=[])
    for p in prompts_raw:
        if not isinstance(p, str):
            raise SchemaError(f"{loc}: prompts must be strings")
    rules = tuple(
        _parse_rule(r, f"{loc}.rule[{i}]") for i, r in enumerate(rules_raw)
    )
    return Slot(name=name, fill_rules=rules, prompts=tuple(prompts_raw), required=required)


def _parse_behaviour(obj, index: int) -> Behaviour:
    location = f"behaviours[{index}]"
    if not isinstance(obj, dict):
        raise SchemaError(f"{location}: behaviour must be an object")
    behaviour_id = _require(obj, "id", str, location)
    loc = f"behaviour[{behaviour_id}]"
    goal = obj.get("goal")
    if goal is not None and not isinstance(goal, str):
        raise SchemaError(f"{loc}: 'goal' must be a string")
    triggers_raw = _require(obj, "triggers", list, loc, default=[])
    slots_raw = _require(obj, "slots", list, loc, default=[])
    depends_raw = _require(obj, "depends_on", list, loc, default=[])
    resources_raw = _require(obj, "resources", list, loc, default=[])
    effect = obj.get("effect")
    if effect is not None and not isinstance(effect, str):
        raise SchemaError(f"{loc}: 'effect' must be a string")
    for d in depends_raw + resources_raw:
        if not isinstance(d, str):
            raise SchemaError(f"{loc}: 'depends_on' and 'resources' must be strings")
    triggers = tuple(
        _parse_rule(r, f"{loc}.trigger[{i}]") for i, r in enumerate(triggers_raw)
    )
    slots = tuple(_parse_slot(s, loc) for s in slots_raw)
    return Behaviour(
        id=behaviour_id,
        slots=slots,
        trigger_rules=triggers,
        goal_description=goal,
        dependencies=tuple(depends_raw),
        resources=tuple(resources_raw),
        completion_effect=effect,
    )


def _parse_gazetteer(name: str, obj, report_errors: list[Finding]) -> Gazetteer:
    location = f"gazetteer[{name}]"
    if not isinstance(obj, dict):
        raise SchemaError(f"{location}: gazetteer must be a surface->canonical map")
    entries: dict[str, str] = {}
    for surface, canonical in obj.items():
        if not isinstance(canonical, str):
            raise SchemaError(f"{location}: value for {surface!r} must be a string")
        folded = surface.casefold()
        if folded in entries:
            report_errors.append(
                Finding(
                    "DUPLICATE_SURFACE",
                    location,
                    f"surface form {surface!r} duplicates an entry after case-folding",
                )
            )
        entries[folded] = canonical
    return Gazetteer(name=name, entries=entries)


def parse_document(text: str) -> tuple[PlanLibrary, list[Finding]]:
    """Structural parse only: shape and types, no cross-reference checks.

    Returns the library plus any findings that are only detectable while
    parsing (currently duplicate gazetteer surfaces). ``validate`` adds the
    semantic checks; ``parse_library`` is the strict front door.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LibrarySyntaxError(f"document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    behaviours_raw = _require(doc, "behaviours", list, "document")
    gazetteers_raw = _require(doc, "gazetteers", dict, "document", default={})
    parse_findings: list[Finding] = []
    gazetteers = {
        name: _parse_gazetteer(name, obj, parse_findings)
        for name, obj in gazetteers_raw.items()
    }
    behaviours = tuple(
        _parse_behaviour(obj, i) for i, obj in enumerate(behaviours_raw)
    )
    return PlanLibrary(behaviours=behaviours, gazetteers=gazetteers), parse_findings


def parse_library(text: str) -> PlanLibrary:
    """Parse and fully check a plan-library document.

    Raises the first error found: LibrarySyntaxError, SchemaError,
    LibraryReferenceError or DuplicateIdError. Behaviour order in the
    returned library matches the document (arbitration tie-breaking
    depends on it).
    """
    library, parse_findings = parse_document(text)
    report = validate(library, extra_errors=parse_findings)
    if report.errors:
        first = report.errors[0]
        raise _ERROR_CLASSES.get(first.code, SchemaError)(
            f"{first.location}: {first.message}"
        )
    return library


_ERROR_CLASSES: dict[str, type[LibraryError]] = {
    "DUPLICATE_ID": DuplicateIdError,
    "DANGLING_GAZETTEER": LibraryReferenceError,
    "DANGLING_DEPENDENCY": LibraryReferenceError,
    "CYCLIC_DEPENDENCY": LibraryReferenceError,
    "BAD_PATTERN": SchemaError,
    "NO_PROMPTS": SchemaError,
    "UNREACHABLE_BEHAVIOUR": SchemaError,
    "DUPLICATE_SURFACE": SchemaError,
}


# ---------------------------------------------------------------------------
# Validation

def _iter_rules(behaviour: Behaviour):
    for i, rule in enumerate(behaviour.trigger_rules):
        yield rule, f"behaviour[{behaviour.id}].trigger[{i}]"
    for slot in behaviour.slots:
        for i, rule in enumerate(slot.fill_rules):
            yield rule, f"behaviour[{behaviour.id}].slot[{slot.name}].rule[{i}]"


def _dependency_cycle(behaviours: tuple[Behaviour, ...]) -> list[str] | None:
    graph = {b.id: [d for d in b.dependencies] for b in behaviours}
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {bid: WHITE for bid in graph}
    stack_path: list[str] = []

    def visit(node: str) -> list[str] | None:
        colour[node] = GREY
        stack_path.append(node)
        for dep in graph.get(node, ()):
            if dep not in graph:
                continue
            if colour[dep] == GREY:
                return stack_path[stack_path.index(dep):] + [dep]
            if colour[dep] == WHITE:
                cycle = visit(dep)
                if cycle:
                    return cycle
        colour[node] = BLACK
        stack_path.pop()
        return None

    for bid in graph:
        if colour[bid] == WHITE:
            cycle = visit(bid)
            if cycle:
                return cycle
    return None


def validate(library: PlanLibrary, extra_errors: list[Finding] | None = None) -> ValidationReport:
    """Report every invariant violation plus heuristic warnings.

    Errors make the library unloadable; warnings (ambiguous triggers,
    shadowed fill rules) are kept for the author but do not block loading.
    """
    errors: list[Finding] = list(extra_errors or [])
    warnings: list[Finding] = []

    seen_ids: set[str] = set()
    for b in library.behaviours:
        loc = f"behaviour[{b.id}]"
        if b.id in seen_ids:
            errors.append(Finding("DUPLICATE_ID", loc, f"behaviour id {b.id!r} appears twice"))
        seen_ids.add(b.id)

        if not b.slots and not b.trigger_rules:
            errors.append(
                Finding(
                    "UNREACHABLE_BEHAVIOUR",
                    loc,
                    "behaviour has no slots and no triggers; nothing can reach or progress it",
                )
            )

        for dep in b.dependencies:
            if not any(other.id == dep for other in library.behaviours):
                errors.append(
                    Finding(
                        "DANGLING_DEPENDENCY",
                        loc,
                        f"depends_on names unknown behaviour {dep!r}",
                    )
                )

        for slot in b.slots:
            if slot.required and not slot.prompts:
                errors.append(
                    Finding(
                        "NO_PROMPTS",
                        f"{loc}.slot[{slot.name}]",
                        f"required slot {slot.name!r} has no prompts",
                    )
                )

        for rule, rule_loc in _iter_rules(b):
            if rule.is_regex:
                try:
                    compile_pattern(rule.pattern)
                except re.error as exc:
                    errors.append(
                        Finding("BAD_PATTERN", rule_loc, f"pattern does not compile: {exc}")
                    )
            gaz = rule.gazetteer
            if gaz and gaz not in BUILTIN_GAZETTEERS and gaz not in library.gazetteers:
                errors.append(
                    Finding(
                        "DANGLING_GAZETTEER",
                        rule_loc,
                        f"rule {rule.id!r} references unknown gazetteer {gaz!r}",
                    )
                )

    cycle = _dependency_cycle(library.behaviours)
    if cycle:
        errors.append(
            Finding(
                "CYCLIC_DEPENDENCY",
                f"behaviour[{cycle[0]}]",
                "dependency cycle: " + " -> ".join(cycle),
            )
        )

    # Ambiguous triggers: two behaviours that can be activated by an
    # identical trigger pattern will always tie on trigger-only turns.
    by_pattern: dict[str, list[str]] = {}
    for b in library.behaviours:
        for rule in b.trigger_rules:
            by_pattern.setdefault(rule.pattern.casefold(), []).append(b.id)
    for pattern, ids in sorted(by_pattern.items()):
        distinct = sorted(set(ids))
        if len(distinct) > 1:
            warnings.append(
                Finding(
                    "AMBIGUOUS_TRIGGER",
                    "library",
                    f"trigger pattern {pattern!r} is shared by behaviours: {', '.join(distinct)}",
                )
            )

    # Shadowed fill rules: a later rule can never fire if an earlier rule in
    # the same slot matches a superset of its language. Exact detection is
    # undecidable for regexes; flag the cheap certain case (same pattern, or
    # an earlier catch-all that has no gazetteer filter).
    for b in library.behaviours:
        for slot in b.slots:
            seen_patterns: list[FillRule] = []
            for rule in slot.fill_rules:
                for earlier in seen_patterns:
                    same_pattern = earlier.pattern.casefold() == rule.pattern.casefold()
                    if same_pattern and earlier.gazetteer == rule.gazetteer:
                        warnings.append(
                            Finding(
                                "SHADOWED_RULE",
                                f"behaviour[{b.id}].slot[{slot.name}]",
                                f"rule {rule.id!r} repeats the pattern of earlier rule "
                                f"{earlier.id!r} and can never fire",
                            )
                        )
                        break
                seen_patterns.append(rule)

    return ValidationReport(errors=tuple(errors), warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# Serialization (round-trips through parse_library)

def to_dict(library: PlanLibrary) -> dict:
    def rule_dict(rule: FillRule) -> dict:
        out: dict = {"id": rule.id, "pattern": rule.pattern}
        if rule.gazetteer is not None:
            out["gazetteer"] = rule.gazetteer
        if rule.capture is not None:
            out["capture"] = rule.capture
        return out

    behaviours = []
    for b in library.behaviours:
        obj: dict = {"id": b.id}
        if b.goal_description is not None:
            obj["goal"] = b.goal_description
        obj["triggers"] = [rule_dict(r) for r in b.trigger_rules]
        obj["slots"] = [
            {
                "name": s.name,
                "required": s.required,
                "rules": [rule_dict(r) for r in s.fill_rules],
                "prompts": list(s.prompts),
            }
            for s in b.slots
        ]
        if b.dependencies:
            obj["depends_on"] = list(b.dependencies)
        if b.resources:
            obj["resources"] = list(b.resources)
        if b.completion_effect is not None:
            obj["effect"] = b.completion_effect
        behaviours.append(obj)
    return {
        "behaviours": behaviours,
        "gazetteers": {
            name: dict(g.entries) for name, g in library.gazetteers.items()
        },
    }


def serialize(library: PlanLibrary) -> str:
    return json.dumps(to_dict(library), indent=2, ensure_ascii=False) + "\n"


def strip_goals(library: PlanLibrary) -> PlanLibrary:
    """Copy of the library with every goal description deleted.

    Arbitration must be unaffected; this is what the goal-free equivalence
    property runs against.
    """
    return PlanLibrary(
        behaviours=tuple(
            Behaviour(
                id=b.id,
                slots=b.slots,
                trigger_rules=b.trigger_rules,
                goal_description=None,
                dependencies=b.dependencies,
                resources=b.resources,
                completion_effect=b.completion_effect,
            )
            for b in library.behaviours
        ),
        gazetteers=library.gazetteers,
    )
