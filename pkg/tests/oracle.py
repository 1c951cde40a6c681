"""Independent brute-force re-statement of the matching contract.

Deliberately structured differently from the production matcher: no early
exits, every rule of every slot of every behaviour is tried, and token
spans are recovered by manual index tracking rather than regex iteration.
Used to cross-check scan_library on randomized instances.
"""

from __future__ import annotations

import re
import string


def fold_tokens(text: str) -> list[str]:
    out = []
    for raw in text.split():
        core = raw.strip(string.punctuation)
        if core:
            out.append(core.casefold())
    return out


def tokens_with_spans(text: str) -> list[tuple[str, int, int]]:
    tokens = []
    cursor = 0
    for word in text.split():
        start = text.index(word, cursor)
        end = start + len(word)
        cursor = end
        lead = 0
        while lead < len(word) and word[lead] in string.punctuation:
            lead += 1
        trail = 0
        while trail < len(word) - lead and word[len(word) - 1 - trail] in string.punctuation:
            trail += 1
        core = word[lead:len(word) - trail]
        if core:
            tokens.append((core.casefold(), start + lead, end - trail))
    return tokens


def _is_regex(pattern: str) -> bool:
    return any(ch in "[](){}?*+|^$\\." for ch in pattern)


def _gazetteer_lookup(surface: str, entries: dict[str, str]) -> str | None:
    folded = " ".join(fold_tokens(surface))
    if not folded:
        return None
    if folded in entries:
        return entries[folded]
    candidates = [form for form in entries if f" {form} " in f" {folded} "]
    if not candidates:
        return None
    longest = max(len(form) for form in candidates)
    best = min(form for form in candidates if len(form) == longest)
    return entries[best]


def oracle_rule(rule, text: str, gazetteers: dict) -> tuple[str, tuple[int, int]] | None:
    if _is_regex(rule.pattern):
        try:
            compiled = re.compile(rule.pattern, re.IGNORECASE)
        except re.error:
            return None
        m = compiled.search(text)
        if m is None:
            return None
        idx = rule.capture if rule.capture is not None else (1 if compiled.groups else 0)
        try:
            surface = m.group(idx)
        except IndexError:
            return None
        if surface is None:
            return None
        span = m.span(0)
    else:
        want = fold_tokens(rule.pattern)
        if not want:
            return None
        toks = tokens_with_spans(text)
        span = None
        for k in range(len(toks) - len(want) + 1):
            if [t[0] for t in toks[k:k + len(want)]] == want:
                span = (toks[k][1], toks[k + len(want) - 1][2])
                break
        if span is None:
            return None
        surface = text[span[0]:span[1]]
    if rule.gazetteer is not None:
        gaz = gazetteers.get(rule.gazetteer)
        if gaz is None:
            return None
        value = _gazetteer_lookup(surface, gaz.entries)
    else:
        value = surface
    if not value:
        return None
    return value, span


def oracle_scan(text: str, library, exclude: set[str]) -> list[dict]:
    """Exhaustive scan: every rule tried, no shortcuts."""
    results = []
    if not text.strip():
        return results
    for behaviour in library.behaviours:
        if behaviour.id in exclude:
            continue
        fills = []
        for slot in behaviour.slots:
            winners = []
            for rule in slot.fill_rules:
                hit = oracle_rule(rule, text, library.gazetteers)
                if hit is not None:
                    winners.append((rule.id, hit))
            if winners:
                rule_id, (value, span) = winners[0]
                fills.append(
                    {"slot": slot.name, "value": value, "span": span, "rule_id": rule_id}
                )
        trigger_hits = [
            oracle_rule(rule, text, library.gazetteers) for rule in behaviour.trigger_rules
        ]
        triggered = any(hit is not None for hit in trigger_hits)
        if fills or triggered:
            results.append(
                {"behaviour_id": behaviour.id, "fills": fills, "triggered": triggered}
            )
    return results


def as_comparable(match_results) -> list[dict]:
    return [
        {
            "behaviour_id": r.behaviour_id,
            "fills": [
                {"slot": f.slot, "value": f.value, "span": tuple(f.span), "rule_id": f.rule_id}
                for f in r.fills
            ],
            "triggered": r.triggered,
        }
        for r in match_results
    ]
