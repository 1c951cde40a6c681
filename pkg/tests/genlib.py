"""Random libraries and user-turn sequences for the randomized suites.

Everything is driven by a seeded random.Random so failures replay exactly.
random_library returns the library plus a vocabulary of phrases that can
plausibly mesh with it; random_turns mixes those with noise words.
"""

from __future__ import annotations

import random

from meshtalk.library import Behaviour, FillRule, Gazetteer, PlanLibrary, Slot

_NOUNS = [
    "ticket", "parcel", "pizza", "meeting", "garden", "engine", "letter",
    "bridge", "kettle", "window", "carpet", "lantern", "puzzle", "anchor",
]
_VERBS = ["arrange", "fetch", "inspect", "repair", "cancel", "renew", "paint", "weigh"]
_VALUES = [
    "amber", "basalt", "cobalt", "damson", "emerald", "fuchsia", "garnet",
    "hazel", "indigo", "jade", "khaki", "lilac",
]
_NOISE = ["flibber", "wozzle", "grumph", "snark", "plim", "quog"]
_GOALS = [
    "sort out the {n}", "deal with the {n}", "take care of the {n}",
    "handle the {n} for you",
]


def random_library(
    rng: random.Random,
    max_behaviours: int = 8,
    with_dependencies: bool = True,
    global_resource: str | None = None,
) -> tuple[PlanLibrary, list[str]]:
    n = rng.randint(1, max_behaviours)
    behaviours = []
    gazetteers: dict[str, Gazetteer] = {}
    vocab: list[str] = []
    for i in range(n):
        noun = f"{rng.choice(_NOUNS)}{i}"
        trigger_word = f"{rng.choice(_VERBS)}{i}"
        vocab.append(trigger_word)
        triggers = [FillRule(id=f"t{i}", pattern=trigger_word)]
        if rng.random() < 0.3:
            triggers.append(
                FillRule(id=f"t{i}b", pattern=rf"\babout\s+the\s+({noun})\b", capture=1)
            )
            vocab.append(f"about the {noun}")
        slots = []
        for j in range(rng.randint(0, 3)):
            word = f"{rng.choice(_VALUES)}{i}{j}"
            vocab.append(word)
            rules = [FillRule(id=f"r{i}_{j}a", pattern=word)]
            if rng.random() < 0.4:
                rules.append(
                    FillRule(id=f"r{i}_{j}b", pattern=rf"set{i}{j}\s+to\s+(\w+)", capture=1)
                )
                vocab.append(f"set{i}{j} to amber")
            if rng.random() < 0.25:
                gaz_name = f"g{i}{j}"
                gazetteers[gaz_name] = Gazetteer(
                    name=gaz_name,
                    entries={
                        f"form{i}{j}": f"CANON{i}{j}",
                        f"long form{i}{j}": f"LONG{i}{j}",
                    },
                )
                rules.append(
                    FillRule(
                        id=f"r{i}_{j}g",
                        pattern=rf"\b((?:long )?form{i}{j})\b",
                        gazetteer=gaz_name,
                        capture=1,
                    )
                )
                vocab.append(f"long form{i}{j}")
                vocab.append(f"form{i}{j}")
            slots.append(
                Slot(
                    name=f"s{i}_{j}",
                    fill_rules=tuple(rules),
                    prompts=(f"value for s{i}_{j}?", f"again, s{i}_{j}?"),
                    required=rng.random() < 0.8,
                )
            )
        dependencies = ()
        if with_dependencies and i > 0 and rng.random() < 0.3:
            dependencies = (f"b{rng.randrange(i)}",)
        resources = (global_resource,) if global_resource else ()
        behaviours.append(
            Behaviour(
                id=f"b{i}",
                slots=tuple(slots),
                trigger_rules=tuple(triggers),
                goal_description=rng.choice(_GOALS).format(n=noun),
                dependencies=dependencies,
                resources=resources,
                completion_effect=f"b{i}_done" if rng.random() < 0.5 else None,
            )
        )
    return PlanLibrary(behaviours=tuple(behaviours), gazetteers=gazetteers), vocab


def random_turns(
    rng: random.Random, vocab: list[str], max_turns: int = 20
) -> list[str]:
    pool = vocab + _NOISE
    turns = []
    for _ in range(rng.randint(1, max_turns)):
        k = rng.randint(1, 3)
        turns.append(" ".join(rng.choice(pool) for _ in range(k)))
    return turns
