#!/usr/bin/env python3
"""Regenerate the bundled prompt dataset.

Emits grade-school math word problems in the usual benchmark JSON-lines
schema ({"question": ..., "answer": "...\n#### n"}).  Deterministic for a
given seed so the bundled file is reproducible.
"""

import argparse
import json
import random
from pathlib import Path

NAMES = [
    "Ava", "Ben", "Carla", "Diego", "Elena", "Felix", "Grace", "Hugo",
    "Iris", "Jonas", "Karin", "Liam", "Mara", "Nadia", "Oscar", "Priya",
    "Quentin", "Rosa", "Sam", "Tessa",
]
ITEMS = [
    "apples", "marbles", "stickers", "pencils", "coins", "books", "cards",
    "cookies", "stamps", "seashells", "bottle caps", "crayons",
]


def make_problem(rng: random.Random) -> dict:
    kind = rng.randrange(4)
    name = rng.choice(NAMES)
    friend = rng.choice([n for n in NAMES if n != name])
    item = rng.choice(ITEMS)
    if kind == 0:
        a, b, c = rng.randint(8, 60), rng.randint(3, 30), rng.randint(2, 20)
        question = (
            f"{name} has {a} {item}. {friend} gives {name} {b} more {item}, "
            f"but then {name} loses {c} of them on the way home. "
            f"How many {item} does {name} have now?"
        )
        steps = f"{a} + {b} = {a + b}. {a + b} - {c} = {a + b - c}."
        answer = a + b - c
    elif kind == 1:
        price, count = rng.randint(2, 12), rng.randint(3, 15)
        budget = price * count + rng.randint(0, 9)
        question = (
            f"A pack of {item} costs {price} dollars. {name} has {budget} dollars "
            f"and buys as many packs as possible. How many packs does {name} buy?"
        )
        steps = f"{budget} // {price} = {budget // price}."
        answer = budget // price
    elif kind == 2:
        per_day, days = rng.randint(2, 9), rng.randint(3, 14)
        question = (
            f"{name} reads {per_day} pages of a book every day for {days} days. "
            f"How many pages does {name} read in total?"
        )
        steps = f"{per_day} * {days} = {per_day * days}."
        answer = per_day * days
    else:
        total, people = rng.randint(4, 12), rng.randint(2, 6)
        total = total * people
        question = (
            f"{name} and {people - 1} friends share {total} {item} equally. "
            f"How many {item} does each person get?"
        )
        steps = f"{total} / {people} = {total // people}."
        answer = total // people
    return {"question": question, "answer": f"{steps}\n#### {answer}"}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--count", type=int, default=1500)
    parser.add_argument("--seed", type=int, default=20250601)
    parser.add_argument(
        "--out",
        type=Path,
        default=Path(__file__).resolve().parent.parent
        / "src/agenttraffic/data/prompts.jsonl",
    )
    args = parser.parse_args()
    rng = random.Random(args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        for _ in range(args.count):
            fh.write(json.dumps(make_problem(rng)) + "\n")
    print(f"wrote {args.count} prompts to {args.out}")


if __name__ == "__main__":
    main()
