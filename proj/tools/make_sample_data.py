#!/usr/bin/env python3
"""Regenerates the small offline corpus under data/sample."""

import json
import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "sample"

COMMON = [
    ("what is the capital of france", "paris"),
    ("what is the capital of italy", "rome"),
    ("what is the capital of japan", "tokyo"),
    ("what is the capital of spain", "madrid"),
    ("what is the capital of germany", "berlin"),
    ("what is the largest planet in the solar system", "jupiter"),
    ("what is the closest star to the earth", "the sun"),
    ("who wrote romeo and juliet", "william shakespeare"),
    ("who painted the mona lisa", "leonardo da vinci"),
    ("what is the chemical symbol for water", "h2o"),
    ("how many days are in a week", "seven"),
    ("how many continents are there", "seven"),
    ("what color is the sky on a clear day", "blue"),
    ("what is the boiling point of water in celsius", "100 degrees"),
    ("what language is spoken in brazil", "portuguese"),
    ("what is the longest river in africa", "the nile"),
    ("who was the first president of the united states", "george washington"),
    ("what is the largest ocean on earth", "the pacific ocean"),
    ("what animal is known as the king of the jungle", "the lion"),
    ("what is the currency of the united kingdom", "the pound"),
    ("what is the tallest mountain in the world", "mount everest"),
    ("what gas do plants take in from the air", "carbon dioxide"),
    ("how many legs does a spider have", "eight"),
    ("what is the hardest natural substance", "diamond"),
    ("who discovered penicillin", "alexander fleming"),
    ("what is the smallest prime number", "two"),
    ("what is the capital of canada", "ottawa"),
    ("what is the main language of mexico", "spanish"),
    ("what planet is known as the red planet", "mars"),
    ("what is the freezing point of water in celsius", "zero degrees"),
    ("who developed the theory of relativity", "albert einstein"),
    ("what is the largest country by area", "russia"),
    ("what is the capital of australia", "canberra"),
    ("what organ pumps blood through the body", "the heart"),
    ("how many hours are in a day", "twenty four"),
    ("what is the capital of egypt", "cairo"),
    ("what is the largest mammal", "the blue whale"),
    ("what metal is liquid at room temperature", "mercury"),
    ("who wrote the odyssey", "homer"),
    ("what is the capital of china", "beijing"),
]

RARE = [
    ("who played raoul in the 2004 film of the phantom of the opera", "patrick wilson"),
    ("which moravian village hosted the 1743 synod of zinzendorf", "marienborn"),
    ("what is the type locality of the mineral kalborsite", "khibiny massif"),
    ("who illustrated the first edition of the wreck of the zephyr", "chris van allsburg"),
    ("in which year was the qarawiyyin library reopened to the public", "2016"),
    ("which lighthouse keeper recorded the 1889 tessellated gale logbook", "ezra thorne"),
    ("what is the second largest moon of the dwarf planet haumea", "namaka"),
    ("who coached the 1954 hungarian national football team", "gusztav sebes"),
    ("what river flows through the town of tikhvin", "tikhvinka"),
    ("which botanist first described the orchid genus dracula", "carlyle luer"),
]

VOCAB_FREQ = {
    "what": 3.1e-3, "is": 9.5e-3, "the": 5.0e-2, "of": 2.8e-2, "capital": 9.0e-5,
    "who": 2.2e-3, "how": 1.9e-3, "many": 1.1e-3, "in": 2.0e-2, "a": 2.1e-2,
    "are": 4.4e-3, "there": 2.4e-3, "wrote": 1.3e-4, "largest": 7.2e-5, "first": 8.8e-4,
    "on": 7.1e-3, "to": 2.5e-2, "does": 9.4e-4, "water": 2.0e-4, "world": 4.8e-4,
    "earth": 1.1e-4, "day": 5.6e-4, "year": 7.5e-4, "which": 3.3e-3, "known": 3.4e-4,
    "as": 6.9e-3, "by": 5.0e-3, "from": 4.4e-3, "at": 4.9e-3, "was": 8.3e-3,
    "for": 9.1e-3, "through": 6.2e-4, "film": 1.3e-4, "town": 1.4e-4, "river": 7.3e-5,
    "france": 4.1e-5, "italy": 2.2e-5, "japan": 3.3e-5, "spain": 2.0e-5, "germany": 3.6e-5,
    "planet": 3.0e-5, "star": 7.8e-5, "president": 2.1e-4, "united": 2.3e-4, "states": 2.6e-4,
    "ocean": 3.6e-5, "king": 1.5e-4, "mountain": 4.1e-5, "air": 1.5e-4, "legs": 3.3e-5,
    "number": 3.7e-4, "language": 1.1e-4, "country": 2.7e-4, "body": 2.2e-4, "blood": 6.9e-5,
    "hours": 1.5e-4, "days": 2.7e-4, "week": 2.2e-4, "color": 6.1e-5, "sky": 4.9e-5,
    "national": 2.5e-4, "team": 2.4e-4, "football": 8.1e-5, "moon": 4.2e-5, "library": 5.0e-5,
    "public": 2.6e-4, "edition": 4.0e-5, "village": 6.3e-5, "second": 4.0e-4, "type": 1.2e-4,
    "written": 1.0e-4, "played": 8.7e-5, "called": 2.4e-4, "main": 1.8e-4, "room": 2.5e-4,
}

DIM = 8


def unit(rng):
    v = [rng.gauss(0.0, 1.0) for _ in range(DIM)]
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def main():
    rng = random.Random(2024)
    OUT.mkdir(parents=True, exist_ok=True)
    items = [(q, a, True) for q, a in COMMON] + [(q, a, False) for q, a in RARE]
    order = list(range(len(items)))
    rng.shuffle(order)

    direction = unit(rng)
    mean = [0.0] * DIM
    grads = {}
    dataset = []
    for slot, idx in enumerate(order):
        q, a, common = items[idx]
        iid = f"nq-{slot:03d}"
        dataset.append({"id": iid, "question": q, "answers": [a]})
        noise = unit(rng)
        w = 1.0 if common else 0.05
        g = [w * (2.0 * d) + 0.3 * n for d, n in zip(direction, noise)]
        grads[iid] = g
    for g in grads.values():
        for i in range(DIM):
            mean[i] += g[i] / len(grads)

    with open(OUT / "qa.jsonl", "w") as f:
        for rec in sorted(dataset, key=lambda r: r["id"]):
            f.write(json.dumps(rec) + "\n")
    with open(OUT / "answers.jsonl", "w") as f:
        for q, a, common in items:
            f.write(json.dumps({"question": q, "answer": a, "known": common}) + "\n")
    with open(OUT / "gradients.jsonl", "w") as f:
        f.write(json.dumps({"mean": [round(x, 12) for x in mean]}) + "\n")
        for iid in sorted(grads):
            f.write(json.dumps({"instance_id": iid, "grad": [round(x, 12) for x in grads[iid]]}) + "\n")
    with open(OUT / "freq.tsv", "w") as f:
        f.write("# token\trelative frequency\n")
        for tok in sorted(VOCAB_FREQ):
            f.write(f"{tok}\t{VOCAB_FREQ[tok]:.3g}\n")

    mc = [
        ("which planet is closest to the sun", ["venus", "mercury", "mars", "earth"], "B"),
        ("which element has atomic number 1", ["helium", "oxygen", "hydrogen", "carbon"], "C"),
        ("what is 7 times 8", ["54", "56", "58", "64"], "B"),
        ("which ocean lies between africa and australia", ["atlantic", "arctic", "indian", "pacific"], "C"),
        ("who proposed the uncertainty principle", ["heisenberg", "bohr", "dirac", "pauli"], "A"),
        ("which organelle produces atp", ["nucleus", "ribosome", "golgi body", "mitochondrion"], "D"),
    ]
    with open(OUT / "mc.jsonl", "w") as f:
        for i, (q, opts, ans) in enumerate(mc):
            f.write(json.dumps({"id": f"mc-{i:02d}", "question": q, "options": opts, "answer": ans}) + "\n")


if __name__ == "__main__":
    main()
