"""Writes corpus.jsonl: two networks, four weeks, planted topics.

Deterministic for a fixed seed; rerun with `python3 generate.py` from this
directory.
"""
import json
import random

SEED = 20200322
START = (2020, 3, 22)

TOPICS = {
    "health": "virus mask doctor hospital vaccine test patient nurse clinic fever cough medicine".split(),
    "economy": "money price shop salary bank loan business market rent job tax crisis".split(),
    "leisure": "film book game series music concert walk park movie novel song hobby".split(),
    "politics": "president minister law decree parliament vote election governor court policy reform official".split(),
    "family": "child parent school home kitchen dinner garden grandmother lesson homework family pet".split(),
}
COMMON = "day time people today week good".split()
OUTLIER = "quarantine"

# per network: week -> relative topic weights
PLAN = {
    "twitter": [
        {"health": 5, "politics": 3, "economy": 2, "family": 1},
        {"health": 4, "politics": 2, "economy": 3, "family": 1},
        {"health": 2, "economy": 3, "leisure": 3, "family": 2},
        {"health": 2, "economy": 2, "leisure": 4, "family": 2},
    ],
    "lj": [
        {"health": 3, "politics": 4, "family": 2},
        {"health": 3, "politics": 3, "family": 3},
        {"health": 2, "politics": 2, "family": 3, "leisure": 2},
        {"health": 2, "politics": 2, "family": 2, "leisure": 3},
    ],
}
ACCOUNTS = {"twitter": 60, "lj": 40}
# activity patterns: expected posts per week
PATTERNS = {
    "early": [5, 3, 0, 0],
    "uniform": [2, 2, 2, 2],
    "late": [0, 1, 3, 5],
}


def pick(rng, weights):
    keys = sorted(weights)
    return rng.choices(keys, [weights[k] for k in keys])[0]


def main():
    rng = random.Random(SEED)
    records = []
    for net in sorted(PLAN):
        accounts = []
        for i in range(ACCOUNTS[net]):
            pattern = ["early", "uniform", "late"][i % 3]
            favourites = rng.sample(sorted(TOPICS), 2)
            accounts.append((f"{net[:2]}{i:03d}", pattern, favourites))
        serial = 0
        for week, weights in enumerate(PLAN[net]):
            for author, pattern, favourites in accounts:
                expected = PATTERNS[pattern][week]
                n = max(0, expected + rng.choice([-1, 0, 0, 1])) if expected else 0
                for _ in range(n):
                    w = dict(weights)
                    for f in favourites:
                        if f in w:
                            w[f] *= 3
                    topic = pick(rng, w)
                    length = rng.randint(6, 22)
                    lemmas = []
                    for _ in range(length):
                        r = rng.random()
                        if r < 0.80:
                            lemmas.append(rng.choice(TOPICS[topic]))
                        elif r < 0.92:
                            lemmas.append(rng.choice(COMMON))
                        else:
                            lemmas.append(OUTLIER)
                    day = rng.randint(0, 6)
                    hour = rng.randint(0, 23)
                    minute = rng.randint(0, 59)
                    y, m, d = START
                    dd = d + week * 7 + day
                    month, dom = (m, dd) if dd <= 31 else (m + 1, dd - 31)
                    serial += 1
                    records.append({
                        "id": f"{net}-{serial:05d}",
                        "author_id": author,
                        "network": net,
                        "timestamp": f"{y:04d}-{month:02d}-{dom:02d}T{hour:02d}:{minute:02d}:00Z",
                        "text": " ".join(lemmas),
                        "lemmas": lemmas,
                        "lang": "ru",
                    })
    records.sort(key=lambda r: r["id"])
    with open("corpus.jsonl", "w", encoding="utf-8") as out:
        for r in records:
            out.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"{len(records)} records")


if __name__ == "__main__":
    main()
