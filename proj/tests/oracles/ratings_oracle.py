"""200 conversations x 3 raters fixture and its median aggregation."""
import json
import pathlib
import random
import statistics

DATA = pathlib.Path(__file__).resolve().parents[1] / "data"
DIMENSIONS = ["natural", "coherent", "interesting", "consistent", "on_topic"]


def main():
    rng = random.Random(5592)
    rows = []
    for c in range(200):
        for d in DIMENSIONS:
            for r in range(3):
                score = rng.randint(0, 1) if d == "on_topic" else rng.randint(1, 5)
                rows.append({"conversation_id": f"conv-{c:03d}", "rater_id": f"rater-{(c * 3 + r) % 28:02d}",
                             "dimension": d, "score": score})
    rng.shuffle(rows)
    with open(DATA / "ratings_200x3.jsonl", "w") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")

    groups = {}
    for row in rows:
        groups.setdefault((row["conversation_id"], row["dimension"]), []).append(row["score"])
    medians = {f"{c}|{d}": statistics.median(v) for (c, d), v in sorted(groups.items())}
    means = {d: statistics.fmean(m for k, m in medians.items() if k.endswith("|" + d)) for d in DIMENSIONS}
    (DATA / "ratings_200x3_oracle.json").write_text(json.dumps({"medians": medians, "mean_of_medians": means}, indent=1) + "\n")


if __name__ == "__main__":
    main()
