"""315 placeholder subtopic entries whose explicit counts add up to 5592."""
import json
import pathlib

OUT = pathlib.Path(__file__).resolve().parents[1] / "data" / "topics_315.jsonl"


def main():
    total, entries = 5592, 315
    base, extra = divmod(total, entries)
    with open(OUT, "w") as f:
        for i in range(entries):
            topic = f"topic {i // 6:02d}"
            sub = f"subtopic {i:03d}"
            rec = {"topic": topic, "subtopic": sub, "participants": ["Alice", "Bob"],
                   "background": [f"Alice is interested in {sub}."], "count": base + (1 if i < extra else 0)}
            f.write(json.dumps(rec) + "\n")


if __name__ == "__main__":
    main()
