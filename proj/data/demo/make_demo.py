#!/usr/bin/env python3
"""Writes a small seeded demo workspace next to this file.

profile.json, gt.jsonl, embeddings.jsonl, completions.jsonl, candidates.jsonl.
Embeddings are synthetic: each word gets a random direction, related predicates share a
component, and a class triplet is the sum of its three parts plus a little noise.
"""
import json
import math
import pathlib
import random

HERE = pathlib.Path(__file__).parent
DIM = 24
rng = random.Random(7)

CATEGORIES = ["person", "dog", "horse", "shirt", "hat", "table", "cup", "chair", "bike", "tree"]
TAXONOMY = {
    "spatial": ["on", "near", "behind", "in front of", "under"],
    "possessive": ["has", "wearing", "of"],
    "interactive": ["holding", "riding", "sitting on", "looking at", "walking"],
}
COUNTS = {"on": 9000, "near": 4100, "behind": 900, "in front of": 400, "under": 120, "has": 6000,
          "wearing": 3200, "of": 1500, "holding": 800, "riding": 150, "sitting on": 300,
          "looking at": 60, "walking": 20}
# Predicates that should embed close to each other.
FAMILIES = [["on", "sitting on", "riding"], ["near", "behind", "in front of"], ["has", "of", "wearing"],
            ["holding", "looking at"]]
PLAUSIBLE = [("person", "wearing", "shirt"), ("person", "wearing", "hat"), ("person", "riding", "horse"),
             ("person", "riding", "bike"), ("person", "holding", "cup"), ("person", "sitting on", "chair"),
             ("cup", "on", "table"), ("dog", "near", "person"), ("person", "has", "hat"),
             ("chair", "near", "table"), ("person", "behind", "table"), ("dog", "under", "table"),
             ("person", "looking at", "dog"), ("tree", "behind", "person"), ("person", "walking", "dog"),
             ("hat", "of", "person"), ("bike", "in front of", "tree"), ("horse", "near", "tree")]


def unit(v):
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def randvec():
    return [rng.gauss(0, 1) for _ in range(DIM)]


def rounded(v):
    return [round(x, 6) for x in unit(v)]


def build_vectors():
    words = {c: unit(randvec()) for c in CATEGORIES}
    family = {}
    for fam in FAMILIES:
        base = unit(randvec())
        for p in fam:
            family[p] = base
    preds = {}
    for p in COUNTS:
        own = unit(randvec())
        shared = family.get(p)
        preds[p] = unit([a + (1.2 * b if shared else 0) for a, b in zip(own, shared or own)])
    table = {c: rounded(v) for c, v in words.items()}
    table.update({p: rounded(v) for p, v in preds.items()})
    for s in CATEGORIES:
        for p in COUNTS:
            for o in CATEGORIES:
                v = [0.6 * a + 1.0 * b + 0.6 * c + 0.05 * rng.gauss(0, 1)
                     for a, b, c in zip(words[s], preds[p], words[o])]
                table[f"{s} {p} {o}"] = rounded(v)
    return table


def type_of(p):
    return next(t for t, ps in TAXONOMY.items() if p in ps)


def random_box(w, h):
    bw, bh = rng.uniform(0.1, 0.5) * w, rng.uniform(0.1, 0.5) * h
    x, y = rng.uniform(0, w - bw), rng.uniform(0, h - bh)
    return [round(x), round(y), round(x + bw), round(y + bh)]


def make_scene(i):
    w, h = rng.choice([(640, 480), (800, 600), (500, 375)])
    objects, counts = [], {}

    def add(cat):
        counts[cat] = counts.get(cat, 0) + 1
        key = f"{cat}.{counts[cat]}"
        objects.append({"id": key, "bbox": random_box(w, h)})
        return key

    relations = []
    for s, p, o in rng.sample(PLAUSIBLE, rng.randint(2, 5)):
        sk = next((x["id"] for x in objects if x["id"].startswith(s + ".")), None) or add(s)
        ok = next((x["id"] for x in objects if x["id"].startswith(o + ".") and x["id"] != sk), None) or add(o)
        if any(r[0] == sk and r[1] == p and r[2] == ok for r in relations):
            continue
        relations.append([sk, p, ok])
    return {"image_id": f"demo{i:02d}", "width": w, "height": h, "objects": objects,
            "relations": [{"subject": s, "predicate": p, "object": o, "type": type_of(p)} for s, p, o in relations]}


def completion(scene, quality):
    """A model-like answer: jittered boxes, some relations dropped or swapped, maybe an extra category."""
    w, h = scene["width"], scene["height"]
    objs = []
    for o in scene["objects"]:
        j = (1 - quality) * 40
        x1, y1, x2, y2 = o["bbox"]
        box = [max(0, x1 + rng.uniform(-j, j)), max(0, y1 + rng.uniform(-j, j)),
               min(w, x2 + rng.uniform(-j, j)), min(h, y2 + rng.uniform(-j, j))]
        if box[2] - box[0] < 2 or box[3] - box[1] < 2:
            box = o["bbox"]
        objs.append({"id": o["id"], "bbox": [round(v, 1) for v in box]})
    groups = {t: [] for t in TAXONOMY}
    for r in scene["relations"]:
        if rng.random() > quality:
            if rng.random() < 0.5:
                continue
            fam = next((f for f in FAMILIES if r["predicate"] in f), [r["predicate"]])
            p = rng.choice(fam)
        else:
            p = r["predicate"]
        triple = [r["subject"], p, r["object"]]
        if triple not in groups[type_of(p)]:
            groups[type_of(p)].append(triple)
    cats = sorted({o["id"].rsplit(".", 1)[0] for o in objs})
    if rng.random() > quality:
        cats.append(rng.choice([c for c in CATEGORIES if c not in cats]))
    reasoning = "The image shows " + ", ".join(cats) + "."
    return (f"{reasoning}\n<CATEGORY>{json.dumps(cats)}</CATEGORY>\n"
            f"<OBJECT>{json.dumps(objs)}</OBJECT>\n<RELATION>{json.dumps(groups)}</RELATION>")


def main():
    profile = {"name": "demo", "categories": CATEGORIES, "predicates": list(COUNTS),
               "relation_types": list(TAXONOMY), "taxonomy": TAXONOMY, "predicate_counts": COUNTS,
               "train_triplets": [list(t) for t in PLAUSIBLE]}
    (HERE / "profile.json").write_text(json.dumps(profile, indent=2) + "\n")

    scenes = [make_scene(i) for i in range(12)]
    with (HERE / "gt.jsonl").open("w") as f:
        for s in scenes:
            f.write(json.dumps(s) + "\n")

    with (HERE / "embeddings.jsonl").open("w") as f:
        for k, v in sorted(build_vectors().items()):
            f.write(json.dumps({"key": k, "vector": v}) + "\n")

    with (HERE / "completions.jsonl").open("w") as f:
        for s in scenes:
            for k, q in enumerate((1.0, 0.8, 0.5, 0.2)):
                f.write(json.dumps({"sample_id": f"{s['image_id']}-{k}", "image_id": s["image_id"],
                                    "text": completion(s, q)}) + "\n")
        f.write(json.dumps({"sample_id": "broken", "image_id": "demo00", "text": "<CATEGORY>[\"person\"]</CATEGORY>"}) + "\n")

    preds = list(COUNTS)
    with (HERE / "candidates.jsonl").open("w") as f:
        for s in scenes:
            keys = [o["id"] for o in s["objects"]]
            for _ in range(6):
                f.write(json.dumps({"image_id": s["image_id"], "subject": rng.choice(keys),
                                    "predicate": rng.choice(preds), "object": rng.choice(keys)}) + "\n")


if __name__ == "__main__":
    main()
