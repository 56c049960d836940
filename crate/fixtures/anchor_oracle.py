"""Recomputes AnchorHit and all-grounded flags for toy_decoded.jsonl by plain lemma lookup."""
import json, sys
from pathlib import Path

here = Path(__file__).parent
lemmas = {}
for line in (here / "toy.jsonl").read_text().splitlines():
    rec = json.loads(line)
    if "tokens" in rec and "segments" not in rec:
        lemmas[rec["sentence_id"]] = {t["lemma"] for t in rec["tokens"]}

out = ["index,sentence_id,hit_fraction,all_grounded"]
for i, line in enumerate((here / "toy_decoded.jsonl").read_text().splitlines()):
    rec = json.loads(line)
    anchors = [e["lemma"] for e in rec["entries"]]
    hits = sum(a in lemmas[rec["sentence_id"]] for a in anchors)
    frac = hits / len(anchors) if anchors else 0.0
    out.append(f"{i},{rec['sentence_id']},{frac:.6f},{str(bool(anchors) and hits == len(anchors)).lower()}")
sys.stdout.write("\n".join(out) + "\n")
