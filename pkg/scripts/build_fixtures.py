#!/usr/bin/env python3
"""Regenerate the derived fixture files and the vendored byte-pair vocabulary.

Run after editing any authored bundle file (meta.json, planner.txt,
evidence.txt, react.txt) or the default templates/exemplars:

    python scripts/build_fixtures.py
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from almkit import fixtures
from almkit.accounting import train_byte_pair_merges


def main() -> int:
    names = fixtures.list_bundles()
    corpus_parts = []
    for name in names:
        bundle = fixtures.load_bundle(name)
        files = fixtures.record_bundle(bundle, write=True)
        print(f"{name}: replay={len(files['replay.jsonl'].splitlines())} "
              f"tools={len(files['tools.jsonl'].splitlines())}")
        corpus_parts.append(bundle.planner_text())
        react = bundle.react_text()
        if react:
            corpus_parts.append(react)

    corpus = "\n".join(corpus_parts)
    merges = train_byte_pair_merges(corpus, n_merges=512)
    vocab_dir = fixtures.FIXTURE_ROOT.parent / "bpe"
    vocab_dir.mkdir(parents=True, exist_ok=True)
    out = vocab_dir / "default.json"
    out.write_text(json.dumps({"merges": merges}), encoding="utf-8")
    print(f"byte-pair vocabulary: {len(merges)} merges -> {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
