"""Regenerate the shipped synthetic fixtures (deterministic)."""

import argparse
import json

from ercgen.corpus import open_text
from ercgen.fixtures import BENCHMARK_SIZES, MINI_SIZES, corpus_path, generate_records, manifest_for, manifest_path


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for mini, table in ((False, BENCHMARK_SIZES), (True, MINI_SIZES)):
        for ds, sizes in table.items():
            records = generate_records(ds, sizes, seed=args.seed, cover_labels=mini)
            with open_text(corpus_path(ds, mini), "w") as fh:
                for rec in records:
                    fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            manifest_for(ds, sizes).dump(manifest_path(ds, mini))
            print(f"{corpus_path(ds, mini).name}: {len(records)} utterances")


if __name__ == "__main__":
    main()
