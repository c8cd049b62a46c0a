#!/usr/bin/env python3
"""Fetch the public datasets used by the acceptance suite.

    python scripts/fetch_data.py ml-100k   # data/ml-100k/u.data
    python scripts/fetch_data.py wordnet   # data/wordnet/noun_glosses.tsv

MovieLens-100k comes from GroupLens. If that host is unreachable, pass
``--recbole-wheel`` with a recbole 1.2.x wheel, which bundles the same
ratings. The WordNet corpus is built from the WordNet 3.0 noun database
shipped in the ``wn==0.0.23`` source distribution on PyPI: each noun synset
becomes one document (its gloss) labeled with its lexicographer file.
"""

from __future__ import annotations

import argparse
import io
import subprocess
import sys
import tarfile
import tempfile
import urllib.request
import zipfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
ML100K_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
WN_MEMBER = "wn-0.0.23/wn/data/wordnet-3.0/"


def fetch_ml100k(out_dir, recbole_wheel=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / "u.data"
    if recbole_wheel:
        with zipfile.ZipFile(recbole_wheel) as zf:
            name = next(n for n in zf.namelist() if n.endswith("ml-100k.inter"))
            lines = zf.read(name).decode().splitlines()[1:]
        target.write_text("\n".join(lines) + "\n")
    else:
        with urllib.request.urlopen(ML100K_URL, timeout=120) as resp:
            blob = resp.read()
        with zipfile.ZipFile(io.BytesIO(blob)) as zf:
            target.write_bytes(zf.read("ml-100k/u.data"))
    print(f"wrote {target}")


def _wn_sdist(explicit):
    if explicit:
        return Path(explicit)
    tmp = Path(tempfile.mkdtemp())
    subprocess.run([sys.executable, "-m", "pip", "download", "wn==0.0.23", "--no-deps",
                    "--no-binary", ":all:", "-d", str(tmp)], check=True)
    return next(tmp.glob("wn-0.0.23*"))


def parse_data_noun(text, lexnames):
    """``(label, gloss)`` per synset line of a WordNet ``data.noun`` file."""
    for line in text.splitlines():
        if line.startswith("  ") or "|" not in line:
            continue
        head, gloss = line.split("|", 1)
        lex = lexnames[int(head.split()[1])]
        yield lex.split(".", 1)[1], " ".join(gloss.split())


def build_wordnet(out_dir, sdist=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    with tarfile.open(_wn_sdist(sdist)) as tf:
        read = lambda name: tf.extractfile(WN_MEMBER + name).read().decode("utf-8")
        lexnames = {int(l.split()[0]): l.split()[1] for l in read("lexnames").splitlines() if l.strip()}
        docs = list(parse_data_noun(read("data.noun"), lexnames))
        (out_dir / "LICENSE").write_text(read("LICENSE"))
    target = out_dir / "noun_glosses.tsv"
    with open(target, "w", encoding="utf-8") as fh:
        for label, gloss in docs:
            fh.write(f"{label}\t{gloss}\n")
    print(f"wrote {target} ({len(docs)} documents)")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="what", required=True)
    a = sub.add_parser("ml-100k")
    a.add_argument("--recbole-wheel")
    a.add_argument("--out", default=str(ROOT / "data" / "ml-100k"))
    b = sub.add_parser("wordnet")
    b.add_argument("--sdist", help="local wn-0.0.23.tar.gz instead of downloading it")
    b.add_argument("--out", default=str(ROOT / "data" / "wordnet"))
    args = ap.parse_args(argv)
    if args.what == "ml-100k":
        fetch_ml100k(Path(args.out), args.recbole_wheel)
    else:
        build_wordnet(Path(args.out), args.sdist)


if __name__ == "__main__":
    main()
