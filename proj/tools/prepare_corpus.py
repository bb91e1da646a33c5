#!/usr/bin/env python3
"""Build the desk corpus used by the n-gram blindness check.

Pulls public-domain English bible translations from PyPI (World English
Bible and Bible in Basic English, via the pythonbible-* wheels), strips
verse numbering, splits into sentences and writes one raw (untokenized)
sentence per line to a gzip file.

    python3 tools/prepare_corpus.py --out data/desk_corpus.txt.gz
"""
import argparse
import gzip
import pathlib
import re
import subprocess
import sys
import tempfile
import zipfile

PACKAGES = ["pythonbible-web", "pythonbible-bbe"]

VERSE_NUM = re.compile(r"(?:(?<=\s)|^)\d+\.\s+")
SENTENCE_END = re.compile(r"(?<=[.!?])\s+(?=[A-Z])")


def bible_text(wheel: pathlib.Path) -> str:
    with zipfile.ZipFile(wheel) as zf:
        name = next(n for n in zf.namelist() if n.endswith("/plain_text_bible.py"))
        src = zf.read(name).decode("utf-8")
    start = src.index('"""') + 3
    return src[start:src.index('"""', start)]


def sentences(text: str):
    for line in text.splitlines():
        line = VERSE_NUM.sub(" ", line)
        line = line.replace("`", "'").replace('"', " ")
        line = re.sub(r"[\[\]{}]", "", line)
        line = re.sub(r"\s+", " ", line).strip()
        for sent in SENTENCE_END.split(line):
            sent = sent.strip()
            if len(sent.split()) >= 2:
                yield sent


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--wheels", help="directory holding pre-downloaded wheels")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel_dir = pathlib.Path(args.wheels or tmp)
        if not args.wheels:
            subprocess.check_call([sys.executable, "-m", "pip", "download", "--no-deps",
                                   "-q", "-d", str(wheel_dir), *PACKAGES])
        lines = []
        for pkg in PACKAGES:
            stem = pkg.replace("-", "_")
            wheel = next(wheel_dir.glob(f"{stem}-*.whl"))
            lines.extend(sentences(bible_text(wheel)))

    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    # mtime=0 keeps the archive byte-stable across rebuilds
    with open(out, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
        gz.write(("\n".join(lines) + "\n").encode("utf-8"))
    print(f"{len(lines)} sentences -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
