#!/usr/bin/env python3
"""Build the desk-scale cased English corpus used by the acceptance suite.

Sources (all public domain, fetched from the npm registry):
  * @stdlib/datasets-sotu        US State of the Union addresses 1790-2016
  * @stdlib/datasets-moby-dick   Herman Melville, Moby Dick
  * kjv                          King James Version of the Bible (1769 text)
  * world-english-bible          World English Bible

Output: data/desk/<source>.txt.gz, one tokenized sentence per line, tokens
separated by single spaces, original casing preserved, exact duplicates
removed (across all sources), source order kept.

Usage: python3 scripts/build_desk_corpus.py [--out-dir data/desk]
"""
import argparse
import glob
import gzip
import json
import os
import re
import subprocess
import tarfile
import tempfile

PACKAGES = {
    "sotu": "@stdlib/datasets-sotu@0.2.3",
    "moby": "@stdlib/datasets-moby-dick@0.2.3",
    "kjv": "kjv@1.0.0",
    "web": "world-english-bible@1.0.1",
}

MAX_TOKENS = 80

ABBREVIATIONS = {
    "mr", "mrs", "ms", "dr", "st", "gen", "gov", "hon", "col", "capt", "lieut",
    "messrs", "no", "jr", "sr", "vs", "etc", "rev", "prof", "sen", "rep", "ft",
    "mt", "gov't", "inc", "co", "corp", "jan", "feb", "aug", "sept", "oct",
    "nov", "dec",
}

TOKEN_RE = re.compile(
    r"(?:[A-Za-z]\.){2,}"              # U.S. / A.D.
    r"|\d+(?:[.,:]\d+)*"               # numbers
    r"|\w+(?:['’\-]\w+)*"              # words, hyphenated and with apostrophes
    r"|[^\w\s]",                       # single punctuation
    re.UNICODE,
)

SENT_END_RE = re.compile(r"([.!?][\"'”’)\]]*)\s+(?=[\"“'‘(\[]?[A-Z])")


def fetch(pkg, workdir):
    subprocess.run(["npm", "pack", pkg, "--silent"], cwd=workdir, check=True,
                   stdout=subprocess.DEVNULL)
    tgz = sorted(glob.glob(os.path.join(workdir, "*.tgz")), key=os.path.getmtime)[-1]
    dest = os.path.join(workdir, os.path.basename(tgz)[:-4])
    with tarfile.open(tgz) as tf:
        tf.extractall(dest)
    return os.path.join(dest, "package")


def split_sentences(text):
    text = re.sub(r"\s+", " ", text).strip()
    out, start = [], 0
    for m in SENT_END_RE.finditer(text):
        end = m.end(1)
        prev = text[start:end].split(" ")[-1].rstrip(".!?\"'”’)]").lower()
        if prev in ABBREVIATIONS or re.fullmatch(r"[a-z]", prev):
            continue
        out.append(text[start:end])
        start = m.end()
    if start < len(text):
        out.append(text[start:])
    return out


def tokenize(sentence):
    return TOKEN_RE.findall(sentence)


def keep(tokens):
    if not 3 <= len(tokens) <= MAX_TOKENS:
        return False
    letters = "".join(t for t in tokens if t.isalpha())
    return any(c.islower() for c in letters)


def sotu_texts(root):
    for path in sorted(glob.glob(os.path.join(root, "data", "*.txt"))):
        with open(path, encoding="utf-8") as f:
            yield f.read()


def moby_texts(root):
    def chapter_no(p):
        m = re.search(r"chapter_(\d+)\.txt$", p)
        return int(m.group(1)) if m else -1

    paths = sorted(glob.glob(os.path.join(root, "data", "chapter_*.txt")), key=chapter_no)
    for path in paths:
        with open(path, encoding="utf-8") as f:
            lines = [l for l in f.read().split("\n") if not re.match(r"\s*CHAPTER \d+", l)]
        yield "\n".join(lines)


def kjv_texts(root):
    with open(os.path.join(root, "json", "verses-1769.json"), encoding="utf-8") as f:
        verses = json.load(f)
    for verse in verses.values():
        verse = verse.lstrip("# ").replace("[", "").replace("]", "")
        yield verse


def web_texts(root):
    paths = sorted(glob.glob(os.path.join(root, "json", "*.json")))
    for path in paths:
        with open(path, encoding="utf-8") as f:
            items = json.load(f)
        para = []
        for item in items:
            kind = item.get("type")
            if kind in ("paragraph text", "line text"):
                para.append(item.get("value", ""))
            elif kind in ("paragraph end", "stanza end") and para:
                yield " ".join(para)
                para = []
        if para:
            yield " ".join(para)


def main():
    ap = argparse.ArgumentParser()
    here = os.path.dirname(os.path.abspath(__file__))
    ap.add_argument("--out-dir", default=os.path.join(here, "..", "data", "desk"))
    args = ap.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    seen = set()
    counts = {}
    with tempfile.TemporaryDirectory() as tmp:
        sources = (("sotu", sotu_texts), ("moby", moby_texts), ("kjv", kjv_texts), ("web", web_texts))
        for name, reader in sources:
            work = os.path.join(tmp, name)
            os.makedirs(work)
            root = fetch(PACKAGES[name], work)
            lines = []
            for text in reader(root):
                for sent in split_sentences(text):
                    toks = tokenize(sent)
                    if not keep(toks):
                        continue
                    line = " ".join(toks)
                    if line in seen:
                        continue
                    seen.add(line)
                    lines.append(line)
            counts[name] = len(lines)
            out = os.path.join(args.out_dir, name + ".txt.gz")
            with open(out, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as f:
                f.write(("\n".join(lines) + "\n").encode("utf-8"))
    print(json.dumps({"sentences": sum(counts.values()), "by_source": counts}))


if __name__ == "__main__":
    main()
