"""Extract plain paragraphs, one per line, from a decompressed MediaWiki XML dump.

Usage: python3 extract_wiki.py pages.xml data/enwiki_sample.txt
"""
import re, sys, html
src = open(sys.argv[1], encoding="utf-8").read()
pages = re.findall(r"<text[^>]*>(.*?)</text>", src, flags=re.S)
out = []
def strip_templates(t):
    res, depth, i = [], 0, 0
    while i < len(t):
        if t.startswith("{{", i): depth += 1; i += 2; continue
        if t.startswith("}}", i) and depth: depth -= 1; i += 2; continue
        if depth == 0: res.append(t[i])
        i += 1
    return "".join(res)
def strip_tables(t):
    res, depth = [], 0
    for line in t.split("\n"):
        s = line.strip()
        if s.startswith("{|"): depth += 1; continue
        if s.startswith("|}") and depth: depth -= 1; continue
        if depth == 0: res.append(line)
    return "\n".join(res)
for p in pages:
    t = html.unescape(p)
    if t.lstrip().upper().startswith("#REDIRECT"): continue
    t = re.sub(r"<!--.*?-->", "", t, flags=re.S)
    t = re.sub(r"<ref[^>/]*/>", "", t)
    t = re.sub(r"<ref[^>]*>.*?</ref>", "", t, flags=re.S)
    t = strip_templates(t)
    t = strip_tables(t)
    t = re.sub(r"\[\[(?:File|Image|Category|[a-z\-]{2,12}):[^\[\]]*(?:\[\[[^\]]*\]\][^\[\]]*)*\]\]", "", t)
    t = re.sub(r"\[\[([^\]|]*)\|([^\]]*)\]\]", r"\2", t)
    t = re.sub(r"\[\[([^\]]*)\]\]", r"\1", t)
    t = re.sub(r"\[https?://\S+\s*([^\]]*)\]", r"\1", t)
    t = re.sub(r"https?://\S+", "", t)
    t = re.sub(r"<[^>]+>", "", t)
    t = t.replace("'''", "").replace("''", "")
    for line in t.split("\n"):
        s = line.strip()
        if not s or s.startswith(("|", "!", "{", "}")): continue
        m = re.match(r"^(=+)\s*(.*?)\s*=+$", s)
        if m:
            n = len(m.group(1)); s = " ".join(["="]*n) + " " + m.group(2) + " " + " ".join(["="]*n)
        out.append(" " + s.lstrip("*#:; ") + " ")
open(sys.argv[2], "w", encoding="utf-8").write("\n".join(out) + "\n")
