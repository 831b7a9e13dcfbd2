#!/usr/bin/env python3
# Copyright 2026 The Versewright Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Regenerates data/pinyin_finals.tsv and data/content_words.txt.

Requires `pypinyin` and `jieba`. The character set is GB2312 level 1
(3755 common hanzi). Each character gets the final of its most common
reading, folded into 21 rhyme classes.
"""

import argparse
import os

import jieba
from pypinyin import Style, pinyin

# strict pinyin final -> rhyme class
FOLD = {
    "a": "a", "ia": "a", "ua": "a",
    "o": "o", "uo": "o",
    "e": "e",
    "ie": "ie", "ve": "ie",
    "i": "i",
    "u": "u",
    "v": "v",
    "er": "er",
    "ai": "ai", "uai": "ai",
    "ei": "ei", "uei": "ei",
    "ao": "ao", "iao": "ao",
    "ou": "ou", "iou": "ou",
    "an": "an", "uan": "an",
    "ian": "ian", "van": "ian",
    "en": "en", "uen": "en",
    "in": "in", "vn": "in",
    "ang": "ang", "iang": "ang", "uang": "ang",
    "eng": "eng", "ueng": "eng",
    "ing": "ing",
    "ong": "ong", "iong": "ong",
}
APICAL_INITIALS = {"zh", "ch", "sh", "r", "z", "c", "s"}


def gb2312_level1():
    for hi in range(0xB0, 0xD8):
        for lo in range(0xA1, 0xFF):
            if hi == 0xD7 and lo > 0xF9:
                break
            yield bytes([hi, lo]).decode("gb2312")


def rhyme_class(ch):
    final = pinyin(ch, style=Style.FINALS, strict=True)[0][0]
    initial = pinyin(ch, style=Style.INITIALS, strict=True)[0][0]
    if final == "i" and initial in APICAL_INITIALS:
        return "-i"
    return FOLD.get(final)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--max-words", type=int, default=6000)
    args = ap.parse_args()

    lexicon = {}
    for ch in gb2312_level1():
        cls = rhyme_class(ch)
        if cls is not None:
            lexicon[ch] = cls
    with open(os.path.join(args.out, "pinyin_finals.tsv"), "w", encoding="utf-8") as f:
        for ch, cls in lexicon.items():
            f.write(f"{ch}\t{cls}\n")

    words = []
    dict_path = os.path.join(os.path.dirname(jieba.__file__), "dict.txt")
    with open(dict_path, encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if len(parts) != 3:
                continue
            word, freq, pos = parts[0], int(parts[1]), parts[2]
            if pos not in ("n", "v", "vn"):
                continue
            if not 2 <= len(word) <= 4 or any(c not in lexicon for c in word):
                continue
            words.append((-freq, word, pos))
    words.sort()
    with open(os.path.join(args.out, "content_words.txt"), "w", encoding="utf-8") as f:
        for _, word, pos in words[: args.max_words]:
            f.write(f"{word}\t{pos}\n")
    print(f"{len(lexicon)} characters, {len(set(lexicon.values()))} classes, "
          f"{min(len(words), args.max_words)} content words")


if __name__ == "__main__":
    main()
