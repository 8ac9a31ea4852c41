#!/usr/bin/env python3
"""Regenerates src/unicode_tables.inc from Python's unicodedata module.

Usage: python3 tools/gen_unicode_tables.py > src/unicode_tables.inc
"""
import sys
import unicodedata


def ranges(pred):
    out, start = [], None
    for cp in range(sys.maxunicode + 1):
        if pred(cp):
            if start is None:
                start = cp
        elif start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, sys.maxunicode))
    return out


def is_punct(cp):
    return unicodedata.category(chr(cp)).startswith("P")


def is_space(cp):
    return chr(cp).isspace()


def lower_pairs():
    pairs = []
    for cp in range(sys.maxunicode + 1):
        if 0xD800 <= cp <= 0xDFFF:
            continue
        low = chr(cp).lower()
        if len(low) == 1 and ord(low) != cp:
            pairs.append((cp, ord(low)))
    return pairs


def emit_ranges(name, rs):
    print(f"inline constexpr CodeRange {name}[] = {{")
    for a, b in rs:
        print(f"    {{0x{a:X}, 0x{b:X}}},")
    print("};")


print(f"// Generated by tools/gen_unicode_tables.py (Unicode {unicodedata.unidata_version}). Do not edit.")
print()
emit_ranges("kPunctuationRanges", ranges(is_punct))
print()
emit_ranges("kWhitespaceRanges", ranges(is_space))
print()
print("inline constexpr CaseMapping kLowercaseMap[] = {")
for a, b in lower_pairs():
    print(f"    {{0x{a:X}, 0x{b:X}}},")
print("};")
