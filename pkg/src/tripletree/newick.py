"""Newick reading and writing.

Branch lengths encode time deltas: the length of the edge into node ``v``
is ``t(v) - t(parent(v))``.  The stem is implicit; the printed root is the
cladogram root and carries its own length (equal to its time, since the
stem sits at 0).  Serialized files end with ';' and a trailing newline.

When any branch length is missing the parser falls back to canonical
height-based times, which is the right treatment for externally authored
target topologies.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .tree import Tree, assign_canonical_times


class NewickError(ValueError):
    """Malformed Newick input; ``offset`` is the character position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


_SPECIAL = set("(),:;[]")


def _format_length(x: float) -> str:
    # 15 significant digits: reconstructed times (sums of lengths along a
    # root path) must stay within 12 significant digits of the originals.
    return f"{x:.15g}"


def to_newick(tree: Tree, names: Mapping[int, str] | None = None, lengths: bool = True) -> str:
    """Serialize ``tree`` (stem omitted). ``names`` maps leaf payloads to
    display labels; payloads print as bare integers otherwise."""

    def label(payload: int) -> str:
        if names is not None:
            s = str(names[payload])
        else:
            s = str(payload)
        if any(ch in _SPECIAL or ch.isspace() for ch in s):
            raise NewickError(f"leaf label {s!r} contains reserved characters", 0)
        return s

    def write(nid) -> str:
        pay = tree.payload(nid)
        if pay is not None:
            body = label(pay)
        else:
            body = "(" + ",".join(write(c) for c in tree.children(nid)) + ")"
        if lengths:
            parent = tree.parent(nid)
            delta = tree.time(nid) - tree.time(parent)
            body += ":" + _format_length(delta)
        return body

    return write(tree.cladogram_root) + ";"


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.i = 0

    def error(self, msg: str) -> NewickError:
        return NewickError(msg, self.i)

    def skip_space(self) -> None:
        while self.i < len(self.text):
            c = self.text[self.i]
            if c.isspace():
                self.i += 1
            elif c == "[":
                end = self.text.find("]", self.i)
                if end < 0:
                    raise self.error("unterminated comment")
                self.i = end + 1
            else:
                return

    def peek(self) -> str:
        self.skip_space()
        if self.i >= len(self.text):
            raise self.error("unexpected end of input")
        return self.text[self.i]

    def take_label(self) -> str:
        self.skip_space()
        start = self.i
        while self.i < len(self.text):
            c = self.text[self.i]
            if c in _SPECIAL or c.isspace():
                break
            self.i += 1
        if self.i == start:
            raise self.error("expected a label")
        return self.text[start : self.i]

    def take_length(self) -> float | None:
        self.skip_space()
        if self.i < len(self.text) and self.text[self.i] == ":":
            self.i += 1
            tok = self.take_label()
            try:
                return float(tok)
            except ValueError:
                raise NewickError(f"bad branch length {tok!r}", self.i - len(tok)) from None
        return None


def parse_newick(
    text: str,
    label_table: Mapping[str, int] | None = None,
    allow_multifurcations: bool = False,
) -> Tree:
    """Parse a Newick string into a :class:`Tree`.

    Leaf labels must be integers unless ``label_table`` maps them to
    payload indices.  Internal labels are accepted and dropped.  Non-binary
    groups are rejected unless ``allow_multifurcations`` is set (targets may
    be multifurcating; sampler states must be binary).
    """
    p = _Parser(text)
    tree = Tree()
    lengths: dict[int, float | None] = {}

    def resolve(tok: str, at: int) -> int:
        if label_table is not None:
            if tok not in label_table:
                raise NewickError(f"leaf label {tok!r} not in label table", at)
            return int(label_table[tok])
        try:
            return int(tok)
        except ValueError:
            raise NewickError(
                f"leaf label {tok!r} is not an integer and no label table was given", at
            ) from None

    def element() -> int:
        c = p.peek()
        if c == "(":
            p.i += 1
            kids = [element()]
            while True:
                c = p.peek()
                if c == ",":
                    p.i += 1
                    kids.append(element())
                elif c == ")":
                    p.i += 1
                    break
                else:
                    raise p.error(f"expected ',' or ')', found {c!r}")
            if len(kids) < 2:
                raise p.error("group with a single member")
            if len(kids) > 2 and not allow_multifurcations:
                raise p.error(f"non-binary group with {len(kids)} children")
            # optional internal label, ignored
            p.skip_space()
            if p.i < len(p.text) and p.text[p.i] not in _SPECIAL and not p.text[p.i].isspace():
                p.take_label()
            nid = tree.new_node(0.5)
            for k in kids:
                tree.link(nid, k)
        else:
            at = p.i
            tok = p.take_label()
            try:
                payload = resolve(tok, at)
                nid = tree.new_node(1.0, payload=payload)
            except NewickError:
                raise
            except Exception as exc:  # duplicate payloads surface here
                raise NewickError(str(exc), at) from None
        lengths[nid] = p.take_length()
        return nid

    top = element()
    p.skip_space()
    if p.i >= len(p.text) or p.text[p.i] != ";":
        raise p.error("expected ';'")
    p.i += 1
    p.skip_space()
    if p.i != len(p.text):
        raise p.error("trailing characters after ';'")

    if tree.payload(top) is None and not tree.children(top):
        raise NewickError("empty tree", 0)

    stem = tree.new_node(0.0)
    tree.link(stem, top)
    tree.set_root(stem)

    if any(v is None for v in lengths.values()):
        assign_canonical_times(tree)
    else:
        order = tree.postorder()
        order.reverse()  # preorder: parents before children
        for nid in order:
            if nid == stem:
                tree.set_time(nid, 0.0)
                continue
            t = tree.time(tree.parent(nid)) + lengths[nid]
            if tree.payload(nid) is not None:
                if abs(t - 1.0) > 1e-6:
                    raise NewickError(
                        f"leaf times must sum to 1 along branch lengths, got {t!r}", 0
                    )
                t = 1.0
            elif not (0.0 < t < 1.0):
                raise NewickError(f"internal node time {t!r} outside (0, 1)", 0)
            tree.set_time(nid, t)
        for nid in order:
            par = tree.parent(nid)
            if par != -1 and not tree.time(par) < tree.time(nid):
                raise NewickError("branch lengths produce non-increasing times", 0)

    tree.rebuild_caches()
    return tree


def write_newick_file(tree: Tree, path, names: Mapping[int, str] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_newick(tree, names=names))
        fh.write("\n")


def read_newick_file(path, label_table: Mapping[str, int] | None = None,
                     allow_multifurcations: bool = False) -> Tree:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_newick(fh.read().strip(), label_table=label_table,
                            allow_multifurcations=allow_multifurcations)
