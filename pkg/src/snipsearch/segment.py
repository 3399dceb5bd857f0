"""Method-level segmentation of Java source files.

A tolerant structural parser rather than a full Java grammar: comments and
literals are masked out for brace tracking, member-level ``{`` positions are
classified by their header text, and each method's balanced-brace extent is
cut from the original source.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from snipsearch.errors import InvalidInputError, MalformedSourceError


class ImportCategory(str, enum.Enum):
    ANDROID = "android"
    JAVA = "java"
    OTHER = "other"


@dataclass(frozen=True)
class Snippet:
    """One method extracted from a Java file.

    Attributes:
        id: Unique identifier within a corpus.
        full_title: ``<package>@<class>#<method>.txt``.
        simple_title: The method name.
        content: Method text from signature to closing brace, comments kept.
        sibling_names: Names of the other methods extracted from the same file.
        imports_android: Import paths under ``android.``.
        imports_java: Import paths under ``java.`` / ``javax.``.
        imports_other: All remaining import paths.
        line_count: Non-blank lines of ``content``.
    """

    id: str
    full_title: str
    simple_title: str
    content: str
    sibling_names: tuple[str, ...] = ()
    imports_android: tuple[str, ...] = ()
    imports_java: tuple[str, ...] = ()
    imports_other: tuple[str, ...] = ()
    line_count: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("sibling_names", "imports_android", "imports_java", "imports_other"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Snippet:
        try:
            return cls(
                id=str(d["id"]),
                full_title=str(d["full_title"]),
                simple_title=str(d["simple_title"]),
                content=str(d["content"]),
                sibling_names=tuple(d.get("sibling_names", ())),
                imports_android=tuple(d.get("imports_android", ())),
                imports_java=tuple(d.get("imports_java", ())),
                imports_other=tuple(d.get("imports_other", ())),
                line_count=int(d["line_count"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"bad snippet record: {exc}") from exc


def categorize_import(import_path: str) -> ImportCategory:
    """Map an import path to its library category."""
    path = import_path.strip()
    if not path:
        raise InvalidInputError("empty import path")
    if path.startswith("android."):
        return ImportCategory.ANDROID
    if path.startswith(("java.", "javax.")):
        return ImportCategory.JAVA
    return ImportCategory.OTHER


def count_lines(content: str) -> int:
    """Number of non-blank lines in ``content``."""
    return sum(1 for line in content.split("\n") if line.strip())


def mask_source(source: str) -> str:
    """Blank out comments, string and char literals, keeping offsets and newlines."""
    out = list(source)
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        nxt = source[i + 1] if i + 1 < n else ""
        if c == "/" and nxt == "/":
            j = source.find("\n", i)
            j = n if j < 0 else j
            _blank(out, i, j)
            i = j
        elif c == "/" and nxt == "*":
            j = source.find("*/", i + 2)
            j = n if j < 0 else j + 2
            _blank(out, i, j)
            i = j
        elif source.startswith('"""', i):
            j = source.find('"""', i + 3)
            j = n if j < 0 else j + 3
            _blank(out, i, j)
            i = j
        elif c in "\"'":
            j = i + 1
            while j < n and source[j] != c and source[j] != "\n":
                j += 2 if source[j] == "\\" else 1
            j = min(j + 1, n)
            _blank(out, i, j)
            i = j
        else:
            i += 1
    return "".join(out)


def _blank(chars: list[str], start: int, end: int) -> None:
    for k in range(start, end):
        if chars[k] != "\n":
            chars[k] = " "


def _match_braces(masked: str, name: str) -> dict[int, int]:
    pairs: dict[int, int] = {}
    stack: list[int] = []
    for i, c in enumerate(masked):
        if c == "{":
            stack.append(i)
        elif c == "}":
            if not stack:
                line = masked.count("\n", 0, i) + 1
                raise MalformedSourceError(f"{name}: unmatched '}}' at line {line}")
            pairs[stack.pop()] = i
    if stack:
        line = masked.count("\n", 0, stack[-1]) + 1
        raise MalformedSourceError(f"{name}: unclosed '{{' opened at line {line}")
    return pairs


_IMPORT_RE = re.compile(r"^\s*import\s+(?:static\s+)?([\w.]+(?:\.\*)?)\s*;", re.MULTILINE)
_TYPE_DECL_RE = re.compile(r"\b(class|interface|enum|record)\s+([A-Za-z_$][\w$]*)")
_ANNOTATION_RE = re.compile(r"@(?!interface\b)[\w$.]+(?:\s*\([^()]*\))?")
_LEADING_ANNOTATIONS_RE = re.compile(r"(?:@(?!interface\b)[\w$.]+(?:\s*\([^()]*\))?\s*)*")
_METHOD_HEADER_RE = re.compile(
    r"([A-Za-z_$][\w$]*)\s*\(([^()]*)\)\s*(?:\[\s*\]\s*)*"
    r"(?:throws\s+[\w$.<>,\s]+)?\s*$",
    re.DOTALL,
)
_NOT_METHOD_NAMES = frozenset(
    "if for while switch catch synchronized try do else new return throw "
    "assert super this case default".split()
)


def _split_params(params: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for c in params:
        if c == "<":
            depth += 1
        elif c == ">":
            depth -= 1
        if c == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(c)
    parts.append("".join(cur))
    return [p.strip() for p in parts]


def _looks_like_params(params: str) -> bool:
    if not params.strip():
        return True
    for p in _split_params(_ANNOTATION_RE.sub(" ", params)):
        p = re.sub(r"\bfinal\b", " ", p).replace("...", " ... ")
        if len(p.split()) < 2:
            return False
    return True


def _method_name(header: str) -> str | None:
    """Return the declared method name if ``header`` (text before ``{``) is a method."""
    text = _ANNOTATION_RE.sub(" ", header)
    if "=" in text or "->" in text or _TYPE_DECL_RE.search(text):
        return None
    m = _METHOD_HEADER_RE.search(text)
    if not m or m.group(1) in _NOT_METHOD_NAMES:
        return None
    if not _looks_like_params(m.group(2)):
        return None
    return m.group(1)


def _primary_type_body(masked: str, pairs: dict[int, int], class_name: str) -> tuple[int, int] | None:
    depth_at = _depths(masked)
    candidates = []
    for m in _TYPE_DECL_RE.finditer(masked):
        if depth_at[m.start()] != 0:
            continue
        brace = masked.find("{", m.end())
        if brace < 0:
            continue
        candidates.append((m.group(2), brace))
    if not candidates:
        return None
    for name, brace in candidates:
        if name == class_name:
            return brace, pairs[brace]
    brace = candidates[0][1]
    return brace, pairs[brace]


def _depths(masked: str) -> list[int]:
    depths, d = [], 0
    for c in masked:
        if c == "}":
            d -= 1
        depths.append(d)
        if c == "{":
            d += 1
    return depths


@dataclass
class _Method:
    name: str
    start: int
    end: int
    line: int = field(default=0)


def _find_methods(source: str, masked: str, pairs: dict[int, int], body: tuple[int, int]) -> list[_Method]:
    open_brace, close_brace = body
    methods: list[_Method] = []
    header_start = open_brace + 1
    i = open_brace + 1
    while i < close_brace:
        c = masked[i]
        if c == ";":
            header_start = i + 1
        elif c == "}":
            header_start = i + 1
        elif c == "{":
            end = pairs[i]
            header = masked[header_start:i]
            name = _method_name(header)
            if name is not None:
                offset = len(header) - len(header.lstrip())
                start = header_start + offset
                lead = _LEADING_ANNOTATIONS_RE.match(masked, start)
                if lead:
                    start = lead.end()
                methods.append(_Method(name, start, end + 1, source.count("\n", 0, start) + 1))
            # skip the whole block: method bodies, nested types, initializers
            i = end
            header_start = end + 1
        i += 1
    return methods


def segment_file(package_name: str, class_name: str, source: str, path: str | None = None) -> list[Snippet]:
    """Split one Java file into method-level snippets.

    Args:
        package_name: App package name used in ``full_title``.
        class_name: Java file name without ``.java``.
        source: File text.
        path: Optional file name for error messages; defaults to ``class_name``.

    Returns:
        One Snippet per method (constructors included) of the file's primary
        top-level type, in source order. Methods of nested named types are
        skipped.

    Raises:
        MalformedSourceError: If braces are unbalanced.
    """
    name = path or f"{class_name}.java"
    masked = mask_source(source)
    pairs = _match_braces(masked, name)

    buckets: dict[ImportCategory, list[str]] = {c: [] for c in ImportCategory}
    for m in _IMPORT_RE.finditer(masked):
        # match on masked text (skips commented-out imports), read from source
        imp = source[m.start(1):m.end(1)]
        buckets[categorize_import(imp)].append(imp)

    body = _primary_type_body(masked, pairs, class_name)
    if body is None:
        return []
    methods = _find_methods(source, masked, pairs, body)

    names = [m.name for m in methods]
    snippets = []
    for idx, m in enumerate(methods):
        content = source[m.start:m.end]
        full_title = f"{package_name}@{class_name}#{m.name}.txt"
        snippets.append(
            Snippet(
                id=f"{package_name}@{class_name}#{m.name}:L{m.line}",
                full_title=full_title,
                simple_title=m.name,
                content=content,
                sibling_names=tuple(names[:idx] + names[idx + 1:]),
                imports_android=tuple(buckets[ImportCategory.ANDROID]),
                imports_java=tuple(buckets[ImportCategory.JAVA]),
                imports_other=tuple(buckets[ImportCategory.OTHER]),
                line_count=max(1, count_lines(content)),
            )
        )
    return snippets


def read_manifest(path: str | Path) -> list[tuple[str, str]]:
    """Read a ``project_dir<TAB>package_name`` manifest (``#`` comments allowed)."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise InvalidInputError(f"{path}:{lineno}: expected 'project<TAB>package'")
        rows.append((parts[0].strip(), parts[1].strip()))
    return rows


def segment_tree(src_root: str | Path, manifest: Iterable[tuple[str, str]]) -> Iterator[Snippet]:
    """Segment every ``.java`` file of every manifest project, in sorted path order.

    Colliding snippet ids get a ``~n`` suffix so ids stay unique corpus-wide.
    """
    root = Path(src_root)
    seen: dict[str, int] = {}
    for project, package in manifest:
        pdir = root / project
        if not pdir.is_dir():
            raise InvalidInputError(f"project directory not found: {pdir}")
        for jf in sorted(pdir.rglob("*.java")):
            source = jf.read_text(encoding="utf-8", errors="replace")
            rel = jf.relative_to(root).as_posix()
            for snip in segment_file(package, jf.stem, source, path=rel):
                n = seen.get(snip.id, 0)
                seen[snip.id] = n + 1
                if n:
                    snip = Snippet(**{**snip.__dict__, "id": f"{snip.id}~{n}"})
                yield snip


def write_corpus(snippets: Iterable[Snippet], fh) -> int:
    count = 0
    for s in snippets:
        fh.write(json.dumps(s.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
        count += 1
    return count


def read_corpus(path: str | Path) -> list[Snippet]:
    snippets = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
            snippets.append(Snippet.from_dict(rec))
    return snippets
