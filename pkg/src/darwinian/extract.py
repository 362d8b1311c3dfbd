"""Parserless discovery of Darwinian sites and template materialization.

Scanning is purely token based: store tokens are located with regular
expressions plus bracket balancing, never with a parser.  Each discovered
site becomes one or two placeholders in a templated copy of its file, and
each placeholder that is allowed to vary contributes one integer gene.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import re
import shutil
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .errors import (
    GeneOutOfRange,
    HotnessFileMalformed,
    HotnessFileMissing,
    ManifestError,
    OverlapError,
)
from .store import AdtGroup, Store, store_from_dict, store_to_dict

Genome = tuple  # tuple[int, ...], one value per gene

MANIFEST_VERSION = 1


class SiteKind(str, enum.Enum):
    CTOR_CALL = "CTOR_CALL"
    TYPE_DECL = "TYPE_DECL"


class CapacitySlot(str, enum.Enum):
    NONE = "NONE"
    EMPTY_ARGS = "EMPTY_ARGS"
    SINGLE_INT_LITERAL = "SINGLE_INT_LITERAL"


class GeneKind(str, enum.Enum):
    IMPL = "IMPL"
    CAPACITY = "CAPACITY"


@dataclass(frozen=True)
class Site:
    site_id: int
    file: str
    span: tuple[int, int]  # bytes of the type/ctor token
    kind: SiteKind
    group: AdtGroup
    original_impl: int  # index into options(); == len(impls) means the supertype
    capacity_slot: CapacitySlot = CapacitySlot.NONE
    capacity_value: Optional[int] = None  # the literal for SINGLE_INT_LITERAL
    args_span: Optional[tuple[int, int]] = None  # inside the parentheses
    original_text: bytes = b""
    original_args: bytes = b""
    line: int = 0

    def options(self) -> list[str]:
        """Source tokens this site may take, in gene value order."""
        if self.kind is SiteKind.CTOR_CALL:
            return [impl.ctor_token for impl in self.group.impls]
        opts = [impl.type_token for impl in self.group.impls]
        if self.group.supertype_token:
            opts.append(self.group.supertype_token)
        return opts

    def option_name(self, value: int) -> str:
        if value < len(self.group.impls):
            return self.group.impls[value].name
        return self.group.supertype_token


@dataclass(frozen=True)
class Placeholder:
    kind: GeneKind  # IMPL renders the token (DDS), CAPACITY the arguments (CAP)
    site_id: int

    def __str__(self):
        return f"⟦{'DDS' if self.kind is GeneKind.IMPL else 'CAP'}:{self.site_id}⟧"


Segment = Union[bytes, Placeholder]


@dataclass
class TemplatedFile:
    file: str
    segments: list[Segment]

    def render(self, texts: dict[Placeholder, bytes]) -> bytes:
        return b"".join(s if isinstance(s, bytes) else texts[s] for s in self.segments)


@dataclass(frozen=True)
class Gene:
    site_id: int
    gene_kind: GeneKind
    cardinality: int


@dataclass
class GenomeSchema:
    sites: list[Site]
    genes: list[Gene]
    seed_genome: Genome
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def gene_index(self, site_id: int, kind: GeneKind) -> Optional[int]:
        if self._index is None:
            self._index = {(g.site_id, g.gene_kind): i for i, g in enumerate(self.genes)}
        return self._index.get((site_id, kind))

    @property
    def cardinalities(self) -> list[int]:
        return [g.cardinality for g in self.genes]

    def check(self, genome: Sequence[int]) -> Genome:
        if len(genome) != len(self.genes):
            raise GeneOutOfRange(f"genome has {len(genome)} values, schema has {len(self.genes)} genes")
        for i, (v, g) in enumerate(zip(genome, self.genes)):
            if not isinstance(v, int) or not 0 <= v < g.cardinality:
                raise GeneOutOfRange(f"gene {i} (site {g.site_id} {g.gene_kind.value}) = {v!r} not in [0, {g.cardinality})")
        return tuple(genome)


def genome_hash(genome: Sequence[int]) -> str:
    return hashlib.sha256(",".join(map(str, genome)).encode()).hexdigest()[:16]


def search_space_size(schema: GenomeSchema) -> int:
    """Number of distinct variants: the product of all gene cardinalities."""
    return math.prod(g.cardinality for g in schema.genes)


# ---------------------------------------------------------------- language profiles


@dataclass(frozen=True)
class LanguageProfile:
    name: str
    ident: bytes  # regex for one identifier character class
    ctor_prefix: bytes  # regex that must immediately precede a ctor token
    generics: bool  # whether <...> may follow a type token
    decl_prefix: Optional[bytes] = None  # regex preceding a declared type (None: type-first)


JAVA = LanguageProfile(
    name="java",
    ident=rb"[\w$]",
    ctor_prefix=rb"\bnew\s+(?:[A-Za-z_$][\w$]*\s*\.\s*)*",
    generics=True,
)

PYTHON = LanguageProfile(
    name="python",
    ident=rb"\w",
    ctor_prefix=rb"(?<![\w.])",
    generics=False,
    decl_prefix=rb"(?::|->)[ \t]*",
)

_PROFILES = {"java": JAVA, "python": PYTHON}
_STORE_PROFILES = {"java-collections": JAVA, "generic-demo": PYTHON}


def profile_for(language_id: str) -> LanguageProfile:
    if language_id in _STORE_PROFILES:
        return _STORE_PROFILES[language_id]
    for prefix, prof in _PROFILES.items():
        if language_id.startswith(prefix):
            return prof
    return PYTHON


def _skip_ws(data: bytes, i: int) -> int:
    while i < len(data) and data[i] in b" \t\r\n":
        i += 1
    return i


def _balanced(data: bytes, i: int, open_: int, close: int) -> Optional[int]:
    """Index just past the bracket matching data[i] (which must be open_)."""
    depth = 0
    for j in range(i, len(data)):
        c = data[j]
        if c == open_:
            depth += 1
        elif c == close:
            depth -= 1
            if depth == 0:
                return j + 1
    return None


def _alternation(tokens) -> bytes:
    # longest first so a token never shadows a longer one sharing its prefix
    return b"|".join(re.escape(t.encode()) for t in sorted(tokens, key=len, reverse=True))


_INT_ARG = re.compile(rb"^\s*(\d+)\s*$")
_DEF_BEFORE = re.compile(rb"(?:\bdef|\bclass)\s+$")


@dataclass
class _Match:
    start: int
    end: int
    token: str
    kind: SiteKind
    args_span: Optional[tuple[int, int]] = None


def _scan_bytes(data: bytes, store: Store, profile: LanguageProfile) -> list[_Match]:
    idc = profile.ident
    matches: list[_Match] = []
    ctor_tokens = {impl.ctor_token for g in store.groups for impl in g.impls}
    if ctor_tokens:
        pat = re.compile(profile.ctor_prefix + rb"(" + _alternation(ctor_tokens) + rb")(?!" + idc + rb")")
        for m in pat.finditer(data):
            s, e = m.span(1)
            if profile is PYTHON and _DEF_BEFORE.search(data[max(0, s - 16) : s]):
                continue
            i = _skip_ws(data, e)
            if profile.generics and i < len(data) and data[i : i + 1] == b"<":
                close = _balanced(data, i, ord("<"), ord(">"))
                if close is None:
                    continue
                i = _skip_ws(data, close)
            if i >= len(data) or data[i : i + 1] != b"(":
                continue
            close = _balanced(data, i, ord("("), ord(")"))
            if close is None:
                continue
            matches.append(_Match(s, e, m.group(1).decode(), SiteKind.CTOR_CALL, (i + 1, close - 1)))

    decl_tokens = set()
    for g in store.groups:
        if g.rewrite_declarations:
            decl_tokens.update(impl.type_token for impl in g.impls)
            if g.supertype_token:
                decl_tokens.add(g.supertype_token)
    if decl_tokens:
        alt = _alternation(decl_tokens)
        if profile.decl_prefix is None:
            pat = re.compile(rb"(?<![\w$.])(" + alt + rb")(?!" + idc + rb")")
        else:
            pat = re.compile(profile.decl_prefix + rb"(" + alt + rb")(?!" + idc + rb")")
        ctor_pre = re.compile(rb"\bnew\s+(?:[A-Za-z_$][\w$]*\s*\.\s*)*$")
        for m in pat.finditer(data):
            s, e = m.span(1)
            if profile.decl_prefix is None:
                if ctor_pre.search(data[max(0, s - 64) : s]):
                    continue
                i = _skip_ws(data, e)
                if profile.generics and data[i : i + 1] == b"<":
                    close = _balanced(data, i, ord("<"), ord(">"))
                    if close is None:
                        continue
                    i = close
                while True:
                    j = _skip_ws(data, i)
                    if data[j : j + 2] == b"[]":
                        i = j + 2
                    else:
                        break
                j = _skip_ws(data, i)
                if j == i and data[i - 1 : i] not in (b">", b"]"):
                    continue  # type and name must be separated
                if not re.match(rb"[A-Za-z_$]", data[j : j + 1]):
                    continue
            else:
                j = _skip_ws(data, e)
                if data[j : j + 1] == b"(":
                    continue
            matches.append(_Match(s, e, m.group(1).decode(), SiteKind.TYPE_DECL))
    matches.sort(key=lambda mt: (mt.start, mt.end))
    return matches


def _occupied(m: _Match, slot: CapacitySlot) -> list[tuple[int, int]]:
    spans = [(m.start, m.end)]
    if slot is not CapacitySlot.NONE:
        spans.append(m.args_span)
    return spans


# ---------------------------------------------------------------- ranking


@dataclass(frozen=True)
class SiteRanking:
    kind: str = "all"  # "all" | "static_count" | "hotness"
    max_sites: Optional[int] = None
    path: Optional[str] = None

    @classmethod
    def parse(cls, text: str, max_sites=None) -> "SiteRanking":
        """Parse ``all``, ``static`` / ``static_count`` or ``hotness=PATH``."""
        if text in ("all", "ALL"):
            return cls("all", max_sites)
        if text in ("static", "static_count", "static-count", "STATIC_COUNT"):
            return cls("static_count", max_sites)
        if text.startswith("hotness=") or text.startswith("hotness:"):
            return cls("hotness", max_sites, text.split("=", 1)[-1] if "=" in text else text.split(":", 1)[1])
        raise ValueError(f"unknown ranking {text!r}")


def read_hotness(path) -> dict[str, float]:
    path = Path(path)
    if not path.is_file():
        raise HotnessFileMissing(f"hotness file {path} not found")
    weights = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise HotnessFileMalformed(f"{path}:{lineno}: expected 'path<TAB>weight'")
        try:
            weights[parts[0].strip()] = float(parts[1])
        except ValueError:
            raise HotnessFileMalformed(f"{path}:{lineno}: bad weight {parts[1]!r}") from None
    return weights


def rank_sites(sites: Sequence[Site], ranking: SiteRanking = SiteRanking()) -> list[Site]:
    if ranking.kind == "all":
        ranked = list(sites)
    elif ranking.kind == "static_count":
        counts = Counter(s.file for s in sites)
        ranked = sorted(sites, key=lambda s: (-counts[s.file], s.site_id))
    elif ranking.kind == "hotness":
        weights = read_hotness(ranking.path)
        ranked = sorted(sites, key=lambda s: (-weights.get(s.file, 0.0), s.site_id))
    else:
        raise ValueError(f"unknown ranking kind {ranking.kind!r}")
    if ranking.max_sites is not None:
        ranked = ranked[: ranking.max_sites]
    return ranked


# ---------------------------------------------------------------- scanning


def _site_genes(site: Site) -> list[Gene]:
    genes = []
    n = len(site.options())
    if n >= 2:
        genes.append(Gene(site.site_id, GeneKind.IMPL, n))
    if site.capacity_slot is not CapacitySlot.NONE:
        genes.append(Gene(site.site_id, GeneKind.CAPACITY, len(site.group.capacity_domain) + 1))
    return genes


def project_files(source_root: Path, globs: Sequence[str]) -> list[str]:
    found = set()
    for pattern in globs:
        for p in source_root.glob(pattern):
            if p.is_file():
                found.add(p.relative_to(source_root).as_posix())
    return sorted(found)


def scan_project(source_root, store: Store, ranking: SiteRanking = SiteRanking(), file_globs=None):
    """Find every site in ``source_root``; returns ``(templates, schema)``.

    Files matching the store globs (or ``file_globs``) are scanned in path
    order.  Sites dropped by ``ranking`` stay literal text and get no genes.
    """
    source_root = Path(source_root)
    if not source_root.is_dir():
        raise FileNotFoundError(f"source root {source_root} is not a directory")
    profile = profile_for(store.language_id)
    globs = tuple(file_globs) if file_globs else store.file_globs
    files = project_files(source_root, globs)

    sites: list[Site] = []
    raw: dict[str, tuple[bytes, list[tuple[_Match, Site]]]] = {}
    for rel in files:
        data = (source_root / rel).read_bytes()
        found = []
        for m in _scan_bytes(data, store, profile):
            group = store.lookup(m.token)
            slot, value = CapacitySlot.NONE, None
            if m.kind is SiteKind.CTOR_CALL and group.tunable:
                args = data[m.args_span[0] : m.args_span[1]]
                lit = _INT_ARG.match(args)
                if not args.strip():
                    slot = CapacitySlot.EMPTY_ARGS
                elif lit:
                    slot, value = CapacitySlot.SINGLE_INT_LITERAL, int(lit.group(1))
            if m.kind is SiteKind.CTOR_CALL:
                original = group.index_of(m.token)
            elif m.token == group.supertype_token:
                original = len(group.impls)
            else:
                original = [i.type_token for i in group.impls].index(m.token)
            site = Site(
                site_id=len(sites),
                file=rel,
                span=(m.start, m.end),
                kind=m.kind,
                group=group,
                original_impl=original,
                capacity_slot=slot,
                capacity_value=value,
                args_span=m.args_span if slot is not CapacitySlot.NONE else None,
                original_text=data[m.start : m.end],
                original_args=data[m.args_span[0] : m.args_span[1]] if m.args_span else b"",
                line=data.count(b"\n", 0, m.start) + 1,
            )
            sites.append(site)
            found.append((m, site))
        occupied = sorted(
            (span, site.site_id) for m, site in found for span in _occupied(m, site.capacity_slot)
        )
        for (a, ida), (b, idb) in zip(occupied, occupied[1:]):
            if b[0] < a[1]:
                raise OverlapError(f"{rel}: sites {ida} {a} and {idb} {b} overlap")
        raw[rel] = (data, found)

    active = {s.site_id for s in rank_sites(sites, ranking)}
    genes: list[Gene] = []
    seed = []
    for site in sites:
        if site.site_id not in active:
            continue
        for gene in _site_genes(site):
            genes.append(gene)
            seed.append(site.original_impl if gene.gene_kind is GeneKind.IMPL else 0)
    gene_sites = {g.site_id for g in genes}

    templates = []
    for rel in files:
        data, found = raw[rel]
        cuts = []
        for m, site in found:
            if site.site_id not in gene_sites:
                continue
            cuts.append((site.span, Placeholder(GeneKind.IMPL, site.site_id)))
            if site.args_span is not None:
                cuts.append((site.args_span, Placeholder(GeneKind.CAPACITY, site.site_id)))
        cuts.sort(key=lambda c: c[0])
        segments: list[Segment] = []
        pos = 0
        for (s, e), ph in cuts:
            if s > pos or not segments:
                segments.append(data[pos:s])
            segments.append(ph)
            pos = e
        segments.append(data[pos:])
        segments = [s for s in segments if not (isinstance(s, bytes) and s == b"")] or [b""]
        templates.append(TemplatedFile(rel, segments))

    schema = GenomeSchema(sites=sites, genes=genes, seed_genome=tuple(seed))
    return templates, schema


# ---------------------------------------------------------------- materialization


def placeholder_texts(schema: GenomeSchema, genome: Sequence[int]) -> dict[Placeholder, bytes]:
    genome = schema.check(genome)
    texts = {}
    for s in schema.sites:
        texts[Placeholder(GeneKind.IMPL, s.site_id)] = s.original_text
        texts[Placeholder(GeneKind.CAPACITY, s.site_id)] = s.original_args
    for value, gene in zip(genome, schema.genes):
        site = schema.sites[gene.site_id]
        if gene.gene_kind is GeneKind.IMPL:
            texts[Placeholder(GeneKind.IMPL, site.site_id)] = site.options()[value].encode()
        elif value:
            texts[Placeholder(GeneKind.CAPACITY, site.site_id)] = str(site.group.capacity_domain[value - 1]).encode()
    return texts


def render_file(template: TemplatedFile, schema: GenomeSchema, genome) -> bytes:
    return template.render(placeholder_texts(schema, genome))


def materialize(templates, schema: GenomeSchema, genome, out_root, source_root=None) -> Path:
    """Write the variant selected by ``genome`` under ``out_root``.

    With ``source_root`` the untemplated files are copied first, giving a
    complete tree.  The seed genome reproduces the original bytes exactly.
    """
    texts = placeholder_texts(schema, genome)
    out_root = Path(out_root)
    if source_root is not None:
        shutil.copytree(source_root, out_root, dirs_exist_ok=True, ignore=shutil.ignore_patterns("__pycache__"))
    out_root.mkdir(parents=True, exist_ok=True)
    for tf in templates:
        dest = out_root / tf.file
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_bytes(tf.render(texts))
    return out_root


def decode_changes(schema: GenomeSchema, genome) -> list[dict]:
    """Human-readable list of what ``genome`` changes relative to the seed."""
    genome = schema.check(genome)
    changes = []
    for value, seed, gene in zip(genome, schema.seed_genome, schema.genes):
        if value == seed:
            continue
        site = schema.sites[gene.site_id]
        rec = {"site_id": site.site_id, "file": site.file, "line": site.line, "group": site.group.adt_name}
        if gene.gene_kind is GeneKind.IMPL:
            rec.update(kind="impl", from_impl=site.option_name(seed), to_impl=site.option_name(value))
        else:
            rec.update(
                kind="capacity",
                from_value=site.original_args.decode("utf-8", "replace").strip() or "default",
                to_value=site.group.capacity_domain[value - 1] if value else "ORIGINAL",
            )
        changes.append(rec)
    return changes


# ---------------------------------------------------------------- manifest


@dataclass
class Extraction:
    source_root: Path
    store: Store
    templates: list[TemplatedFile]
    schema: GenomeSchema

    def materialize(self, genome, out_root) -> Path:
        return materialize(self.templates, self.schema, genome, out_root, self.source_root)


def extract(source_root, store: Store, ranking: SiteRanking = SiteRanking(), file_globs=None) -> Extraction:
    templates, schema = scan_project(source_root, store, ranking, file_globs)
    return Extraction(Path(source_root).resolve(), store, templates, schema)


def _b2s(b: bytes) -> str:
    return b.decode("utf-8", "surrogateescape")


def _s2b(s: str) -> bytes:
    return s.encode("utf-8", "surrogateescape")


def manifest_to_dict(ex: Extraction) -> dict:
    def seg(s):
        return {"lit": _b2s(s)} if isinstance(s, bytes) else {"ph": s.kind.value, "site": s.site_id}

    return {
        "version": MANIFEST_VERSION,
        "source_root": str(ex.source_root),
        "store": store_to_dict(ex.store),
        "sites": [
            {
                "site_id": s.site_id,
                "file": s.file,
                "span": list(s.span),
                "kind": s.kind.value,
                "group": s.group.adt_name,
                "original_impl": s.original_impl,
                "capacity_slot": s.capacity_slot.value,
                "capacity_value": s.capacity_value,
                "args_span": list(s.args_span) if s.args_span else None,
                "original_text": _b2s(s.original_text),
                "original_args": _b2s(s.original_args),
                "line": s.line,
            }
            for s in ex.schema.sites
        ],
        "genes": [[g.site_id, g.gene_kind.value, g.cardinality] for g in ex.schema.genes],
        "seed_genome": list(ex.schema.seed_genome),
        "search_space_size": str(search_space_size(ex.schema)),
        "templates": [{"file": t.file, "segments": [seg(s) for s in t.segments]} for t in ex.templates],
    }


def manifest_from_dict(d: dict) -> Extraction:
    if d.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"unsupported manifest version {d.get('version')!r}")
    try:
        store = store_from_dict(d["store"])
        sites = [
            Site(
                site_id=s["site_id"],
                file=s["file"],
                span=tuple(s["span"]),
                kind=SiteKind(s["kind"]),
                group=store.group(s["group"]),
                original_impl=s["original_impl"],
                capacity_slot=CapacitySlot(s["capacity_slot"]),
                capacity_value=s["capacity_value"],
                args_span=tuple(s["args_span"]) if s["args_span"] else None,
                original_text=_s2b(s["original_text"]),
                original_args=_s2b(s["original_args"]),
                line=s["line"],
            )
            for s in d["sites"]
        ]
        genes = [Gene(sid, GeneKind(kind), card) for sid, kind, card in d["genes"]]
        templates = [
            TemplatedFile(
                t["file"],
                [_s2b(x["lit"]) if "lit" in x else Placeholder(GeneKind(x["ph"]), x["site"]) for x in t["segments"]],
            )
            for t in d["templates"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"malformed manifest: {exc!r}") from exc
    schema = GenomeSchema(sites, genes, tuple(d["seed_genome"]))
    return Extraction(Path(d["source_root"]), store, templates, schema)


def save_manifest(ex: Extraction, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(manifest_to_dict(ex), indent=1) + "\n", encoding="utf-8")
    return path


def load_manifest(path) -> Extraction:
    try:
        return manifest_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: {exc}") from exc
