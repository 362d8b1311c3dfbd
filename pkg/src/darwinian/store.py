"""Darwinian data structure stores.

A store lists, per abstract data type, the implementations that may replace
one another in a program.  Stores are plain JSON files; two are built in.
Impl order inside a group is the gene value order, so it must stay stable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ParseError, UnknownStoreId, ValidationError

# Keeps the source text unchanged at a capacity site.
ORIGINAL = "ORIGINAL"

DEFAULT_CAPACITY_DOMAIN = (1, 4, 16, 64, 256, 1024, 4096)

_TOKEN = re.compile(r"^\S+$")

_TOP_KEYS = {"language_id", "file_globs", "groups"}
_GROUP_KEYS = {"adt_name", "supertype_token", "rewrite_declarations", "capacity_domain", "impls"}
_GROUP_REQUIRED = _GROUP_KEYS - {"supertype_token"}
_IMPL_KEYS = {"name", "type_token", "ctor_token", "capacity_arg"}


@dataclass(frozen=True)
class ImplSpec:
    name: str
    type_token: str
    ctor_token: str
    capacity_arg: bool = False


@dataclass(frozen=True)
class AdtGroup:
    adt_name: str
    impls: tuple[ImplSpec, ...]
    supertype_token: Optional[str] = None
    rewrite_declarations: bool = False
    capacity_domain: tuple[int, ...] = DEFAULT_CAPACITY_DOMAIN

    @property
    def tunable(self) -> bool:
        return any(impl.capacity_arg for impl in self.impls)

    def index_of(self, type_token: str) -> int:
        for i, impl in enumerate(self.impls):
            if impl.type_token == type_token or impl.ctor_token == type_token:
                return i
        raise KeyError(type_token)


@dataclass(frozen=True)
class Store:
    language_id: str
    groups: tuple[AdtGroup, ...]
    file_globs: tuple[str, ...] = ("**/*",)
    _by_token: dict = field(default=None, init=False, repr=False, compare=False)

    def group(self, adt_name: str) -> AdtGroup:
        for g in self.groups:
            if g.adt_name == adt_name:
                return g
        raise KeyError(adt_name)

    def lookup(self, token: str) -> AdtGroup:
        """Return the single group whose impls (or supertype) use ``token``."""
        if self._by_token is None:
            table = {}
            for g in self.groups:
                for impl in g.impls:
                    table.setdefault(impl.type_token, g)
                    table.setdefault(impl.ctor_token, g)
                if g.supertype_token:
                    table.setdefault(g.supertype_token, g)
            object.__setattr__(self, "_by_token", table)
        return self._by_token[token]


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "info"
    location: str
    message: str

    def __str__(self):
        return f"{self.severity}: {self.location}: {self.message}"


def validate_store(store: Store) -> list[Diagnostic]:
    """Check every store invariant; an empty list means the store is valid."""
    diags = []

    def err(loc, msg):
        diags.append(Diagnostic("error", loc, msg))

    if not store.groups:
        err("store", "groups list is empty")
    seen_tokens: dict[str, str] = {}
    seen_names = set()
    for gi, g in enumerate(store.groups):
        loc = f"group {g.adt_name!r}"
        if g.adt_name in seen_names:
            err(loc, "duplicate adt_name")
        seen_names.add(g.adt_name)
        if len(g.impls) == 0:
            err(loc, "group has no impls")
        elif len(g.impls) == 1 and not g.tunable:
            err(loc, "a single impl without capacity_arg offers nothing to vary")
        dom = list(g.capacity_domain)
        if any(not isinstance(v, int) or isinstance(v, bool) or v <= 0 for v in dom):
            err(loc, "capacity_domain values must be positive integers")
        elif any(b <= a for a, b in zip(dom, dom[1:])):
            err(loc, f"capacity_domain {dom} is not strictly increasing")
        group_types = set()
        group_ctors = set()
        for impl in g.impls:
            iloc = f"{loc} impl {impl.name!r}"
            for attr in ("type_token", "ctor_token"):
                tok = getattr(impl, attr)
                if not tok or not _TOKEN.match(tok):
                    err(iloc, f"{attr} {tok!r} must be non-empty without whitespace")
            if impl.type_token in group_types:
                err(iloc, f"type_token {impl.type_token!r} repeated within group")
            group_types.add(impl.type_token)
            if impl.ctor_token in group_ctors:
                err(iloc, f"ctor_token {impl.ctor_token!r} repeated within group")
            group_ctors.add(impl.ctor_token)
        own = {impl.type_token for impl in g.impls} | {impl.ctor_token for impl in g.impls}
        if g.supertype_token:
            if not _TOKEN.match(g.supertype_token):
                err(loc, f"supertype_token {g.supertype_token!r} contains whitespace")
            if g.supertype_token in own:
                err(loc, f"supertype_token {g.supertype_token!r} is also an impl token")
            own.add(g.supertype_token)
            if not g.rewrite_declarations:
                diags.append(Diagnostic("info", loc, "supertype_token set but rewrite_declarations is off"))
        for tok in sorted(own):
            other = seen_tokens.get(tok)
            if other is not None and other != g.adt_name:
                err(loc, f"token {tok!r} already belongs to group {other!r}")
            seen_tokens.setdefault(tok, g.adt_name)
    return diags


def _check_keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ParseError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ParseError(f"{where}: missing keys {sorted(missing)}")


def store_from_dict(data) -> Store:
    """Build a validated Store from the decoded JSON document."""
    _check_keys(data, _TOP_KEYS, _TOP_KEYS, "store")
    groups = []
    if not isinstance(data["groups"], list):
        raise ParseError("store: groups must be a list")
    for gi, gd in enumerate(data["groups"]):
        where = f"groups[{gi}]"
        _check_keys(gd, _GROUP_KEYS, _GROUP_REQUIRED, where)
        impls = []
        for ii, idata in enumerate(gd["impls"]):
            _check_keys(idata, _IMPL_KEYS, _IMPL_KEYS, f"{where}.impls[{ii}]")
            impls.append(
                ImplSpec(
                    name=str(idata["name"]),
                    type_token=str(idata["type_token"]),
                    ctor_token=str(idata["ctor_token"]),
                    capacity_arg=bool(idata["capacity_arg"]),
                )
            )
        dom = gd["capacity_domain"]
        if not isinstance(dom, list):
            raise ParseError(f"{where}: capacity_domain must be a list")
        groups.append(
            AdtGroup(
                adt_name=str(gd["adt_name"]),
                impls=tuple(impls),
                supertype_token=gd.get("supertype_token"),
                rewrite_declarations=bool(gd["rewrite_declarations"]),
                capacity_domain=tuple(dom),
            )
        )
    globs = data["file_globs"]
    if not isinstance(globs, list) or not all(isinstance(g, str) for g in globs):
        raise ParseError("store: file_globs must be a list of strings")
    store = Store(language_id=str(data["language_id"]), groups=tuple(groups), file_globs=tuple(globs))
    errors = [d for d in validate_store(store) if d.severity == "error"]
    if errors:
        raise ValidationError("; ".join(str(d) for d in errors))
    return store


def store_to_dict(store: Store) -> dict:
    groups = []
    for g in store.groups:
        gd = {
            "adt_name": g.adt_name,
            "rewrite_declarations": g.rewrite_declarations,
            "capacity_domain": list(g.capacity_domain),
            "impls": [
                {
                    "name": i.name,
                    "type_token": i.type_token,
                    "ctor_token": i.ctor_token,
                    "capacity_arg": i.capacity_arg,
                }
                for i in g.impls
            ],
        }
        if g.supertype_token is not None:
            gd["supertype_token"] = g.supertype_token
        groups.append(gd)
    return {"language_id": store.language_id, "file_globs": list(store.file_globs), "groups": groups}


def load_store(path) -> Store:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return store_from_dict(data)


def emit_store(store: Store, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(store_to_dict(store), indent=2) + "\n", encoding="utf-8")
    return path


def _impl(token, capacity_arg, ctor=None):
    return ImplSpec(name=token, type_token=token, ctor_token=ctor or token, capacity_arg=capacity_arg)


def _java_collections() -> Store:
    # capacity_arg marks JDK classes with an (int initialCapacity) constructor.
    # Supertype rewriting is opt-in: a store file sets supertype_token and
    # rewrite_declarations together for the groups that want it.
    groups = (
        AdtGroup("List", (_impl("ArrayList", True), _impl("LinkedList", False))),
        AdtGroup("Map", (_impl("HashMap", True), _impl("LinkedHashMap", True))),
        AdtGroup("Set", (_impl("HashSet", True), _impl("LinkedHashSet", True))),
        AdtGroup("Concurrent List", (_impl("Vector", True), _impl("CopyOnWriteArrayList", False))),
        AdtGroup(
            "Concurrent Deque",
            (_impl("ConcurrentLinkedDeque", False), _impl("LinkedBlockingDeque", True)),
        ),
        AdtGroup(
            "Thread Safe Queue",
            (
                _impl("ArrayBlockingQueue", True),
                _impl("SynchronousQueue", False),
                _impl("LinkedBlockingQueue", True),
                _impl("DelayQueue", False),
                _impl("ConcurrentLinkedQueue", False),
                _impl("LinkedTransferQueue", False),
            ),
        ),
    )
    return Store("java-collections", groups, ("**/*.java",))


def _generic_demo() -> Store:
    groups = (AdtGroup("Buffer", (_impl("ArrayBuffer", True), _impl("LinkedBuffer", True))),)
    return Store("generic-demo", groups, ("**/*.py",))


BUILTIN_STORES = {
    "java-collections": _java_collections,
    "generic-demo": _generic_demo,
}


def builtin_store(language_id: str) -> Store:
    try:
        factory = BUILTIN_STORES[language_id]
    except KeyError:
        raise UnknownStoreId(f"no builtin store {language_id!r}; known: {sorted(BUILTIN_STORES)}") from None
    return factory()


def resolve_store(spec) -> Store:
    """Accept a builtin id, a path to a store file, or a Store."""
    if isinstance(spec, Store):
        return spec
    if str(spec) in BUILTIN_STORES:
        return builtin_store(str(spec))
    return load_store(spec)
