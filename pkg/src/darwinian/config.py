"""Project configuration: one JSON file per optimised project.

Relative paths inside the file are resolved against the file's directory.
Example::

    {
      "source_root": "project",
      "store": "generic-demo",
      "build_cmd": "python3 build_check.py",
      "test_cmd": "python3 run_tests.py",
      "search": {"max_evaluations": 200},
      "eval": {"runs_search": 5},
      "ranking": "all",
      "out_dir": "runs/demo"
    }
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError, DarwinError
from .evaluate import EvalConfig
from .extract import SiteRanking
from .search import SearchParams
from .store import BUILTIN_STORES, Store, resolve_store

_KEYS = {"source_root", "store", "build_cmd", "test_cmd", "file_globs", "search", "eval", "ranking", "max_sites", "out_dir"}
_REQUIRED = {"source_root", "store", "test_cmd"}
_SEARCH_KEYS = {f.name for f in dataclasses.fields(SearchParams)}
_EVAL_KEYS = {f.name for f in dataclasses.fields(EvalConfig)} - {"build_cmd", "test_cmd"}
_EVAL_PATHS = {"workdir_root", "measure_lock"}


@dataclass
class ProjectConfig:
    source_root: Path
    store: str
    test_cmd: str
    build_cmd: str = ""
    file_globs: Optional[list[str]] = None
    search: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    ranking: str = "all"
    max_sites: Optional[int] = None
    out_dir: Path = Path("darwinian-run")

    def __post_init__(self):
        self.source_root = Path(self.source_root)
        self.out_dir = Path(self.out_dir)
        self.validate()

    def validate(self) -> None:
        if not self.source_root.is_dir():
            raise ConfigError(f"source_root {self.source_root} is not a directory")
        if not self.test_cmd or not self.test_cmd.strip():
            raise ConfigError("test_cmd must be non-empty")
        if self.build_cmd is None or (self.build_cmd and not self.build_cmd.strip()):
            raise ConfigError("build_cmd must be non-empty when given")
        if self.store not in BUILTIN_STORES and not Path(self.store).is_file():
            raise ConfigError(f"store {self.store!r} is neither a builtin id nor an existing file")
        unknown = set(self.search) - _SEARCH_KEYS
        if unknown:
            raise ConfigError(f"unknown search keys {sorted(unknown)}")
        unknown = set(self.eval) - _EVAL_KEYS
        if unknown:
            raise ConfigError(f"unknown eval keys {sorted(unknown)}")
        # build the target types once so override errors surface here
        self.search_params()
        self.eval_config()
        self.site_ranking()

    def search_params(self) -> SearchParams:
        try:
            return SearchParams(**self.search)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid search settings: {exc}") from exc

    def eval_config(self) -> EvalConfig:
        opts = dict(self.eval)
        env_root = os.environ.get("DARWIN_WORKDIR")
        if env_root:
            opts["workdir_root"] = env_root
        for key in _EVAL_PATHS:
            if opts.get(key) is not None:
                opts[key] = Path(opts[key])
        try:
            return EvalConfig(build_cmd=self.build_cmd, test_cmd=self.test_cmd, **opts)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid eval settings: {exc}") from exc

    def site_ranking(self) -> SiteRanking:
        if self.max_sites is not None and self.max_sites < 1:
            raise ConfigError("max_sites must be >= 1")
        try:
            return SiteRanking.parse(self.ranking, self.max_sites)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def load_store(self) -> Store:
        try:
            return resolve_store(self.store)
        except DarwinError:
            raise
        except OSError as exc:
            raise ConfigError(f"cannot read store {self.store}: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "source_root": str(self.source_root),
            "store": self.store,
            "build_cmd": self.build_cmd,
            "test_cmd": self.test_cmd,
            "file_globs": self.file_globs,
            "search": dict(self.search),
            "eval": {k: (str(v) if isinstance(v, Path) else v) for k, v in self.eval.items()},
            "ranking": self.ranking,
            "max_sites": self.max_sites,
            "out_dir": str(self.out_dir),
        }

    @classmethod
    def from_dict(cls, data, base_dir=None) -> "ProjectConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - _KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        missing = _REQUIRED - set(data)
        if missing:
            raise ConfigError(f"missing config keys {sorted(missing)}")
        base = Path(base_dir) if base_dir else Path.cwd()

        def rel(p):
            p = Path(p)
            return p if p.is_absolute() else (base / p).resolve()

        store = str(data["store"])
        if store not in BUILTIN_STORES:
            store = str(rel(store))
        ev = dict(data.get("eval") or {})
        for key in _EVAL_PATHS:
            if ev.get(key) is not None:
                ev[key] = str(rel(ev[key]))
        return cls(
            source_root=rel(data["source_root"]),
            store=store,
            build_cmd=data.get("build_cmd") or "",
            test_cmd=data["test_cmd"],
            file_globs=data.get("file_globs"),
            search=dict(data.get("search") or {}),
            eval=ev,
            ranking=data.get("ranking", "all"),
            max_sites=data.get("max_sites"),
            out_dir=rel(data.get("out_dir", "darwinian-run")),
        )

    def with_overrides(self, *, store=None, search=None, eval=None, ranking=None, max_sites=None, out_dir=None):
        """Copy with flag overrides applied; ``None`` leaves a field alone."""
        return ProjectConfig(
            source_root=self.source_root,
            store=store if store is not None else self.store,
            build_cmd=self.build_cmd,
            test_cmd=self.test_cmd,
            file_globs=self.file_globs,
            search={**self.search, **(search or {})},
            eval={**self.eval, **(eval or {})},
            ranking=ranking if ranking is not None else self.ranking,
            max_sites=max_sites if max_sites is not None else self.max_sites,
            out_dir=out_dir if out_dir is not None else self.out_dir,
        )


def load_config(path) -> ProjectConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ProjectConfig.from_dict(data, path.resolve().parent)
