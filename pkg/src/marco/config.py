"""Declarative run configuration: one JSON file wires graph, agents,
backends, knowledge bases, tool bindings, seeds, and limits together.

Loading validates everything it can reach and reports every problem at
once, not just the first. Relative paths resolve against the config file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .agents import AgentConfig, RETRIEVE_TOOL, WRITE_TOOL
from .eda.toolpack import HANDLER_CATALOG
from .errors import ConfigError
from .gateway import canonical_json
from .graph import TaskGraph, validate_graph

BACKEND_KINDS = ("mock", "http", "replay")
BUILTIN_TOOLS = (WRITE_TOOL, RETRIEVE_TOOL)


@dataclass(frozen=True)
class BackendDef:
    name: str
    kind: str
    script: Path | None = None
    cache_dir: Path | None = None
    record: bool = False
    inner: str | None = None
    base_url: str | None = None
    timeout: float = 60.0
    strict_tool_args: bool = False


@dataclass(frozen=True)
class RunConfig:
    path: Path
    base_dir: Path
    raw: Mapping[str, Any]
    graph: TaskGraph
    agents: Mapping[str, AgentConfig]
    backends: Mapping[str, BackendDef]
    knowledge_bases: Mapping[str, Path]
    tool_bindings: Mapping[str, str]
    seeds: Mapping[str, Any]
    max_node_executions: int

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode("utf-8")).hexdigest()


def _load_backend(name: str, payload: Mapping, base_dir: Path, problems: list[str]) -> BackendDef | None:
    kind = payload.get("kind")
    if kind not in BACKEND_KINDS:
        problems.append(f"backends.{name}: kind must be one of {BACKEND_KINDS}, got {kind!r}")
        return None
    script = cache_dir = None
    if kind == "mock":
        raw_script = payload.get("script")
        if not raw_script:
            problems.append(f"backends.{name}: mock backend needs a 'script' path")
            return None
        script = (base_dir / raw_script).resolve()
        if not script.is_file():
            problems.append(f"backends.{name}: script file {str(script)!r} does not exist")
    elif kind == "replay":
        raw_dir = payload.get("cache_dir")
        if not raw_dir:
            problems.append(f"backends.{name}: replay backend needs a 'cache_dir'")
            return None
        cache_dir = (base_dir / raw_dir).resolve()
    return BackendDef(
        name=name,
        kind=kind,
        script=script,
        cache_dir=cache_dir,
        record=bool(payload.get("record", False)),
        inner=payload.get("inner"),
        base_url=payload.get("base_url"),
        timeout=float(payload.get("timeout", 60.0)),
        strict_tool_args=bool(payload.get("strict_tool_args", False)),
    )


def load_config(path: str | Path) -> RunConfig:
    """Parse and fully validate a run configuration file."""
    path = Path(path)
    problems: list[str] = []
    if not path.is_file():
        raise ConfigError([f"{path}: no such config file"])
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: config root must be a JSON object"])
    base_dir = path.resolve().parent

    graph = TaskGraph.from_dict(raw.get("graph", {}))
    report = validate_graph(graph)
    for violation in report.violations:
        problems.append(f"graph: {violation.code} on {violation.subject}: {violation.detail}")

    agents: dict[str, AgentConfig] = {}
    for name, payload in (raw.get("agents") or {}).items():
        try:
            agents[name] = AgentConfig.from_dict({"name": name, **payload})
        except (KeyError, ValueError, TypeError) as exc:
            problems.append(f"agents.{name}: {exc}")

    backends: dict[str, BackendDef] = {}
    for name, payload in (raw.get("backends") or {}).items():
        backend = _load_backend(name, payload, base_dir, problems)
        if backend is not None:
            backends[name] = backend
    for name, backend in backends.items():
        if backend.kind == "replay" and backend.inner is not None and backend.inner not in backends:
            problems.append(f"backends.{name}: inner backend {backend.inner!r} is not defined")

    knowledge_bases: dict[str, Path] = {}
    for name, raw_dir in (raw.get("knowledge_bases") or {}).items():
        kb_dir = (base_dir / raw_dir).resolve()
        if not kb_dir.is_dir():
            problems.append(f"knowledge_bases.{name}: directory {str(kb_dir)!r} does not exist")
        knowledge_bases[name] = kb_dir

    tool_bindings: dict[str, str] = dict(raw.get("tool_bindings") or {})
    for tool_name, handler_ref in tool_bindings.items():
        if handler_ref not in HANDLER_CATALOG:
            problems.append(f"tool_bindings.{tool_name}: unknown handler ref {handler_ref!r}")

    known_tools = set(tool_bindings) | set(BUILTIN_TOOLS)
    for node in graph.nodes:
        if node.agent_ref not in agents:
            problems.append(f"graph node {node.id}: unknown agent {node.agent_ref!r}")
    for name, agent in agents.items():
        for role in agent.roles:
            if role.model_ref not in backends:
                problems.append(f"agents.{name}.{role.name}: model_ref {role.model_ref!r} names no backend")
            for tool_name in role.tool_names:
                if tool_name not in known_tools:
                    problems.append(f"agents.{name}.{role.name}: unknown tool {tool_name!r}")
            for kb_ref in role.knowledge_base_refs:
                if kb_ref not in knowledge_bases:
                    problems.append(f"agents.{name}.{role.name}: unknown knowledge base {kb_ref!r}")

    limits = raw.get("limits") or {}
    max_exec = limits.get("max_node_executions")
    if not isinstance(max_exec, int) or max_exec < 1:
        problems.append("limits.max_node_executions: required positive integer")
        max_exec = 0
    elif max_exec < len(graph.nodes):
        problems.append(
            f"limits.max_node_executions: {max_exec} is below the initial node count {len(graph.nodes)}"
        )

    seeds = dict(raw.get("seeds") or {})

    if problems:
        raise ConfigError(problems)
    return RunConfig(
        path=path,
        base_dir=base_dir,
        raw=raw,
        graph=graph,
        agents=agents,
        backends=backends,
        knowledge_bases=knowledge_bases,
        tool_bindings=tool_bindings,
        seeds=seeds,
        max_node_executions=max_exec,
    )
