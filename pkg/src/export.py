"""Render graphs and reports as DOT, JSON documents and rich tables.

All output is derived from canonical labels and sorted collections so the same
input always gives byte-identical text.
"""

# Global imports
import json
from typing import Any

# 3rd party imports
from rich.table import Table

# local imports
import param
from analysis_parallel import OptionReport, ParallelPlan, SccPartition
from emulator_ideal import CriticalPathReport, EmulationReport
from pdg_builder import Pdg
from pspdg_core import (
    WIDENED,
    DataSelector,
    Directed,
    HierarchicalNode,
    InstructionRef,
    PsPdg,
    StructuredDiff,
    Synthetic,
    canonicalize,
)


def dump_json(document: dict[str, Any]) -> str:
    """Serialize with the schema version, sorted keys and a trailing newline.

    >>> dump_json({"b": 1, "a": [2]})
    '{\\n  "a": [\\n    2\\n  ],\\n  "b": 1,\\n  "schema": 1\\n}\\n'
    """

    return json.dumps({**document, "schema": param.json_schema}, indent=2, sort_keys=True) + "\n"


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def pdg_lines(pdg: Pdg) -> list[str]:
    """Text form of a PDG: nodes by position, then sorted edges."""
    lines = [f"node {n} @{pdg.positions.get(n, 0)}" for n in sorted(pdg.nodes, key=lambda n: (pdg.positions.get(n, 0), n))]
    for edge in pdg.sorted_edges():
        carried = edge.carried_by or "-"
        lines.append(f"edge {edge.src} -> {edge.dst} {edge.kind} var={edge.var or '-'} carried={carried}")
    return lines


def pdg_to_dot(pdg: Pdg) -> str:
    out = ["digraph pdg {", "  node [shape=ellipse];"]
    for node in sorted(pdg.nodes, key=lambda n: (pdg.positions.get(n, 0), n)):
        out.append(f"  {_quote(node)} [label={_quote(f'{node} @{pdg.positions.get(node, 0)}')}];")
    for edge in pdg.sorted_edges():
        label = f"{edge.kind} {edge.var}" + (f" [{edge.carried_by}]" if edge.carried_by else "")
        style = ", style=dashed" if edge.kind == "CTRL" else ""
        out.append(f"  {_quote(edge.src)} -> {_quote(edge.dst)} [label={_quote(label.strip())}{style}];")
    out.append("}")
    return "\n".join(out) + "\n"


def pdg_to_json(pdg: Pdg) -> dict[str, Any]:
    return {
        "graph": "pdg",
        "nodes": [{"id": n, "position": pdg.positions.get(n, 0)} for n in sorted(pdg.nodes, key=lambda n: (pdg.positions.get(n, 0), n))],
        "edges": [
            {"src": e.src, "dst": e.dst, "kind": str(e.kind), "var": e.var, "carried_by": e.carried_by}
            for e in pdg.sorted_edges()
        ],
        "loops": {
            loop.id: {"kind": str(loop.kind), "parent": loop.parent, "trip_known": loop.trip_known}
            for loop in sorted(pdg.loops.values(), key=lambda l: l.position)
        },
    }


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
class _DotWriter:
    """Hierarchical nodes become clusters with a point node edges attach to."""

    def __init__(self, g: PsPdg) -> None:
        self.g = g
        self.labels = canonicalize(g).labels
        self.out: list[str] = []

    def ctx(self, name: str | None) -> str:
        if name is None:
            return "-"
        if name == WIDENED:
            return WIDENED
        bearer = self.g.context_bearers.get(name)
        return self.labels[bearer] if bearer else name

    def _traits(self, node: str) -> str:
        traits = sorted(self.g.node_map[node].traits, key=lambda t: (t.kind, t.context))
        return "".join(f"\\n{t.kind}@{self.ctx(t.context)}" for t in traits)

    def node(self, node: str, indent: str) -> None:
        payload = self.g.node_map[node].payload
        name = self.labels[node]
        if isinstance(payload, HierarchicalNode):
            label = name + (" ctx" if payload.context else "") + self._traits(node)
            self.out.append(f"{indent}subgraph cluster_{name} {{")
            self.out.append(f"{indent}  label={_quote(label)};")
            self.out.append(f"{indent}  {name} [shape=point];")
            for child in payload.children:
                self.node(child, indent + "  ")
            self.out.append(f"{indent}}}")
        elif isinstance(payload, InstructionRef):
            label = f"{name} {payload.opcode} @{payload.position}" + self._traits(node)
            self.out.append(f"{indent}{name} [label={_quote(label)}];")
        elif isinstance(payload, Synthetic):
            label = f"{name} {payload.kind}" + self._traits(node)
            self.out.append(f"{indent}{name} [shape=diamond, label={_quote(label)}];")

    def _selector(self, selector: DataSelector | None) -> str:
        return f"{selector.kind}@{self.ctx(selector.context)}" if selector else ""

    def edges(self) -> None:
        lines = []
        for edge in self.g.edges:
            if isinstance(edge, Directed):
                parts = [str(edge.dep), ",".join(sorted(edge.variables))]
                if edge.context:
                    parts.append(f"ctx={self.ctx(edge.context)}")
                for role, selector in (("p", edge.producer_selector), ("c", edge.consumer_selector)):
                    if selector:
                        parts.append(f"{role}:{self._selector(selector)}")
                label = " ".join(p for p in parts if p)
                lines.append(f"  {self.labels[edge.producer]} -> {self.labels[edge.consumer]} [label={_quote(label)}];")
            else:
                a, b = sorted((self.labels[edge.a], self.labels[edge.b]), key=lambda n: int(n[1:]))
                lines.append(f"  {a} -> {b} [dir=none, label={_quote(f'ctx={self.ctx(edge.context)}')}];")
        self.out.extend(sorted(lines))

    def variables(self) -> None:
        for number, variable in enumerate(sorted(self.g.variables, key=lambda v: (v.name, v.context, v.kind))):
            name = f"V{number}"
            label = f"{variable.name} {variable.kind}@{self.ctx(variable.context)}"
            if variable.reducer:
                label += f" merge={self.labels.get(variable.reducer, variable.reducer)}"
            self.out.append(f"  {name} [shape=box, label={_quote(label)}];")
            for access in (a for a in self.g.accesses if a.variable == variable.name):
                for use in sorted(access.uses, key=lambda n: int(self.labels[n][1:])):
                    self.out.append(f"  {name} -> {self.labels[use]} [style=dashed, label=\"use\"];")
                for define in sorted(access.defs, key=lambda n: int(self.labels[n][1:])):
                    self.out.append(f"  {self.labels[define]} -> {name} [style=dashed, label=\"def\"];")

    def render(self) -> str:
        self.out = ["digraph pspdg {", "  compound=true;", "  node [shape=ellipse];"]
        self.node(self.g.root, "  ")
        self.edges()
        self.variables()
        self.out.append("}")
        return "\n".join(self.out) + "\n"


def ps_to_dot(g: PsPdg) -> str:
    """DOT text of a PS-PDG; cluster and node names are canonical labels.

    Traits are printed under the node they belong to, selectors on edge labels,
    undirected edges with ``dir=none`` and variables as boxes with dashed use and def edges.
    """

    return _DotWriter(g).render()


def ps_to_json(g: PsPdg) -> dict[str, Any]:
    return {"graph": "pspdg", "canonical": list(canonicalize(g).lines)}


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def plan_json(plan: ParallelPlan) -> dict[str, Any]:
    return {
        "loop": plan.loop,
        "technique": str(plan.technique),
        "cores": plan.cores,
        "chunk": plan.chunk,
        "segments": plan.segments,
        "stages": plan.stages,
    }


def sccs_json(partitions: list[SccPartition], labels: dict[str, str] | None = None) -> dict[str, Any]:
    def name(node: str) -> str:
        return labels.get(node, node) if labels else node

    return {
        "loops": [
            {
                "loop": part.loop,
                "sccs": [
                    {"nodes": sorted(name(n) for n in scc), "kind": str(kind)}
                    for scc, kind in zip(part.sccs, part.kinds)
                ],
            }
            for part in partitions
        ]
    }


def options_json(report: OptionReport) -> dict[str, Any]:
    rows = [*report.rows, report.total]
    return {
        "options": [
            {"loop": r.loop, "pdg": r.pdg, "jk": r.jk, "ps_pdg": r.ps, "source": r.source, "note": r.note}
            for r in rows
        ]
    }


def options_table(report: OptionReport) -> Table:
    table = Table(title="Parallelization options")
    for column in ("loop", "PDG", "J&K", "PS-PDG", "source", "note"):
        table.add_column(column, justify="left" if column in ("loop", "note") else "right")
    for r in report.rows:
        table.add_row(r.loop, str(r.pdg), str(r.jk), str(r.ps), str(r.source), r.note)
    total = report.total
    table.add_row("total", str(total.pdg), str(total.jk), str(total.ps), str(total.source), "", style="bold")
    return table


def path_json(report: CriticalPathReport) -> dict[str, Any]:
    return {
        "plans": list(report.plans),
        "critical_path_length": report.critical_path_length,
        "total_instructions": report.total_instructions,
        "speedup": report.speedup,
    }


def emulation_json(report: EmulationReport) -> dict[str, Any]:
    return {
        "baseline": report.baseline,
        "truncated": report.truncated,
        "critical_paths": {name: path_json(row) for name, row in report.rows()},
    }


def emulation_table(report: EmulationReport) -> Table:
    table = Table(title=f"Critical path, speedup over {report.baseline}")
    for column in ("abstraction", "path", "instructions", "speedup", "plans"):
        table.add_column(column, justify="right" if column in ("path", "instructions", "speedup") else "left")
    for name, row in report.rows():
        table.add_row(name, str(row.critical_path_length), str(row.total_instructions), f"{row.speedup:.2f}", ", ".join(row.plans))
    if report.truncated:
        table.caption = "trace truncated at the cap"
    return table


def diff_json(d: StructuredDiff) -> dict[str, Any]:
    return {
        "equal": d.is_empty,
        "entries": [
            {"category": e.category, "change": e.change, "subject": e.subject, "before": e.before, "after": e.after}
            for e in d.entries
        ],
    }
