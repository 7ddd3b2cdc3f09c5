"""Goal Structuring Notation cases in a line-oriented text format.

Each non-blank, non-comment line declares one node::

    GOAL G.1 "Statement text" supports G
    EVIDENCE E_G.1.1 "Oracle equivalence suite" supports G.1 key=oracle.equivalence

``supports`` takes a comma-separated list of parent labels. Evidence may
carry ``key=<name>`` naming an entry in a structured results document.
Inside the quoted statement, ``\\"`` and ``\\\\`` are escapes.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple


class Kind(str, enum.Enum):
    GOAL = "goal"
    STRATEGY = "strategy"
    CONTEXT = "context"
    JUSTIFICATION = "justification"
    ASSUMPTION = "assumption"
    EVIDENCE = "evidence"


class GsnError(Exception):
    pass


class GsnSyntaxError(GsnError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class DuplicateLabel(GsnError):
    pass


class DanglingReference(GsnError):
    pass


@dataclass(frozen=True)
class GsnNode:
    label: str
    kind: Kind
    statement: str
    parent_refs: Tuple[str, ...] = ()
    key: Optional[str] = None


@dataclass(frozen=True)
class GsnCase:
    nodes: Tuple[GsnNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "_by_label", {n.label: n for n in self.nodes})

    def node(self, label: str) -> GsnNode:
        return self._by_label[label]

    def __contains__(self, label):
        return label in self._by_label

    @property
    def edges(self) -> Tuple[Tuple[str, str], ...]:
        """``(child, parent)`` pairs."""
        return tuple((n.label, p) for n in self.nodes for p in n.parent_refs)

    def children(self, label: str) -> List[GsnNode]:
        return [n for n in self.nodes if label in n.parent_refs]


_LINE = re.compile(
    r'^(?P<kind>[A-Z]+)\s+(?P<label>[^\s"]+)\s+"(?P<stmt>(?:[^"\\]|\\.)*)"(?P<rest>.*)$'
)
_LABEL = re.compile(r"^[A-Za-z][A-Za-z0-9_.\-]*$")


def _unescape(s: str) -> str:
    return re.sub(r"\\(.)", r"\1", s)


def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def parse_case(text: str) -> GsnCase:
    nodes: List[GsnNode] = []
    seen: Dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _LINE.match(line)
        if not m:
            raise GsnSyntaxError(lineno, 'expected KIND LABEL "statement" [supports A,B] [key=name]')
        try:
            kind = Kind(m["kind"].lower())
        except ValueError:
            raise GsnSyntaxError(lineno, f"unknown node kind {m['kind']!r}") from None
        label = m["label"]
        if not _LABEL.match(label):
            raise GsnSyntaxError(lineno, f"malformed label {label!r}")

        parents: Tuple[str, ...] = ()
        key = None
        tokens = m["rest"].split()
        pos = 0
        while pos < len(tokens):
            tok = tokens[pos]
            if tok == "supports":
                if pos + 1 >= len(tokens) or parents:
                    raise GsnSyntaxError(lineno, "'supports' needs exactly one label list")
                parents = tuple(p for p in tokens[pos + 1].split(",") if p)
                if not parents or not all(_LABEL.match(p) for p in parents):
                    raise GsnSyntaxError(lineno, f"bad label list {tokens[pos + 1]!r}")
                pos += 2
            elif tok.startswith("key="):
                if kind is not Kind.EVIDENCE:
                    raise GsnSyntaxError(lineno, "only EVIDENCE nodes may carry key=")
                key = tok[4:]
                if not key:
                    raise GsnSyntaxError(lineno, "empty key")
                pos += 1
            else:
                raise GsnSyntaxError(lineno, f"unexpected token {tok!r}")

        if label in seen:
            raise DuplicateLabel(f"label {label!r} on line {lineno} already defined on line {seen[label]}")
        seen[label] = lineno
        nodes.append(GsnNode(label, kind, _unescape(m["stmt"]), parents, key))

    for n in nodes:
        for p in n.parent_refs:
            if p not in seen:
                raise DanglingReference(f"{n.label} supports unknown label {p!r}")
    return GsnCase(tuple(nodes))


def render_case(case: GsnCase) -> str:
    out = []
    for n in case.nodes:
        line = f'{n.kind.value.upper()} {n.label} "{_escape(n.statement)}"'
        if n.parent_refs:
            line += " supports " + ",".join(n.parent_refs)
        if n.key:
            line += f" key={n.key}"
        out.append(line)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# validation

class Category(str, enum.Enum):
    UNDEVELOPED_GOAL = "undeveloped_goal"
    LABEL_VIOLATION = "label_violation"
    CYCLE = "cycle"
    ORPHAN_EVIDENCE = "orphan_evidence"
    NAMING = "naming"  # advisory only


@dataclass(frozen=True)
class Issue:
    category: Category
    labels: Tuple[str, ...]
    message: str
    severity: str = "error"

    def __str__(self):
        return f"{self.severity}: {self.message}"


_GOAL_ROOT = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")
_GOAL_CHILD_SUFFIX = re.compile(r"^\.\d+$")
_EVIDENCE_LABEL = re.compile(r"^E_[A-Za-z][A-Za-z0-9_]*(\.[A-Za-z0-9_]+)*\.\d+$")
_PREFIX = {Kind.CONTEXT: "C_", Kind.STRATEGY: "S_", Kind.JUSTIFICATION: "J_"}


def _goal_parents(case: GsnCase, node: GsnNode, _seen=None) -> List[str]:
    """Nearest goal ancestors, looking through strategies."""
    _seen = set() if _seen is None else _seen
    out = []
    for p in node.parent_refs:
        pn = case.node(p)
        if pn.kind is Kind.GOAL:
            out.append(p)
        elif pn.kind is Kind.STRATEGY and p not in _seen:
            _seen.add(p)
            out.extend(_goal_parents(case, pn, _seen))
    return out


def _find_cycles(case: GsnCase) -> List[Tuple[str, ...]]:
    """Each elementary cycle reported once, rotated to start at its smallest label."""
    graph = {n.label: list(n.parent_refs) for n in case.nodes}
    color: Dict[str, int] = {}
    stack: List[str] = []
    cycles = set()

    def visit(u):
        color[u] = 1
        stack.append(u)
        for v in graph[u]:
            if color.get(v, 0) == 0:
                visit(v)
            elif color[v] == 1:
                cyc = stack[stack.index(v):]
                r = cyc.index(min(cyc))
                cycles.add(tuple(cyc[r:] + cyc[:r]))
        stack.pop()
        color[u] = 2

    for label in sorted(graph):
        if color.get(label, 0) == 0:
            visit(label)
    return sorted(cycles)


def _naming_issue(case: GsnCase, n: GsnNode) -> Optional[str]:
    if n.kind is Kind.EVIDENCE:
        if not _EVIDENCE_LABEL.match(n.label):
            return f"evidence label {n.label} does not follow E_<name>.<n>"
        return None
    prefix = _PREFIX.get(n.kind)
    if prefix is None:
        return None
    if not n.label.startswith(prefix):
        return f"{n.kind.value} label {n.label} should start with {prefix}"
    goals = _goal_parents(case, n) or [p for p in n.parent_refs]
    rest = n.label[len(prefix):]
    for g in goals:
        if rest == g or (rest.startswith(g) and re.fullmatch(r"[a-z]", rest[len(g):])):
            return None
    if goals:
        return f"{n.label} should be {prefix}<goal><letter> for one of {', '.join(goals)}"
    return None


def validate(case: GsnCase) -> List[Issue]:
    """Structural and labelling issues, in a deterministic order.

    Errors: undeveloped goals, child-goal labels that do not extend their
    parent, support cycles and evidence that supports nothing. Deviations
    from the context/strategy/justification/evidence naming convention are
    reported with severity ``warning``.
    """
    issues: List[Issue] = []

    for n in case.nodes:
        if n.kind is not Kind.GOAL:
            continue
        support = _supporting(case, n.label)
        if not any(c.kind in (Kind.GOAL, Kind.EVIDENCE) for c in support):
            issues.append(Issue(Category.UNDEVELOPED_GOAL, (n.label,), f"undeveloped goal {n.label}"))

    for n in case.nodes:
        if n.kind is not Kind.GOAL:
            continue
        for parent in _goal_parents(case, n):
            if _GOAL_ROOT.match(n.label):
                continue  # new sub-structure root
            suffix = n.label[len(parent):] if n.label.startswith(parent) else None
            if suffix is None or not _GOAL_CHILD_SUFFIX.match(suffix):
                issues.append(Issue(Category.LABEL_VIOLATION, (n.label, parent),
                                    f"label {n.label} does not extend {parent}"))

    for cyc in _find_cycles(case):
        issues.append(Issue(Category.CYCLE, cyc, "cycle: " + " -> ".join(cyc + (cyc[0],))))

    for n in case.nodes:
        if n.kind is Kind.EVIDENCE and not n.parent_refs:
            issues.append(Issue(Category.ORPHAN_EVIDENCE, (n.label,), f"orphan evidence {n.label}"))

    for n in case.nodes:
        msg = _naming_issue(case, n)
        if msg:
            issues.append(Issue(Category.NAMING, (n.label,), msg, severity="warning"))
    return issues


def _supporting(case: GsnCase, label: str) -> List[GsnNode]:
    """Children of ``label``, with strategies replaced by their own children."""
    out, todo, seen = [], list(case.children(label)), set()
    while todo:
        c = todo.pop(0)
        if c.label in seen:
            continue
        seen.add(c.label)
        if c.kind is Kind.STRATEGY:
            todo.extend(case.children(c.label))
        else:
            out.append(c)
    return out


def errors(issues: Iterable[Issue]) -> List[Issue]:
    return [i for i in issues if i.severity == "error"]


# ---------------------------------------------------------------------------
# evidence linking

class EvidenceStatus(str, enum.Enum):
    SATISFIED = "satisfied"
    VIOLATED = "violated"
    MISSING = "missing"


_PASSING = {"pass", "passed", "ok", "true", "satisfied", "acknowledged", "proceed"}
_FAILING = {"fail", "failed", "error", "false", "violated", "unacknowledged", "refuse"}


def collect_results(*documents: Mapping) -> Dict[str, str]:
    """Flatten results documents into ``{key: status}``.

    Understands assumption reports (``{"checks": [{"id", "status"}, ...]}``),
    ``{"results": {key: status | {"status": ...}}}`` and plain
    ``{key: status}`` mappings. Later documents override earlier ones.
    """
    flat: Dict[str, str] = {}
    for doc in documents:
        if "checks" in doc and isinstance(doc["checks"], list):
            for c in doc["checks"]:
                flat[c["id"]] = str(c["status"])
        if "assumptions" in doc and isinstance(doc["assumptions"], Mapping):
            flat.update(collect_results(doc["assumptions"]))
        entries = doc.get("results", doc)
        if isinstance(entries, Mapping):
            for k, v in entries.items():
                if isinstance(v, Mapping) and "status" in v:
                    flat[k] = str(v["status"])
                elif isinstance(v, (str, bool)):
                    flat[k] = str(v)
    return flat


def _classify(status: Optional[str]) -> EvidenceStatus:
    if status is None:
        return EvidenceStatus.MISSING
    s = status.strip().lower()
    if s in _PASSING:
        return EvidenceStatus.SATISFIED
    if s in _FAILING:
        return EvidenceStatus.VIOLATED
    return EvidenceStatus.MISSING


@dataclass(frozen=True)
class AnnotatedCase:
    case: GsnCase
    annotations: Dict[str, EvidenceStatus] = field(default_factory=dict)

    @property
    def summary(self) -> Dict[str, int]:
        counts = {s.value: 0 for s in EvidenceStatus}
        for s in self.annotations.values():
            counts[s.value] += 1
        return counts

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "label": n.label,
                    "kind": n.kind.value,
                    "statement": n.statement,
                    "supports": list(n.parent_refs),
                    **({"key": n.key} if n.key else {}),
                    **({"evidence_status": self.annotations[n.label].value}
                       if n.label in self.annotations else {}),
                }
                for n in self.case.nodes
            ],
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_dot(self) -> str:
        shapes = {
            Kind.GOAL: "box", Kind.STRATEGY: "parallelogram", Kind.CONTEXT: "box",
            Kind.JUSTIFICATION: "ellipse", Kind.ASSUMPTION: "ellipse", Kind.EVIDENCE: "circle",
        }
        colours = {EvidenceStatus.SATISFIED: "palegreen", EvidenceStatus.VIOLATED: "salmon",
                   EvidenceStatus.MISSING: "lightgrey"}
        lines = ["digraph gsn {", "  rankdir=BT;"]
        for n in self.case.nodes:
            attrs = [f'shape={shapes[n.kind]}', f'label="{n.label}\\n{_escape(n.statement)}"']
            if n.kind is Kind.CONTEXT:
                attrs.append('style="rounded"')
            if n.label in self.annotations:
                attrs += ['style=filled', f'fillcolor={colours[self.annotations[n.label]]}']
            lines.append(f'  "{n.label}" [{", ".join(attrs)}];')
        for child, parent in self.case.edges:
            style = "" if self.case.node(child).kind in (Kind.GOAL, Kind.STRATEGY, Kind.EVIDENCE) \
                else " [arrowhead=empty]"
            lines.append(f'  "{child}" -> "{parent}"{style};')
        lines.append("}")
        return "\n".join(lines) + "\n"


def link_evidence(case: GsnCase, results: Mapping) -> AnnotatedCase:
    """Annotate every keyed evidence node from ``results``.

    ``results`` is either a flat ``{key: status}`` map or any document
    accepted by :func:`collect_results`. Unknown keys are ``missing``.
    """
    flat = collect_results(results)
    ann = {
        n.label: _classify(flat.get(n.key))
        for n in case.nodes
        if n.kind is Kind.EVIDENCE and n.key
    }
    return AnnotatedCase(case, ann)
