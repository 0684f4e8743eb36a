"""Configuration ingestion, command orchestration, and report/diagram
export for the workbench."""
from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from . import forests as fo
from . import multiscale as ms
from .formal import FormalSum
from .hopf import counterterm_report
from .integrands import chaos_classes
from .powercount import Certifier, CertificateInput, CumulantHomogeneity
from .rules import CumulantSet, RuleSpec, generate_trees, production
from .scaling import MultiIndex, ScalingSpec, TypeTable
from .trees import DecoratedTree, SubForest

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class WorkbenchConfig:
    scaling: ScalingSpec
    table: TypeTable
    kappa: Fraction
    cum: CumulantSet
    rule: RuleSpec
    caps: dict
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


DEFAULT_CAPS = {
    "max_edges": 11,
    "max_div": 4096,
    "max_coalescence_vertices": 9,
    "scale_range": 64,
    "cutoff": "0",
    "poly_sdeg_bound": 0,
}


def parse_config(document: str) -> WorkbenchConfig:
    """Parse and validate a configuration document, collecting every schema
    violation rather than stopping at the first."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"malformed JSON at byte {exc.pos}: {exc.msg}"])
    problems: list[str] = []

    def need(key, where, obj):
        if key not in obj:
            problems.append(f"missing field {where}.{key}")
            return None
        return obj[key]

    if not isinstance(data, dict):
        raise ConfigError(["top level must be an object"])
    sc_raw = need("scaling", "$", data) or {}
    d = sc_raw.get("d")
    s = sc_raw.get("s")
    if d is None:
        problems.append("missing field scaling.d")
    if s is None:
        problems.append("missing field scaling.s")
    types_raw = need("types", "$", data) or {}
    kern = types_raw.get("kernels")
    noi = types_raw.get("noises")
    if kern is None:
        problems.append("missing field types.kernels")
    if noi is None:
        problems.append("missing field types.noises")
    kappa_raw = data.get("kappa", "1/100")
    cum_raw = data.get("cumulants", {"mode": "gaussian"})
    rule_raw = need("rule", "$", data) or {}
    if "productions" not in rule_raw:
        problems.append("missing field rule.productions")
    if problems:
        raise ConfigError(problems)

    try:
        scaling = ScalingSpec(int(d), tuple(int(x) for x in s))
    except (TypeError, ValueError) as exc:
        problems.append(f"scaling: {exc}")
        raise ConfigError(problems)
    try:
        table = TypeTable(
            scaling,
            kernel_types={k: Fraction(v) for k, v in kern.items()},
            noise_types={k: Fraction(v) for k, v in noi.items()},
        )
    except (ValueError, KeyError) as exc:
        problems.append(f"types: {exc}")
        raise ConfigError(problems)
    try:
        kappa = Fraction(kappa_raw)
        if kappa <= 0:
            problems.append("kappa must be positive")
    except ValueError:
        problems.append(f"kappa: not a rational: {kappa_raw!r}")
        kappa = Fraction(1, 100)
    try:
        cum = CumulantSet(
            table,
            mode=cum_raw.get("mode", "gaussian"),
            explicit=frozenset(
                tuple(sorted(b)) for b in cum_raw.get("blocks", [])
            ),
            max_arity_cap=int(cum_raw.get("max_arity", 8)),
        )
    except ValueError as exc:
        problems.append(f"cumulants: {exc}")
        cum = None

    def parse_entry(entry):
        if isinstance(entry, str):
            return (entry, MultiIndex())
        name, kk = entry
        return (name, MultiIndex({int(i): int(v) for i, v in enumerate(kk)}))

    try:
        prods = {
            t: frozenset(
                production(*(parse_entry(e) for e in p)) for p in ps
            )
            for t, ps in rule_raw["productions"].items()
        }
        rule = RuleSpec(
            table,
            productions=prods,
            standalone_noises=tuple(rule_raw.get("standalone_noises", ())),
        )
    except (ValueError, KeyError) as exc:
        problems.append(f"rule: {exc}")
        rule = None
    caps = dict(DEFAULT_CAPS)
    caps.update(data.get("caps", {}))
    env = os.environ.get("RENORMFOREST_CAPS")
    if env:
        try:
            caps.update(json.loads(env))
        except json.JSONDecodeError:
            problems.append("RENORMFOREST_CAPS is not valid JSON")
    for k, v in caps.items():
        if k in ("cutoff", "poly_sdeg_bound"):
            continue
        if int(v) <= 0:
            problems.append(f"caps.{k} must be positive")
    if problems:
        raise ConfigError(problems)
    return WorkbenchConfig(
        scaling=scaling,
        table=table,
        kappa=kappa,
        cum=cum,
        rule=rule,
        caps=caps,
        output=data.get("output", {}),
        raw=data,
    )


# -- canonical tree strings ------------------------------------------------------


def format_tree(t: DecoratedTree, table: TypeTable) -> str:
    """Deterministic functional notation: noises by name, integration as
    type(subtree), products by '*', labels/decorations in brackets."""

    def fmt_mi(mi: MultiIndex) -> str:
        if mi.is_zero():
            return ""
        return "^(" + ",".join(f"{i}:{v}" for i, v in mi.entries) + ")"

    def fmt(u: int) -> str:
        parts = []
        for e in t.children(u):
            ty = t.edge_type(e)
            if table.is_noise(ty):
                parts.append(ty + fmt_mi(t.edge_dec(e)))
            else:
                parts.append(f"{ty}{fmt_mi(t.edge_dec(e))}({fmt(e[1])})")
        parts.sort()
        label = ""
        if not t.node_dec(u).is_zero():
            label = "X" + fmt_mi(t.node_dec(u))
        body = "*".join(parts) if parts else ""
        if label and body:
            return label + "*" + body
        if label:
            return label
        return body if body else "1"

    return fmt(t.root)


def frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)


# -- the workbench ----------------------------------------------------------------


class Workbench:
    def __init__(self, config: WorkbenchConfig):
        self.config = config
        self._basis: Optional[list[DecoratedTree]] = None

    def basis(self) -> list[DecoratedTree]:
        if self._basis is None:
            self._basis = generate_trees(
                self.config.rule,
                Fraction(self.config.caps.get("cutoff", "0")),
                int(self.config.caps["max_edges"]),
                poly_sdeg_bound=int(self.config.caps.get("poly_sdeg_bound", 0)),
            )
        return self._basis

    def tree_by_id(self, tree_id: str) -> DecoratedTree:
        basis = self.basis()
        if tree_id.startswith("T"):
            try:
                idx = int(tree_id[1:])
            except ValueError:
                raise KeyError(tree_id)
            if 0 <= idx < len(basis):
                return basis[idx]
        for t in basis:
            if format_tree(t, self.config.table) == tree_id:
                return t
        raise KeyError(f"unknown tree id {tree_id!r}; run `generate` to list ids")

    def name_map(self) -> dict:
        return {
            t.canonical_code(): format_tree(t, self.config.table)
            for t in self.basis()
        }

    # -- commands

    def cmd_generate(self) -> dict:
        table = self.config.table
        rows = []
        for i, t in enumerate(self.basis()):
            rows.append(
                {
                    "id": f"T{i}",
                    "tree": format_tree(t, table),
                    "edges": len(t.edge_items),
                    "homogeneity": frac_str(t.homogeneity(table)),
                }
            )
        return {"command": "generate", "count": len(rows), "trees": rows}

    def cmd_renormalize(self, tree_id: str) -> dict:
        table = self.config.table
        t = self.tree_by_id(tree_id)
        rep = counterterm_report(t, table, self.config.cum, names=self.name_map())
        residual_names = self.name_map()
        monos = []
        for m in rep.monomials:
            monos.append(
                {
                    "coeff": frac_str(m.coefficient),
                    "constants": list(m.constants),
                    "residual": residual_names.get(
                        m.residual.canonical_code(),
                        format_tree(m.residual, table),
                    ),
                }
            )
        return {
            "command": "renormalize",
            "tree": format_tree(t, table),
            "terms": monos,
        }

    def _gaussian_classes(self, t: DecoratedTree):
        table, cum = self.config.table, self.config.cum
        leaves = sorted(t.leaf_nodes(table))
        out = []
        for r in range(len(leaves) + 1):
            for kept in itertools.combinations(leaves, r):
                rest = [u for u in leaves if u not in kept]
                for pi in fo.leaf_partitions(t, table, cum, ground=rest):
                    out.append((frozenset(kept), pi))
        return out

    def cmd_certify(self, tree_id: str) -> dict:
        table, cum = self.config.table, self.config.cum
        t = self.tree_by_id(tree_id)
        cert = Certifier(
            table, cum, vertex_cap=int(self.config.caps["max_coalescence_vertices"])
        )
        rows = []
        ok = True
        for wick, pi in self._gaussian_classes(t):
            ci = CertificateInput(
                tree=t,
                wick=wick,
                pi=pi,
                m_small=frozenset(),
                m_big=frozenset(),
                g_small=frozenset(),
                g_big=frozenset(),
            )
            res = cert.certify(ci)
            rows.append(
                {
                    "wick": sorted(wick),
                    "pi": sorted(sorted(b) for b in pi),
                    "pass": res["pass"],
                    "alpha": frac_str(res["alpha"]) if res.get("alpha") is not None else None,
                    "violation": _violation_row(res.get("violation")),
                }
            )
            ok = ok and res["pass"]
        return {
            "command": "certify",
            "tree": format_tree(t, table),
            "pass": ok,
            "classes": rows,
        }

    def cmd_project(self, tree_id: str, scales_doc: str) -> dict:
        table, cum = self.config.table, self.config.cum
        t = self.tree_by_id(tree_id)
        spec = json.loads(scales_doc)
        pi = frozenset(frozenset(int(u) for u in b) for b in spec.get("pi", []))
        eu = ms.EdgeUniverse(t, table, pi)
        n = {}
        given = spec.get("scales", {})
        for tag in eu.all_tags():
            key = _tag_str(tag)
            if key not in given:
                raise ConfigError([f"scale assignment missing edge {key}"])
            n[tag] = int(given[key])
        univ = [s for s, _ in fo.div_enumerate(t, table, cum, effective=False)]
        compat = [
            s
            for s in univ
            if fo.compatible_partition(t, table, frozenset([s]), pi)
        ]
        family = fo.all_forests(compat, cap=int(self.config.caps["max_div"]))
        cuts = [e for e, _ in fo.cut_enumerate(t, table)]
        rows = []
        for f in family:
            safe = ms.safe_projection(eu, f, n)
            harv = ms.harvested_cuts(eu, f, cuts, n)
            rows.append(
                {
                    "forest": sorted(_sf_str(s) for s in f),
                    "safe": sorted(_sf_str(s) for s in safe),
                    "harvested_cuts": sorted(map(str, sorted(harv))),
                }
            )
        return {
            "command": "project",
            "tree": format_tree(t, table),
            "divergent_subtrees": sorted(_sf_str(s) for s in compat),
            "cuts": sorted(map(str, cuts)),
            "rows": rows,
        }

    def cmd_decompose(self, tree_id: str) -> dict:
        table, cum = self.config.table, self.config.cum
        t = self.tree_by_id(tree_id)
        classes = chaos_classes(t, table, cum)
        rows = []
        total = 0
        for c in classes:
            n_terms = sum(len(cs) for cs in c.cut_sets_per_forest)
            total += n_terms
            rows.append(
                {
                    "wick": sorted(c.wick),
                    "pi": sorted(sorted(b) for b in c.pi),
                    "forests": len(c.forests),
                    "summands": n_terms,
                }
            )
        return {
            "command": "decompose",
            "tree": format_tree(t, table),
            "classes": rows,
            "class_count": len(rows),
            "summand_count": total,
        }

    def cmd_export_dot(self, object_id: str) -> str:
        table, cum = self.config.table, self.config.cum
        if ":sigma:" in object_id:
            tree_id, _, sel = object_id.partition(":sigma:")
            t = self.tree_by_id(tree_id)
            divs = [s for s, _ in fo.div_enumerate(t, table, cum)]
            idx = [int(x) for x in sel.split(",") if x != ""]
            forest = frozenset(divs[i] for i in idx)
            sigma = fo.sigma_negative(t, forest)
            return sigma_to_dot(t, table, sigma)
        t = self.tree_by_id(object_id)
        return tree_to_dot(t, table, name="tree")


def _violation_row(v):
    if v is None:
        return None
    kind, a, lhs, rhs = v
    return {
        "condition": kind,
        "cluster_mask": int(a),
        "lhs": frac_str(lhs),
        "rhs": frac_str(rhs),
    }


def _tag_str(tag) -> str:
    kind, data = tag
    if kind == "K":
        return f"K:{data[0]},{data[1]}"
    if kind == "pi":
        return f"pi:{data[0]},{data[1]}"
    return f"star:{data}"


def _sf_str(s: SubForest) -> str:
    return "{" + ",".join(str(u) for u in sorted(s.nodes)) + "}"


# -- DOT export --------------------------------------------------------------------


def _node_style(color: int, is_root: bool) -> str:
    style = []
    if color == 1:
        style.append('style=filled, fillcolor="lightblue"')
    elif color == 2:
        style.append('style=filled, fillcolor="lightcoral"')
    if is_root:
        style.append("penwidth=3")
    return (", " + ", ".join(style)) if style else ""


def tree_to_dot(t: DecoratedTree, table: TypeTable, name: str = "tree") -> str:
    lines = [f"digraph {name} {{", "  rankdir=BT;", '  node [shape=circle, width=0.3];']
    for u in sorted(t.nodes):
        color = t.color_of_node(u)
        lines.append(
            f'  n{u} [label="{u}"{_node_style(color, u == t.root)}];'
        )
    for e, ty in t.edge_items:
        attrs = [f'label="{ty}"']
        if table.is_noise(ty):
            attrs.append("style=dashed")
        if t.color_of_edge(e) == 1:
            attrs.append('color="blue"')
        elif t.color_of_edge(e) == 2:
            attrs.append('color="red"')
        lines.append(f"  n{e[0]} -> n{e[1]} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def sigma_to_dot(t: DecoratedTree, table: TypeTable, sigma: tuple, name: str = "sigma") -> str:
    """A multi-cluster digraph for an i-forest given as undecorated pieces."""
    lines = [f"digraph {name} {{", "  rankdir=BT;", '  node [shape=circle, width=0.3];']
    for i, (nodes, edges, hat1, hat2) in enumerate(sigma):
        h1_nodes = set(hat1[0])
        h2_nodes = set(hat2[0])
        h1_edges = set(hat1[1])
        h2_edges = set(hat2[1])
        targets = {c for _, c in edges}
        roots = [u for u in nodes if u not in targets]
        lines.append(f"  subgraph cluster_{i} {{")
        lines.append(f'    label="component {i}";')
        for u in nodes:
            color = 2 if u in h2_nodes else (1 if u in h1_nodes else 0)
            lines.append(
                f'    c{i}n{u} [label="{u}"{_node_style(color, u in roots)}];'
            )
        for e in edges:
            ty = t.edge_type(e)
            attrs = [f'label="{ty}"']
            if table.is_noise(ty):
                attrs.append("style=dashed")
            if e in h2_edges:
                attrs.append('color="red"')
            elif e in h1_edges:
                attrs.append('color="blue"')
            lines.append(f"    c{i}n{e[0]} -> c{i}n{e[1]} [{', '.join(attrs)}];")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- reports -----------------------------------------------------------------------


def report_emit(result: dict | str) -> str:
    """Stable, schema-versioned JSON with deterministic key order."""
    if isinstance(result, str):
        return result
    body = {"schema_version": SCHEMA_VERSION}
    body.update(result)
    return json.dumps(body, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, Fraction):
        return frac_str(x)
    if isinstance(x, frozenset):
        return sorted(x, key=repr)
    raise TypeError(f"cannot serialize {type(x).__name__}")
