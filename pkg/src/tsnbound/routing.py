"""Fault-resilient topology synthesis and routing: cost function,
link-disjoint path search, greedy bridge selection, fault injection and a
replicated-network baseline."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction

import networkx as nx

from .gclsynth import GateSpec, SearchBudgetExceeded, feasible_schedule, fgcd
from .minplus import F

INF = math.inf
CONGESTION = Fraction(3, 2)


class RoutingError(ValueError):
    pass


class RoutingInfeasible(RoutingError):
    def __init__(self, message_id, found, wanted):
        self.message_id = message_id
        super().__init__(f"message {message_id}: only {found} of {wanted} disjoint paths exist")


@dataclass(frozen=True)
class Message:
    id: str
    src: str
    dst: str
    size_bytes: int
    period: Fraction  # ns
    tolerance: int = 1

    @property
    def bandwidth(self) -> Fraction:
        return Fraction(self.size_bytes) / F(self.period)


@dataclass(frozen=True)
class BridgeKind:
    name: str
    cost: Fraction
    ports: int


@dataclass
class RoutingProblem:
    ecus: list
    max_bridges: int
    library: list  # BridgeKind
    messages: list  # Message
    alpha: Fraction = Fraction(1)
    link_cost: Fraction = Fraction(1)
    rate: Fraction = Fraction(1, 10)  # bits/ns
    congestion: Fraction = CONGESTION
    step: Fraction = Fraction(1000)
    search_budget: int = 2000

    @property
    def bridges(self) -> list[str]:
        return [f"B_{i}" for i in range(1, self.max_bridges + 1)]

    def candidate_graph(self) -> nx.Graph:
        """Fully connected bridges, every end system linked to every bridge."""
        g = nx.Graph()
        g.add_nodes_from(self.ecus, kind="end-system")
        g.add_nodes_from(self.bridges, kind="switch")
        bs = self.bridges
        for i, a in enumerate(bs):
            for b in bs[i + 1:]:
                g.add_edge(a, b)
        for e in self.ecus:
            for b in bs:
                g.add_edge(e, b)
        return g


def link_key(a, b) -> tuple:
    return (a, b) if a <= b else (b, a)


def path_links(path) -> list[tuple]:
    return [link_key(a, b) for a, b in zip(path, path[1:])]


@dataclass
class Costs:
    c_cost: Fraction
    c_hops: int
    c_overlap: float  # 0 or inf
    alpha: Fraction

    @property
    def finite_part(self) -> Fraction:
        return self.c_cost + self.alpha * self.c_hops

    @property
    def total(self):
        return INF if self.c_overlap else self.finite_part


@dataclass
class DeliveryFailure:
    message_id: str
    failed: object


@dataclass
class RoutingSolution:
    bridges: set  # retained bridge ids
    links: set  # retained link keys
    routes: dict  # message id -> list of paths
    costs: Costs | None = None
    failures: list = field(default_factory=list)
    rerouted: list = field(default_factory=list)
    schedule_feasible: bool = True
    bridge_kinds: dict = field(default_factory=dict)

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_edges_from(self.links)
        return g


# --------------------------------------------------------------------------
# paths


def _shortest(adj, src, dst, weight):
    """Least-weight simple path; ties go to the lexicographically smallest
    node sequence."""
    heap = [(Fraction(0), (src,))]
    settled = {}
    while heap:
        d, path = heapq.heappop(heap)
        u = path[-1]
        if u == dst:
            return list(path), d
        if u in settled:
            continue
        settled[u] = d
        for v in adj.get(u, ()):
            if v in settled or v in path:
                continue
            heapq.heappush(heap, (d + weight[link_key(u, v)], path + (v,)))
    return None, None


def k_disjoint_paths(graph: nx.Graph, src, dst, k: int, weights=None,
                     congestion=CONGESTION, transit=None):
    """Up to k pairwise link-disjoint least-weight paths.

    After each accepted path its links are removed and the weights of links
    touching its interior nodes grow by ``congestion``. ``transit`` limits
    which nodes may appear inside a path (default: any). Returns
    (paths, complete).
    """
    if src == dst:
        raise RoutingError("source and destination must differ")
    if k < 1:
        raise RoutingError("k must be >= 1")
    w = {}
    for a, b, data in graph.edges(data=True):
        key = link_key(a, b)
        w[key] = F(weights[key]) if weights and key in weights else F(data.get("weight", 1))
    adj = {}
    for a, b in w:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    if transit is not None:
        for n in list(adj):
            if n not in transit and n not in (src, dst):
                for m in adj.pop(n):
                    if m in adj:
                        adj[m].discard(n)
    adj = {n: sorted(vs) for n, vs in adj.items()}
    paths = []
    for _ in range(k):
        p, _ = _shortest(adj, src, dst, w)
        if p is None:
            break
        paths.append(p)
        for a, b in zip(p, p[1:]):
            adj[a] = [x for x in adj[a] if x != b]
            adj[b] = [x for x in adj[b] if x != a]
        for n in p[1:-1]:
            for m in adj.get(n, ()):
                w[link_key(n, m)] *= F(congestion)
    return paths, len(paths) == k


# --------------------------------------------------------------------------
# cost


def bridge_kind_for(degree: int, library) -> BridgeKind | None:
    fits = [b for b in library if b.ports >= degree]
    if not fits:
        return None
    return min(fits, key=lambda b: (b.cost, b.ports, b.name))


def _quick_feasible(gates) -> bool:
    """Necessary conditions: utilization at most 1, and every pair fits
    inside the gcd of its periods."""
    if sum(g.length / g.period for g in gates) > 1:
        return False
    for i, a in enumerate(gates):
        for b in gates[i + 1:]:
            if a.length + b.length > fgcd(a.period, b.period):
                return False
    return True


def overlap_feasible(sol: RoutingSolution, problem: RoutingProblem) -> bool:
    """Whether every link admits an overlap-free gate placement for the
    message copies crossing it (each direction separately)."""
    msgs = {m.id: m for m in problem.messages}
    per_port: dict = {}
    for mid, paths in sorted(sol.routes.items()):
        m = msgs[mid]
        for i, p in enumerate(paths):
            for a, b in zip(p, p[1:]):
                per_port.setdefault((a, b), []).append((f"{mid}#{i}", m))
    for port, users in sorted(per_port.items()):
        gates = []
        for gid, m in users:
            length = Fraction(m.size_bytes * 8) / problem.rate
            length = math.ceil(length / problem.step) * problem.step
            gates.append(GateSpec(gid, F(m.period), length))
        if not _quick_feasible(gates):
            return False
        try:
            if feasible_schedule(gates, 1, problem.step, problem.search_budget) is None:
                return False
        except SearchBudgetExceeded:
            return False
    return True


def cost(sol: RoutingSolution, problem: RoutingProblem, check_overlap: bool = True) -> Costs:
    """Monetary cost of retained elements, alpha-weighted hop count, and the
    schedulability term (0 or infinity)."""
    g = sol.graph()
    c = Fraction(0)
    for b in sorted(sol.bridges):
        deg = g.degree(b) if b in g else 0
        kind = bridge_kind_for(deg, problem.library)
        c += kind.cost if kind else Fraction(10**9)
    c += F(problem.link_cost) * len(sol.links)
    hops = sum(len(p) - 1 for paths in sol.routes.values() for p in paths)
    over = 0
    if check_overlap and sol.routes:
        over = 0 if overlap_feasible(sol, problem) else INF
    return Costs(c, hops, over, F(problem.alpha))


# --------------------------------------------------------------------------
# synthesis


def _ordered(messages):
    return sorted(messages, key=lambda m: (-m.bandwidth, m.id))


def _route_all(problem: RoutingProblem, graph: nx.Graph, messages=None, tolerance_override=None):
    """Greedy routing: arc weights carry link cost, the hop weight and the
    activation cost of bridges not yet in use."""
    base_bridge = min(b.cost for b in problem.library)
    used_links: set = set()
    used_bridges: set = set()
    routes = {}
    bridges = set(problem.bridges)
    for m in _ordered(messages if messages is not None else problem.messages):
        k = tolerance_override or m.tolerance
        weights = {}
        for a, b in graph.edges():
            key = link_key(a, b)
            w = F(problem.alpha)
            if key not in used_links:
                w += F(problem.link_cost)
            for n in key:
                if n in bridges and n not in used_bridges:
                    w += base_bridge / 2
            weights[key] = w
        paths, ok = k_disjoint_paths(graph, m.src, m.dst, k, weights, problem.congestion,
                                     transit=bridges)
        if not ok:
            raise RoutingInfeasible(m.id, len(paths), k)
        routes[m.id] = paths
        for p in paths:
            used_links.update(path_links(p))
            used_bridges.update(n for n in p if n in bridges)
    return routes, used_bridges, used_links


def _solution(problem, routes, bridges, links, check_overlap) -> RoutingSolution:
    sol = RoutingSolution(set(bridges), set(links), routes)
    sol.costs = cost(sol, problem, check_overlap)
    sol.schedule_feasible = sol.costs.c_overlap == 0
    g = sol.graph()
    sol.bridge_kinds = {b: bridge_kind_for(g.degree(b), problem.library).name
                        for b in sorted(sol.bridges) if bridge_kind_for(g.degree(b), problem.library)}
    return sol


def synthesize_topology(problem: RoutingProblem, check_overlap: bool = True) -> RoutingSolution:
    """Greedy bridge/link selection followed by bridge-dropping passes that
    keep the cost finite and lower it."""
    for m in problem.messages:
        if m.src == m.dst:
            raise RoutingError(f"message {m.id}: source equals destination")
    graph = problem.candidate_graph()
    routes, bridges, links = _route_all(problem, graph)
    best = _solution(problem, routes, bridges, links, False)
    improved = True
    while improved:
        improved = False
        for b in sorted(best.bridges):
            g2 = graph.subgraph([n for n in graph if n != b and
                                 (n not in problem.bridges or n in best.bridges)])
            try:
                r2, b2, l2 = _route_all(problem, nx.Graph(g2))
            except RoutingInfeasible:
                continue
            cand = _solution(problem, r2, b2, l2, False)
            if cand.costs.finite_part < best.costs.finite_part:
                best, improved = cand, True
                break
    return _solution(problem, best.routes, best.bridges, best.links, check_overlap)


def nlr_baseline(problem: RoutingProblem, check_overlap: bool = True) -> RoutingSolution:
    """Replicated network: a tolerance-1 topology built once, then copied so
    each message gets one route per copy."""
    copies = max((m.tolerance for m in problem.messages), default=1)
    single = synthesize_topology(
        RoutingProblem(problem.ecus, problem.max_bridges, problem.library,
                       [Message(m.id, m.src, m.dst, m.size_bytes, m.period, 1)
                        for m in problem.messages],
                       problem.alpha, problem.link_cost, problem.rate, problem.congestion,
                       problem.step, problem.search_budget),
        check_overlap=False)

    def rename(n, c):
        return n if n in problem.ecus else f"{n}.{c}"

    bridges, links, routes = set(), set(), {}
    for c in range(copies):
        bridges.update(rename(b, c) for b in single.bridges)
        links.update(link_key(rename(a, c), rename(b, c)) for a, b in single.links)
    for m in problem.messages:
        p = single.routes[m.id][0]
        routes[m.id] = [[rename(n, c) for n in p] for c in range(max(1, m.tolerance))]
    sol = RoutingSolution(bridges, links, routes)
    sol.costs = cost(sol, problem, check_overlap)
    sol.schedule_feasible = sol.costs.c_overlap == 0
    return sol


def _uses(path, element) -> bool:
    if isinstance(element, tuple):
        return link_key(*element) in path_links(path)
    return element in path


def inject_fault_and_reroute(sol: RoutingSolution, failed, problem: RoutingProblem,
                             check_overlap: bool = True) -> RoutingSolution:
    """Drop a link (a, b) or a node; keep every surviving route, reroute
    messages left with none over the surviving elements, and record those
    that cannot be delivered."""
    is_link = isinstance(failed, tuple)
    if is_link and link_key(*failed) not in sol.links:
        raise RoutingError(f"link {failed} is not part of the solution")
    if not is_link and failed not in sol.bridges and failed not in problem.ecus:
        raise RoutingError(f"node {failed} is not part of the solution")
    links = {l for l in sol.links if (l != link_key(*failed) if is_link else failed not in l)}
    bridges = set(sol.bridges) - ({failed} if not is_link else set())
    g = nx.Graph()
    g.add_edges_from(links)
    routes, failures, rerouted = {}, [], []
    for mid in sorted(sol.routes):
        alive = [p for p in sol.routes[mid] if not _uses(p, failed)]
        if alive:
            routes[mid] = alive
            continue
        m = next(x for x in problem.messages if x.id == mid)
        paths = []
        if m.src in g and m.dst in g:
            paths, _ = k_disjoint_paths(g, m.src, m.dst, 1, None, problem.congestion,
                                        transit=bridges)
        if paths:
            routes[mid] = paths
            rerouted.append(mid)
        else:
            routes[mid] = []
            failures.append(DeliveryFailure(mid, failed))
    out = RoutingSolution(bridges, links, routes, failures=failures, rerouted=rerouted)
    live = RoutingSolution(bridges, links, {k: v for k, v in routes.items() if v})
    out.costs = cost(live, problem, check_overlap)
    out.schedule_feasible = out.costs.c_overlap == 0
    return out


def messages_from_table(rows, bytes_per_kb=1000) -> list[Message]:
    """(id, src, dst, size KB, period ms, tolerance) rows to messages."""
    out = []
    for mid, s, d, size_kb, per_ms, tol in rows:
        out.append(Message(mid, s, d, int(Fraction(str(size_kb)) * bytes_per_kb),
                           Fraction(str(per_ms)) * 10**6, int(tol)))
    return out
