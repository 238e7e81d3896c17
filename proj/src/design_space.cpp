#include "npudse/design_space.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace npudse::design {

std::string to_string(CompKind k) {
  switch (k) {
    case CompKind::ComputePe: return "compute_pe";
    case CompKind::Buffer: return "buffer";
    case CompKind::Dram: return "dram";
    case CompKind::NocLink: return "noc_link";
    case CompKind::Dma: return "dma";
    case CompKind::Controller: return "controller";
    case CompKind::Group: return "group";
  }
  return "?";
}

CompKind comp_kind_from_string(const std::string& s) {
  if (s == "compute_pe") return CompKind::ComputePe;
  if (s == "buffer") return CompKind::Buffer;
  if (s == "dram") return CompKind::Dram;
  if (s == "noc_link") return CompKind::NocLink;
  if (s == "dma") return CompKind::Dma;
  if (s == "controller") return CompKind::Controller;
  if (s == "group") return CompKind::Group;
  throw InputError("unknown component kind '" + s + "'");
}

bool ParamDomain::contains(long v) const {
  return std::binary_search(values.begin(), values.end(), v);
}

const ComponentDef& ComponentLibrary::get(const std::string& name) const {
  auto it = components.find(name);
  if (it == components.end())
    throw InputError("unknown component kind '" + name + "'");
  return it->second;
}

namespace {

ParamDomain parse_domain(const json& j, const std::string& ctx) {
  ParamDomain d;
  if (j.is_object() && j.contains("values")) {
    d.values = j["values"].get<std::vector<long>>();
  } else if (j.is_object() && j.contains("min")) {
    long lo = j["min"].get<long>(), hi = j["max"].get<long>();
    long step = j.value("step", 1L);
    if (step < 1) throw InputError(ctx + ": nonpositive step");
    for (long v = lo; v <= hi; v += step) d.values.push_back(v);
  } else if (j.is_array()) {
    d.values = j.get<std::vector<long>>();
  } else {
    throw InputError(ctx + ": parameter domain must be a value list or range");
  }
  std::sort(d.values.begin(), d.values.end());
  d.values.erase(std::unique(d.values.begin(), d.values.end()), d.values.end());
  if (d.values.empty()) throw InputError(ctx + ": empty parameter range");
  return d;
}

void check_costs(const Costs& c, const std::string& ctx) {
  for (double v : {c.area, c.energy_per_access, c.energy_per_op, c.latency, c.fit_rate})
    if (v < 0) throw InputError(ctx + ": negative cost");
  if (!(c.harden_fit_factor > 0 && c.harden_fit_factor <= 1))
    throw InputError(ctx + ": harden_fit_factor must be in (0,1]");
  if (c.harden_area_factor < 1)
    throw InputError(ctx + ": harden_area_factor must be >= 1");
}

}  // namespace

ComponentLibrary load_component_library(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed component library: ") + e.what());
  }
  if (require_field(j, "version", "library").get<int>() != 1)
    throw InputError("library: unsupported schema version");
  ComponentLibrary lib;
  for (const auto& jc : require_field(j, "components", "library")) {
    ComponentDef c;
    c.name = require_field(jc, "name", "component").get<std::string>();
    std::string ctx = "component '" + c.name + "'";
    if (lib.components.count(c.name))
      throw InputError("duplicate component kind '" + c.name + "'");
    c.kind = comp_kind_from_string(require_field(jc, "kind", ctx).get<std::string>());
    if (jc.contains("parameters"))
      for (const auto& [p, dom] : jc["parameters"].items())
        c.params[p] = parse_domain(dom, ctx + " param '" + p + "'");
    if (jc.contains("costs")) {
      const json& co = jc["costs"];
      c.costs.area = co.value("area", 0.0);
      c.costs.energy_per_access = co.value("energy_per_access", 0.0);
      c.costs.energy_per_op = co.value("energy_per_op", 0.0);
      c.costs.latency = co.value("latency", 1.0);
      c.costs.fit_rate = co.value("fit_rate", 0.0);
      c.costs.harden_area_factor = co.value("harden_area_factor", 1.0);
      c.costs.harden_fit_factor = co.value("harden_fit_factor", 1.0);
    }
    check_costs(c.costs, ctx);
    if (jc.contains("attributes"))
      for (const auto& [a, v] : jc["attributes"].items())
        c.attrs[a] = v.get<double>();
    lib.components[c.name] = std::move(c);
  }
  return lib;
}

std::string serialize_component_library(const ComponentLibrary& lib) {
  json j;
  j["version"] = 1;
  j["components"] = json::array();
  for (const auto& [name, c] : lib.components) {
    json jc;
    jc["name"] = name;
    jc["kind"] = to_string(c.kind);
    if (!c.params.empty()) {
      jc["parameters"] = json::object();
      for (const auto& [p, d] : c.params) jc["parameters"][p] = {{"values", d.values}};
    }
    jc["costs"] = {{"area", c.costs.area},
                   {"energy_per_access", c.costs.energy_per_access},
                   {"energy_per_op", c.costs.energy_per_op},
                   {"latency", c.costs.latency},
                   {"fit_rate", c.costs.fit_rate},
                   {"harden_area_factor", c.costs.harden_area_factor},
                   {"harden_fit_factor", c.costs.harden_fit_factor}};
    if (!c.attrs.empty()) {
      jc["attributes"] = json::object();
      for (const auto& [a, v] : c.attrs) jc["attributes"][a] = v;
    }
    j["components"].push_back(jc);
  }
  return j.dump(2);
}

namespace {

// Effective value of a node parameter: explicit param, else component
// attribute, else dflt.
long node_value(const Node& n, const ComponentLibrary& lib,
                const std::string& key, long dflt) {
  auto it = n.params.find(key);
  if (it != n.params.end()) return it->second;
  const auto& c = lib.get(n.component);
  auto at = c.attrs.find(key);
  if (at != c.attrs.end()) return static_cast<long>(at->second);
  return dflt;
}

void materialize_pes(FlowGraph& g, const std::string& group_id,
                     const std::string& pe_component, CompKind pe_kind,
                     long rows, long cols,
                     const std::map<std::string, long>& pe_params) {
  Node& grp = g.nodes.at(group_id);
  for (const auto& cid : grp.children) g.nodes.erase(cid);
  grp.children.clear();
  grp.params["rows"] = rows;
  grp.params["cols"] = cols;
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      Node pe;
      pe.id = group_id + ".pe_" + std::to_string(r) + "_" + std::to_string(c);
      pe.component = pe_component;
      pe.kind = pe_kind;
      pe.params = pe_params;
      pe.parent = group_id;
      grp.children.push_back(pe.id);
      g.nodes[pe.id] = std::move(pe);
    }
}

}  // namespace

FlowGraph build_flow_graph(const json& desc, const ComponentLibrary& lib) {
  FlowGraph g;
  for (const auto& jn : require_field(desc, "nodes", "flow graph")) {
    Node n;
    n.id = require_field(jn, "id", "flow graph node").get<std::string>();
    n.component = require_field(jn, "component", "node '" + n.id + "'").get<std::string>();
    const ComponentDef& c = lib.get(n.component);
    n.kind = c.kind;
    if (jn.contains("parameters"))
      for (const auto& [p, v] : jn["parameters"].items())
        n.params[p] = v.get<long>();
    if (jn.contains("hardened")) n.hardened = jn["hardened"].get<bool>();
    if (g.nodes.count(n.id)) throw InputError("duplicate node id '" + n.id + "'");
    std::string id = n.id;
    g.nodes[id] = std::move(n);
    if (jn.contains("replicate")) {
      const json& rep = jn["replicate"];
      long rows = require_field(rep, "rows", "replicate of '" + id + "'").get<long>();
      long cols = require_field(rep, "cols", "replicate of '" + id + "'").get<long>();
      if (rows < 1 || cols < 1)
        throw InputError("node '" + id + "': replication count must be >= 1");
      std::string of = require_field(rep, "of", "replicate of '" + id + "'").get<std::string>();
      const ComponentDef& pc = lib.get(of);
      std::map<std::string, long> pe_params;
      if (rep.contains("parameters"))
        for (const auto& [p, v] : rep["parameters"].items())
          pe_params[p] = v.get<long>();
      g.nodes[id].kind = CompKind::Group;
      materialize_pes(g, id, of, pc.kind, rows, cols, pe_params);
    }
  }
  for (const auto& je : desc.value("edges", json::array())) {
    Edge e;
    e.src = je.at(0).get<std::string>();
    e.dst = je.at(1).get<std::string>();
    if (!g.has_node(e.src) || !g.has_node(e.dst))
      throw InputError("dangling edge " + e.src + " -> " + e.dst);
    if (je.size() > 2) {
      e.bandwidth = je.at(2).get<double>();
    } else {
      e.bandwidth = static_cast<double>(
          node_value(g.nodes.at(e.src), lib, "bandwidth", 0));
    }
    g.edges.push_back(e);
  }
  if (desc.contains("root")) {
    g.root = desc["root"].get<std::string>();
  } else {
    for (const auto& [id, n] : g.nodes)
      if (n.kind == CompKind::Dram) { g.root = id; break; }
  }
  if (!g.root.empty() && !g.has_node(g.root))
    throw InputError("root node '" + g.root + "' not declared");
  return g;
}

FlowGraph build_flow_graph(const std::string& text, const ComponentLibrary& lib) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed flow-graph description: ") + e.what());
  }
  return build_flow_graph(j, lib);
}

std::string ValidationReport::to_string() const {
  std::string s;
  for (const auto& v : violations) {
    s += v.rule + ":";
    for (const auto& sub : v.subjects) s += " " + sub;
    if (!v.detail.empty()) s += " (" + v.detail + ")";
    s += "\n";
  }
  return s;
}

RuleSet parse_rules(const json& j) {
  RuleSet rs;
  auto parse_one = [](const json& jr, bool pruning) {
    Rule r;
    r.name = require_field(jr, "name", "rule").get<std::string>();
    r.pruning = pruning;
    std::string type = require_field(jr, "type", "rule '" + r.name + "'").get<std::string>();
    if (type == "uniform") {
      r.kind = Rule::Kind::Uniform;
      r.component = jr.at("component").get<std::string>();
      r.param = jr.at("param").get<std::string>();
    } else if (type == "compare") {
      r.kind = Rule::Kind::Compare;
      r.lhs = jr.at("lhs").get<std::string>();
      r.op = jr.at("op").get<std::string>();
      r.rhs = jr.at("rhs").get<std::string>();
    } else {
      throw InputError("rule '" + r.name + "': unknown type '" + type + "'");
    }
    return r;
  };
  for (const auto& jr : j.value("legality", json::array()))
    rs.legality.push_back(parse_one(jr, false));
  for (const auto& jr : j.value("pruning", json::array()))
    rs.pruning.push_back(parse_one(jr, true));
  return rs;
}

namespace {

double eval_side(const std::string& expr, const FlowGraph& g,
                 const std::string& rule) {
  if (!expr.empty() && (std::isdigit(expr[0]) || expr[0] == '-' || expr[0] == '.'))
    return std::stod(expr);
  if (expr == "pe_count") {
    long n = 0;
    for (const auto& [_, node] : g.nodes)
      if (node.kind == CompKind::ComputePe) ++n;
    return static_cast<double>(n);
  }
  auto dot = expr.find('.');
  if (dot == std::string::npos)
    throw InputError("rule '" + rule + "': bad expression '" + expr + "'");
  std::string id = expr.substr(0, dot), param = expr.substr(dot + 1);
  auto it = g.nodes.find(id);
  if (it == g.nodes.end()) return std::nan("");  // node absent in this topology
  auto pit = it->second.params.find(param);
  if (pit == it->second.params.end())
    throw InputError("rule '" + rule + "': node '" + id + "' has no param '" +
                     param + "'");
  return static_cast<double>(pit->second);
}

// nan on either side means the rule does not apply to this graph
bool rule_holds(const Rule& r, const FlowGraph& g, std::string* detail) {
  if (r.kind == Rule::Kind::Uniform) {
    std::optional<long> seen;
    std::vector<std::string> odd;
    for (const auto& [id, n] : g.nodes) {
      if (n.component != r.component) continue;
      auto it = n.params.find(r.param);
      if (it == n.params.end()) continue;
      if (!seen) {
        seen = it->second;
      } else if (*seen != it->second) {
        odd.push_back(id);
      }
    }
    if (!odd.empty() && detail)
      *detail = "nonuniform '" + r.param + "' across component '" + r.component + "'";
    return odd.empty();
  }
  double l = eval_side(r.lhs, g, r.name), rhs = eval_side(r.rhs, g, r.name);
  if (std::isnan(l) || std::isnan(rhs)) return true;
  bool ok = false;
  if (r.op == "<=") ok = l <= rhs;
  else if (r.op == "<") ok = l < rhs;
  else if (r.op == "==") ok = l == rhs;
  else if (r.op == "!=") ok = l != rhs;
  else if (r.op == ">=") ok = l >= rhs;
  else if (r.op == ">") ok = l > rhs;
  else throw InputError("rule '" + r.name + "': unknown op '" + r.op + "'");
  if (!ok && detail)
    *detail = r.lhs + " " + r.op + " " + r.rhs + " failed (" +
              std::to_string(l) + " vs " + std::to_string(rhs) + ")";
  return ok;
}

std::vector<std::string> rule_subjects(const Rule& r, const FlowGraph& g) {
  std::vector<std::string> subs;
  if (r.kind == Rule::Kind::Uniform) {
    for (const auto& [id, n] : g.nodes)
      if (n.component == r.component && n.params.count(r.param))
        subs.push_back(id);
  }
  return subs;
}

}  // namespace

ValidationReport check_legality(const FlowGraph& g, const RuleSet& rules,
                                const ComponentLibrary& lib) {
  ValidationReport rep;
  // reachability of compute nodes from the root memory
  std::set<std::string> reached;
  if (!g.root.empty()) {
    std::queue<std::string> q;
    q.push(g.root);
    reached.insert(g.root);
    while (!q.empty()) {
      std::string cur = q.front();
      q.pop();
      for (const auto& e : g.edges)
        if (e.src == cur && !reached.count(e.dst)) {
          reached.insert(e.dst);
          q.push(e.dst);
        }
      // entering a group reaches its children
      for (const auto& cid : g.nodes.at(cur).children)
        if (!reached.count(cid)) {
          reached.insert(cid);
          q.push(cid);
        }
    }
  }
  for (const auto& [id, n] : g.nodes) {
    if (n.kind == CompKind::ComputePe && !reached.count(id))
      rep.violations.push_back({"reachable_from_root", {id},
                                "no path from root memory"});
    if (n.kind == CompKind::Group && n.children.empty())
      rep.violations.push_back({"nonempty_group", {id}, "group has no members"});
    const ComponentDef& c = lib.get(n.component);
    for (const auto& [p, v] : n.params) {
      auto it = c.params.find(p);
      if (it != c.params.end() && !it->second.contains(v))
        rep.violations.push_back({"param_in_range", {id},
                                  "param '" + p + "' = " + std::to_string(v) +
                                      " outside declared range"});
    }
  }
  for (const auto& r : rules.legality) {
    std::string detail;
    if (!rule_holds(r, g, &detail))
      rep.violations.push_back({r.name, rule_subjects(r, g), detail});
  }
  return rep;
}

std::string ConfiguredDesign::id() const { return stable_hash(serialize_design(*this)); }

std::string serialize_design(const ConfiguredDesign& d) {
  json j;
  j["version"] = 1;
  j["topology"] = d.topology_sig;
  j["root"] = d.graph.root;
  j["nodes"] = json::object();
  for (const auto& [id, n] : d.graph.nodes) {
    json jn;
    jn["component"] = n.component;
    jn["kind"] = to_string(n.kind);
    jn["params"] = json::object();
    for (const auto& [p, v] : n.params) jn["params"][p] = v;
    jn["hardened"] = n.hardened;
    if (!n.children.empty()) jn["children"] = n.children;
    if (!n.parent.empty()) jn["parent"] = n.parent;
    j["nodes"][id] = jn;
  }
  std::vector<Edge> edges = d.graph.edges;
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
  });
  j["edges"] = json::array();
  for (const auto& e : edges)
    j["edges"].push_back({e.src, e.dst, e.bandwidth});
  return j.dump(2);
}

ConfiguredDesign parse_design(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed design document: ") + e.what());
  }
  ConfiguredDesign d;
  d.topology_sig = j.value("topology", std::string());
  d.graph.root = j.value("root", std::string());
  for (const auto& [id, jn] : require_field(j, "nodes", "design").items()) {
    Node n;
    n.id = id;
    n.component = jn.at("component").get<std::string>();
    n.kind = comp_kind_from_string(jn.at("kind").get<std::string>());
    const json jparams = jn.value("params", json::object());
    for (const auto& [p, v] : jparams.items()) n.params[p] = v.get<long>();
    n.hardened = jn.value("hardened", false);
    if (jn.contains("children")) n.children = jn["children"].get<std::vector<std::string>>();
    n.parent = jn.value("parent", std::string());
    d.graph.nodes[id] = std::move(n);
  }
  for (const auto& je : j.value("edges", json::array()))
    d.graph.edges.push_back({je.at(0).get<std::string>(),
                             je.at(1).get<std::string>(),
                             je.at(2).get<double>()});
  return d;
}

DesignSpaceSpec load_design_space(const json& j) {
  DesignSpaceSpec spec;
  if (require_field(j, "version", "design space").get<int>() != 1)
    throw InputError("design space: unsupported schema version");
  spec.library = load_component_library(require_field(j, "library", "design space").dump());
  const json& sk = require_field(j, "skeleton", "design space");
  if (sk.contains("dram"))
    spec.skeleton.dram_component = sk["dram"].at("component").get<std::string>();
  if (sk.contains("buffer_chain")) {
    spec.skeleton.buffer_component = sk["buffer_chain"].at("component").get<std::string>();
    spec.skeleton.buffer_depths = sk["buffer_chain"].at("depths").get<std::vector<long>>();
    std::sort(spec.skeleton.buffer_depths.begin(), spec.skeleton.buffer_depths.end());
  }
  if (sk.contains("array")) {
    spec.skeleton.pe_component = sk["array"].at("component").get<std::string>();
    spec.skeleton.rows_choices = sk["array"].at("rows").get<std::vector<long>>();
    spec.skeleton.cols_choices = sk["array"].at("cols").get<std::vector<long>>();
    std::sort(spec.skeleton.rows_choices.begin(), spec.skeleton.rows_choices.end());
    std::sort(spec.skeleton.cols_choices.begin(), spec.skeleton.cols_choices.end());
    for (long v : spec.skeleton.rows_choices)
      if (v < 1) throw InputError("skeleton: replication bound must be >= 1");
    for (long v : spec.skeleton.cols_choices)
      if (v < 1) throw InputError("skeleton: replication bound must be >= 1");
  }
  if (j.contains("rules")) spec.rules = parse_rules(j["rules"]);
  const json jcons = j.value("constraints", json::object());
  for (const auto& [m, v] : jcons.items()) {
    double b = v.get<double>();
    if (b <= 0) throw InputError("constraint '" + m + "': bound must be positive");
    spec.constraints.bounds[m] = b;
  }
  return spec;
}

DesignSpaceSpec load_design_space(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed design-space document: ") + e.what());
  }
  return load_design_space(j);
}

namespace {

FlowGraph skeleton_topology(const DesignSpaceSpec& spec, long depth) {
  const Skeleton& sk = spec.skeleton;
  const ComponentLibrary& lib = spec.library;
  json desc;
  desc["nodes"] = json::array();
  json dram = {{"id", "dram"}, {"component", sk.dram_component}};
  desc["nodes"].push_back(dram);
  std::string prev = "dram";
  json edges = json::array();
  for (long i = 1; i <= depth; ++i) {
    std::string id = "buf" + std::to_string(i);
    desc["nodes"].push_back({{"id", id}, {"component", sk.buffer_component}});
    edges.push_back({prev, id});
    prev = id;
  }
  json arr = {{"id", "array"},
              {"component", sk.pe_component},
              {"replicate",
               {{"of", sk.pe_component},
                {"rows", sk.rows_choices.front()},
                {"cols", sk.cols_choices.front()}}}};
  desc["nodes"].push_back(arr);
  edges.push_back({prev, "array"});
  desc["edges"] = edges;
  desc["root"] = "dram";
  FlowGraph g = build_flow_graph(desc, lib);
  // groups from the skeleton use the group kind but carry the pe component
  // name only for its children; give the group itself a group identity
  g.nodes.at("array").kind = CompKind::Group;
  return g;
}

std::string topology_signature(const FlowGraph& g, long depth) {
  return "dram>buf^" + std::to_string(depth) + ">array";
}

// default first-value assignment of each declared component param, used by
// the skeleton template before horizontal exploration
std::map<std::string, long> default_params(const ComponentDef& c) {
  std::map<std::string, long> p;
  for (const auto& [name, dom] : c.params) p[name] = dom.values.front();
  return p;
}

}  // namespace

std::vector<FlowGraph> enumerate_topologies(const DesignSpaceSpec& spec) {
  std::vector<FlowGraph> out;
  const Skeleton& sk = spec.skeleton;
  if (sk.dram_component.empty() || sk.pe_component.empty() ||
      sk.rows_choices.empty() || sk.cols_choices.empty())
    return out;
  std::vector<long> depths = sk.buffer_depths;
  if (depths.empty()) depths = {0};
  for (long depth : depths) {
    if (depth > 0 && sk.buffer_component.empty()) continue;
    FlowGraph g = skeleton_topology(spec, depth);
    // seed default params so built-in range checks and rules can evaluate
    for (auto& [id, n] : g.nodes)
      if (n.kind != CompKind::Group)
        for (const auto& [p, v] : default_params(spec.library.get(n.component)))
          if (!n.params.count(p)) n.params[p] = v;
    if (!check_legality(g, spec.rules, spec.library).ok()) continue;
    bool pruned = false;
    for (const auto& r : spec.rules.pruning) {
      // only topology-scoped pruning applies here; parameter-dependent rules
      // re-run during horizontal enumeration
      if (r.kind == Rule::Kind::Uniform && !rule_holds(r, g, nullptr)) pruned = true;
    }
    if (pruned) continue;
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<ConfiguredDesign> enumerate_hyperparameters(
    const FlowGraph& topo, const DesignSpaceSpec& spec) {
  const ComponentLibrary& lib = spec.library;
  const Skeleton& sk = spec.skeleton;

  struct Axis {
    std::string node;   // "" for array shape axes
    std::string param;  // "rows"/"cols" for array shape
    std::vector<long> values;
  };
  std::vector<Axis> axes;
  axes.push_back({"array", "rows", sk.rows_choices});
  axes.push_back({"array", "cols", sk.cols_choices});
  const ComponentDef& pec = lib.get(sk.pe_component);
  for (const auto& [p, dom] : pec.params)
    axes.push_back({"array.pe", p, dom.values});

  // storage chain outer-to-inner: dram, buf1, buf2, ...
  std::vector<std::string> chain;
  std::string cur = topo.root;
  while (!cur.empty()) {
    if (topo.nodes.at(cur).kind != CompKind::Group) chain.push_back(cur);
    std::string next;
    for (const auto& e : topo.edges)
      if (e.src == cur) { next = e.dst; break; }
    cur = next;
  }
  for (const auto& id : chain) {
    const Node& n = topo.nodes.at(id);
    for (const auto& [p, dom] : lib.get(n.component).params)
      axes.push_back({id, p, dom.values});
  }

  long depth = static_cast<long>(chain.size()) - 1;
  std::vector<ConfiguredDesign> out;
  std::vector<size_t> idx(axes.size(), 0);
  while (true) {
    ConfiguredDesign d;
    d.graph = topo;
    d.topology_sig = topology_signature(topo, depth);
    long rows = 0, cols = 0;
    std::map<std::string, long> pe_params;
    for (size_t a = 0; a < axes.size(); ++a) {
      long v = axes[a].values[idx[a]];
      if (axes[a].node == "array") {
        (axes[a].param == "rows" ? rows : cols) = v;
      } else if (axes[a].node == "array.pe") {
        pe_params[axes[a].param] = v;
      } else {
        d.graph.nodes.at(axes[a].node).params[axes[a].param] = v;
      }
    }
    materialize_pes(d.graph, "array", sk.pe_component, CompKind::ComputePe,
                    rows, cols, pe_params);
    // refresh edge bandwidths from the (possibly re-assigned) source params
    for (auto& e : d.graph.edges)
      e.bandwidth = static_cast<double>(
          node_value(d.graph.nodes.at(e.src), lib, "bandwidth", 0));
    bool keep = check_legality(d.graph, spec.rules, lib).ok();
    for (const auto& r : spec.rules.pruning)
      if (keep && !rule_holds(r, d.graph, nullptr)) keep = false;
    if (keep) out.push_back(std::move(d));
    // odometer, last axis fastest
    size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++idx[a] < axes[a].values.size()) break;
      idx[a] = 0;
      if (a == 0) return out;
    }
    if (axes.empty()) return out;
  }
}

double base_area(const ConfiguredDesign& d, const ComponentLibrary& lib) {
  double a = 0;
  for (const auto& [id, n] : d.graph.nodes) {
    const ComponentDef& c = lib.get(n.component);
    double unit = c.costs.area;
    if (n.kind == CompKind::Buffer)
      unit *= static_cast<double>(node_value(n, lib, "size_words", 1));
    if (n.kind == CompKind::Group) unit = 0;
    a += unit;
  }
  return a;
}

ConfiguredDesign harden(const ConfiguredDesign& d, double budget,
                        const std::map<std::string, double>& vulnerability,
                        const ComponentLibrary& lib) {
  if (budget < 0 || budget > 1) throw InputError("harden: budget must be in [0,1]");
  for (const auto& [id, s] : vulnerability)
    if (s < 0) throw InputError("harden: negative vulnerability score for '" + id + "'");
  ConfiguredDesign out = d;
  if (budget == 0) return out;
  double base = base_area(d, lib);
  std::vector<std::pair<double, std::string>> order;
  for (const auto& [id, n] : d.graph.nodes) {
    if (n.kind == CompKind::Group || n.hardened) continue;
    auto it = vulnerability.find(id);
    double score = (it != vulnerability.end()) ? it->second : 0.0;
    order.push_back({score, id});
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  double added = 0;
  for (const auto& [score, id] : order) {
    const Node& n = d.graph.nodes.at(id);
    const ComponentDef& c = lib.get(n.component);
    double unit = c.costs.area;
    if (n.kind == CompKind::Buffer)
      unit *= static_cast<double>(node_value(n, lib, "size_words", 1));
    double delta = unit * (c.costs.harden_area_factor - 1.0);
    if (added + delta <= budget * base + 1e-12) {
      out.graph.nodes.at(id).hardened = true;
      added += delta;
    }
  }
  return out;
}

Hierarchy extract_hierarchy(const ConfiguredDesign& d, const ComponentLibrary& lib) {
  Hierarchy h;
  std::string cur = d.graph.root;
  if (cur.empty()) throw InputError("design has no root memory node");
  while (!cur.empty()) {
    const Node& n = d.graph.nodes.at(cur);
    std::string next;
    double bw = 0;
    for (const auto& e : d.graph.edges)
      if (e.src == cur) { next = e.dst; bw = e.bandwidth; break; }
    if (n.kind == CompKind::Dram || n.kind == CompKind::Buffer) {
      MemLevel lvl;
      lvl.node_id = cur;
      const ComponentDef& c = lib.get(n.component);
      if (n.kind == CompKind::Dram) {
        lvl.capacity_words = node_value(n, lib, "capacity_words", -1);
      } else {
        lvl.capacity_words = node_value(n, lib, "size_words", 1);
      }
      lvl.bw_to_inner = bw;
      lvl.energy_per_access = c.costs.energy_per_access;
      h.levels.push_back(lvl);
    } else if (n.kind == CompKind::Group) {
      h.array.group_id = cur;
      h.array.rows = n.params.count("rows") ? n.params.at("rows") : 1;
      h.array.cols = n.params.count("cols") ? n.params.at("cols") : 1;
      if (!n.children.empty()) {
        const Node& pe = d.graph.nodes.at(n.children.front());
        const ComponentDef& c = lib.get(pe.component);
        h.array.macs_per_cycle = node_value(pe, lib, "macs_per_cycle", 1);
        h.array.regs_words = node_value(pe, lib, "regs_words", 3);
        h.array.row_accumulate = node_value(pe, lib, "row_accumulate", 0) != 0;
        h.array.col_accumulate = node_value(pe, lib, "col_accumulate", 0) != 0;
        h.array.energy_per_mac = c.costs.energy_per_op;
        h.array.energy_per_access = c.costs.energy_per_access;
      }
      break;
    }
    cur = next;
  }
  if (h.levels.empty())
    throw InputError("design has no storage level on the root chain");
  if (h.array.group_id.empty())
    throw InputError("design has no compute array on the root chain");
  return h;
}

}  // namespace npudse::design
